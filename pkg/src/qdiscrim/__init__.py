"""qdiscrim: optimal-control toolkit for qubit state discrimination.

Simulates a qubit evolving under two drift hypotheses (B -/+ delta_b/2)
sigma_z/2 with shared control fields and a single noise channel, optimizes
the controls for maximal final-state distinguishability, and computes the
discrimination/estimation figures of merit against closed-form Ramsey
baselines.
"""
from .algebra import (
    bures_distance,
    from_bloch,
    hilbert_schmidt_distance,
    minus_state,
    one_state,
    plus_state,
    purity,
    state_fidelity,
    success_probability,
    to_bloch,
    trace_distance,
    zero_state,
)
from .controls import (
    CancelDriftGuess,
    ConstantGuess,
    KickPairGuess,
    SplitPeakGuess,
    ZeroGuess,
    make_guess,
    make_shape,
    pulse_fluence,
)
from .dynamics import (
    DiscriminationProblem,
    LindbladSpec,
    PropagationError,
    TimeGrid,
    liouvillian_apply,
    propagate_backward,
    propagate_forward,
)
from .krotov import (
    KrotovError,
    KrotovOptimizer,
    costate_terminal,
    evaluate_jt,
    field_update_sweep,
    jt_gradient,
)
from .protocols import (
    EffectiveDecayTime,
    EffectiveTimeFit,
    FitError,
    MCurve,
    RamseyResult,
    default_time_family,
    fit_effective_time,
    m_analytic,
    m_numeric,
    qfi,
    qsl_time,
    ramsey_analytic,
    ramsey_m_curve,
)
from .validation import ValidationError

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ValidationError",
    "trace_distance",
    "hilbert_schmidt_distance",
    "bures_distance",
    "state_fidelity",
    "purity",
    "success_probability",
    "to_bloch",
    "from_bloch",
    "zero_state",
    "one_state",
    "plus_state",
    "minus_state",
    "TimeGrid",
    "LindbladSpec",
    "DiscriminationProblem",
    "PropagationError",
    "liouvillian_apply",
    "propagate_forward",
    "propagate_backward",
    "ZeroGuess",
    "ConstantGuess",
    "CancelDriftGuess",
    "KickPairGuess",
    "SplitPeakGuess",
    "make_shape",
    "make_guess",
    "pulse_fluence",
    "KrotovOptimizer",
    "KrotovError",
    "evaluate_jt",
    "costate_terminal",
    "field_update_sweep",
    "jt_gradient",
    "qsl_time",
    "ramsey_analytic",
    "m_analytic",
    "m_numeric",
    "qfi",
    "MCurve",
    "RamseyResult",
    "ramsey_m_curve",
    "EffectiveDecayTime",
    "EffectiveTimeFit",
    "FitError",
    "fit_effective_time",
    "default_time_family",
]
