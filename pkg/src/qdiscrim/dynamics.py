"""Lindblad dynamics of a driven qubit: superoperators and propagation.

The master equation is
    drho/dt = -i[H_d + H_c(t), rho] + gamma (L rho L+ - {L+L, rho}/2)
with drift H_d = B sigma_z / 2, control H_c = (Ex sigma_x + Ey sigma_y +
Ez sigma_z)/2 and a single noise channel (relaxation L = |0><1| or pure
dephasing L = sigma_z).

Superoperators act on column-stacked density matrices, vec(rho) =
rho.flatten(order='F'), in which convention vec(A rho B) = (B^T kron A)
vec(rho) and the adjoint generator is the conjugate transpose of the 4x4
matrix.  Each time step applies the exact exponential of the superoperator
with the fields frozen at their interval value, so constant-field dynamics
is exact and the only discretization error is the piecewise-constant field
representation itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import IDENTITY, PAULIS, SIGMA_Z, plus_state
from .validation import (
    ValidationError,
    check_complex_matrix,
    check_control_fields,
    check_density_matrix,
)

__all__ = [
    "TimeGrid",
    "LindbladSpec",
    "DiscriminationProblem",
    "PropagationError",
    "liouvillian_matrix",
    "liouvillian_apply",
    "liouvillian_stack",
    "expm_stack",
    "propagator_stack",
    "propagate_forward",
    "propagate_backward",
    "check_cptp_trajectory",
    "CONTROL_DERIVATIVE_SUPEROPS",
    "TRACE_PRESERVATION_ATOL",
    "POSITIVITY_FLOOR",
    "PROPAGATION_HERMITICITY_ATOL",
]

#: Tolerances for CPTP sanity checks along propagated trajectories.
TRACE_PRESERVATION_ATOL = 1e-10
POSITIVITY_FLOOR = -1e-10
PROPAGATION_HERMITICITY_ATOL = 1e-10

NOISE_KINDS = ("relaxation", "dephasing", "none")


class PropagationError(RuntimeError):
    """Propagation produced a non-finite state."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_final] with n_steps intervals.

    States and co-states live on the n_steps + 1 grid points; fields and
    shape functions live on the n_steps intervals (midpoint convention).
    """

    t_final: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            raise ValidationError(f"t_final must be positive, got {self.t_final}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    def times(self) -> np.ndarray:
        """Grid points t_j = j dt, length n_steps + 1."""
        return np.linspace(0.0, self.t_final, self.n_steps + 1)

    def midpoints(self) -> np.ndarray:
        """Interval midpoints, length n_steps."""
        return (np.arange(self.n_steps) + 0.5) * self.dt

    @classmethod
    def with_default_steps(
        cls,
        t_final: float,
        delta_b: float,
        gamma: float = 0.0,
        points_per_unit: float = 10.0,
    ) -> "TimeGrid":
        """Default resolution policy: at least `points_per_unit` steps per unit
        time, 50 steps per precession period 2 pi / delta_b, and 100 steps
        across a decay time 1/gamma."""
        per_unit = max(
            points_per_unit,
            50.0 * delta_b / (2.0 * np.pi),
            100.0 * gamma,
        )
        return cls(t_final, max(1, int(np.ceil(t_final * per_unit))))


@dataclass(frozen=True)
class LindbladSpec:
    """A single noise channel: relaxation (L = |0><1|, gamma = 1/T1), pure
    dephasing (L = sigma_z, gamma = 1/T2), or none.

    Exactly one channel is supported at a time; combined T1 + T2 noise is
    out of scope and cannot be expressed.
    """

    kind: str
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(
                f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}"
            )
        if not (np.isfinite(self.rate) and self.rate >= 0.0):
            raise ValidationError(f"noise rate must be >= 0, got {self.rate}")
        if self.kind == "none" and self.rate != 0.0:
            raise ValidationError("noise kind 'none' requires rate 0")

    @classmethod
    def relaxation(cls, t1: float) -> "LindbladSpec":
        return cls("relaxation", 1.0 / t1)

    @classmethod
    def dephasing(cls, t2: float) -> "LindbladSpec":
        return cls("dephasing", 1.0 / t2)

    @classmethod
    def none(cls) -> "LindbladSpec":
        return cls("none", 0.0)

    def lindblad_operator(self) -> np.ndarray | None:
        if self.kind == "relaxation":
            return np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |0><1|
        if self.kind == "dephasing":
            return SIGMA_Z.copy()
        return None


@dataclass(frozen=True)
class DiscriminationProblem:
    """Pair of drift hypotheses (B -/+ delta_b/2) sigma_z/2 with shared
    controls, noise channel, initial state and time grid."""

    b: float
    delta_b: float
    noise: LindbladSpec
    grid: TimeGrid
    initial: np.ndarray = field(default_factory=plus_state)

    def __post_init__(self):
        if not (np.isfinite(self.delta_b) and self.delta_b > 0):
            raise ValidationError(f"delta_b must be positive, got {self.delta_b}")
        if not np.isfinite(self.b):
            raise ValidationError("b must be finite")
        object.__setattr__(self, "initial", check_density_matrix(self.initial, "initial"))

    def field_value(self, which: int) -> float:
        if which not in (1, 2):
            raise ValidationError(f"which must be 1 or 2, got {which}")
        return self.b + (0.5 if which == 2 else -0.5) * self.delta_b

    def drift(self, which: int) -> np.ndarray:
        """Drift Hamiltonian (B -/+ delta_b/2) sigma_z / 2."""
        return 0.5 * self.field_value(which) * SIGMA_Z


def _vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho, dtype=complex).flatten(order="F")


def _unvec(v: np.ndarray) -> np.ndarray:
    return v.reshape(2, 2, order="F")


def _hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    """-i (I kron H - H^T kron I)."""
    return -1.0j * (np.kron(IDENTITY, h) - np.kron(h.T, IDENTITY))


def _dissipator_superop(noise: LindbladSpec) -> np.ndarray:
    lop = noise.lindblad_operator()
    if lop is None or noise.rate == 0.0:
        return np.zeros((4, 4), dtype=complex)
    ldl = lop.conj().T @ lop
    return noise.rate * (
        np.kron(lop.conj(), lop)
        - 0.5 * np.kron(IDENTITY, ldl)
        - 0.5 * np.kron(ldl.T, IDENTITY)
    )


#: d(Liouvillian)/d(E_k): the superoperator of rho -> -i/2 [sigma_k, rho],
#: shape (3, 4, 4).  Independent of the field values.
CONTROL_DERIVATIVE_SUPEROPS = np.stack(
    [_hamiltonian_superop(0.5 * p) for p in PAULIS]
)


def liouvillian_matrix(drift, controls, noise: LindbladSpec) -> np.ndarray:
    """4x4 generator for drift + instantaneous control values (Ex, Ey, Ez)."""
    h = check_complex_matrix(drift, "drift")
    c = np.asarray(controls, dtype=float)
    if c.shape != (3,):
        raise ValidationError(f"controls must be a real 3-vector, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValidationError("controls contain non-finite values")
    gen = _hamiltonian_superop(h) + _dissipator_superop(noise)
    gen = gen + np.tensordot(c, CONTROL_DERIVATIVE_SUPEROPS, axes=(0, 0))
    return gen


def liouvillian_apply(drift, controls, noise: LindbladSpec, state) -> np.ndarray:
    """Right-hand side of the master equation at one instant."""
    m = check_complex_matrix(state, "state")
    return _unvec(liouvillian_matrix(drift, controls, noise) @ _vec(m))


def liouvillian_stack(drift, fields: np.ndarray, noise: LindbladSpec) -> np.ndarray:
    """Generators for every interval of a piecewise-constant field, (n, 4, 4)."""
    h = check_complex_matrix(drift, "drift")
    base = _hamiltonian_superop(h) + _dissipator_superop(noise)
    return base[None, :, :] + np.einsum(
        "kj,kab->jab", np.asarray(fields, dtype=float), CONTROL_DERIVATIVE_SUPEROPS
    )


# Pade-13 coefficients for the scaling-and-squaring matrix exponential.
_PADE13 = np.array(
    [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ]
)
_PADE13_THETA = 5.371920351148152


def expm_stack(mats: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack (..., n, n) via batched Pade-13.

    One scaling power is chosen for the whole stack, so the result is
    machine-accurate and the heavy lifting stays in batched matmuls.
    """
    a = np.asarray(mats, dtype=complex)
    norm = np.abs(a).sum(axis=-2).max(axis=-1)
    max_norm = float(norm.max()) if norm.size else 0.0
    squarings = 0
    if max_norm > _PADE13_THETA:
        squarings = int(np.ceil(np.log2(max_norm / _PADE13_THETA)))
        a = a / (2.0 ** squarings)
    eye = np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape)
    b = _PADE13
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye
    )
    out = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        out = out @ out
    return out


def propagator_stack(problem: DiscriminationProblem, which: int, fields) -> np.ndarray:
    """Per-interval propagators exp(L_j dt) for one drift hypothesis, (n, 4, 4).

    Constant fields collapse to a single exponential broadcast over the grid.
    """
    f = check_control_fields(fields, problem.grid.n_steps)
    gens = liouvillian_stack(problem.drift(which), f, problem.noise)
    dt = problem.grid.dt
    if problem.grid.n_steps > 1 and np.all(f == f[:, :1]):
        single = expm_stack(gens[:1] * dt)[0]
        return np.broadcast_to(single, gens.shape)
    return expm_stack(gens * dt)


def _sweep(props: np.ndarray, start: np.ndarray, adjoint: bool, label: str) -> np.ndarray:
    n = props.shape[0]
    out = np.empty((n + 1, 2, 2), dtype=complex)
    if adjoint:
        v = _vec(start)
        out[n] = start
        for j in range(n - 1, -1, -1):
            v = props[j].conj().T @ v
            if not np.all(np.isfinite(v.view(float))):
                raise PropagationError(f"{label} produced non-finite state at step {j}")
            out[j] = _unvec(v)
    else:
        v = _vec(start)
        out[0] = start
        for j in range(n):
            v = props[j] @ v
            if not np.all(np.isfinite(v.view(float))):
                raise PropagationError(f"{label} produced non-finite state at step {j}")
            out[j + 1] = _unvec(v)
    return out


def propagate_forward(
    problem: DiscriminationProblem,
    which: int,
    fields,
    check_cptp: bool = False,
) -> np.ndarray:
    """Evolve the problem's initial state under one drift hypothesis.

    Returns the trajectory rho(t_j), shape (n_steps + 1, 2, 2).  With
    check_cptp=True the whole trajectory is verified against the trace,
    Hermiticity and positivity tolerances.
    """
    props = propagator_stack(problem, which, fields)
    traj = _sweep(props, problem.initial, adjoint=False, label="forward propagation")
    final_trace_dev = abs(np.trace(traj[-1]) - 1.0)
    if final_trace_dev > TRACE_PRESERVATION_ATOL:
        raise PropagationError(
            f"trace deviates by {final_trace_dev:.3e} at final time"
        )
    if check_cptp:
        check_cptp_trajectory(traj)
    return traj


def propagate_backward(
    problem: DiscriminationProblem,
    which: int,
    fields,
    terminal,
) -> np.ndarray:
    """Propagate a co-state backwards with the adjoint generator.

    Each step applies the conjugate transpose of the forward step matrix,
    which keeps the pairing <chi(t), rho(t)> exactly constant along matched
    trajectories.  Returns chi(t_j), shape (n_steps + 1, 2, 2).
    """
    chi = check_complex_matrix(terminal, "terminal")
    props = propagator_stack(problem, which, fields)
    return _sweep(props, chi, adjoint=True, label="backward propagation")


def check_cptp_trajectory(traj: np.ndarray) -> None:
    """Assert trace preservation, Hermiticity and positivity along a trajectory."""
    traces = np.einsum("jaa->j", traj)
    worst_trace = np.abs(traces - 1.0).max()
    if worst_trace > TRACE_PRESERVATION_ATOL:
        raise PropagationError(f"trace deviates by {worst_trace:.3e} along trajectory")
    herm_dev = np.abs(traj - np.conj(np.swapaxes(traj, -1, -2))).max()
    if herm_dev > PROPAGATION_HERMITICITY_ATOL:
        raise PropagationError(f"Hermiticity deviates by {herm_dev:.3e} along trajectory")
    eigs = np.linalg.eigvalsh(0.5 * (traj + np.conj(np.swapaxes(traj, -1, -2))))
    if eigs.min() < POSITIVITY_FLOOR:
        raise PropagationError(f"negative eigenvalue {eigs.min():.3e} along trajectory")
