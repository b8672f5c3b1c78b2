import logging

import numpy as np
import pytest

from qdiscrim.algebra import dm_from_ket, from_bloch, zero_state
from qdiscrim.dynamics import DiscriminationProblem, LindbladSpec, TimeGrid, propagate_forward
from qdiscrim.protocols import (
    EffectiveDecayTime,
    FitError,
    MCurve,
    default_time_family,
    effective_m_gamma,
    fit_effective_time,
    m_analytic,
    m_numeric,
    qfi,
    qsl_time,
    ramsey_analytic,
    ramsey_m_curve,
)
from qdiscrim.validation import ValidationError

M_AT_SYMMETRIC_POINT = 0.6776030580551655  # 1 - sqrt(exp(-pi/2)/2)


def make_problem(delta_b, t_final, n_steps, noise, initial=None):
    kwargs = {"initial": initial} if initial is not None else {}
    return DiscriminationProblem(
        b=1.0, delta_b=delta_b, noise=noise, grid=TimeGrid(t_final, n_steps), **kwargs
    )


class TestQslTime:
    def test_values(self):
        assert qsl_time(0.011) == pytest.approx(285.599, abs=5e-3)
        assert qsl_time(np.pi) == pytest.approx(1.0, rel=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            qsl_time(0.0)

    def test_numeric_saturation_at_qsl(self):
        delta_b = 0.02
        problem = make_problem(delta_b, qsl_time(delta_b), 2000, LindbladSpec.none())
        result = ramsey_analytic(problem)
        assert result.d_hs[-1] == pytest.approx(1.0, abs=1e-6)


class TestRamseyAnalytic:
    @pytest.mark.parametrize("noise", [
        LindbladSpec.none(),
        LindbladSpec("relaxation", 1e-3),
        LindbladSpec("dephasing", 1e-3),
    ])
    def test_matches_numeric_propagation(self, noise):
        problem = make_problem(0.05, 250.0, 2500, noise)
        result = ramsey_analytic(problem)
        zero = np.zeros((3, 2500))
        traj1 = propagate_forward(problem, 1, zero)
        traj2 = propagate_forward(problem, 2, zero)
        from qdiscrim.algebra import bloch_stack, purity_stack, trace_distance_stack

        assert np.abs(result.d_tr - trace_distance_stack(traj1, traj2)).max() < 1e-6
        assert np.abs(result.purity_1 - purity_stack(traj1)).max() < 1e-6
        assert np.abs(result.bloch_2 - bloch_stack(traj2)).max() < 1e-6

    def test_d_hs_is_d_tr_squared(self):
        problem = make_problem(0.03, 100.0, 500, LindbladSpec("relaxation", 2e-3))
        result = ramsey_analytic(problem)
        assert np.abs(result.d_hs - result.d_tr**2).max() < 1e-12

    def test_dephasing_purity_approaches_half(self):
        problem = make_problem(0.01, 5000.0, 500, LindbladSpec("dephasing", 1e-3))
        result = ramsey_analytic(problem)
        assert result.purity_1[-1] == pytest.approx(0.5, abs=1e-4)
        assert result.purity_2[-1] == pytest.approx(0.5, abs=1e-4)

    def test_fallback_for_other_initial_state(self, caplog):
        problem = make_problem(
            0.05, 50.0, 500, LindbladSpec("relaxation", 1e-3), initial=zero_state()
        )
        with caplog.at_level(logging.WARNING, logger="qdiscrim.protocols"):
            result = ramsey_analytic(problem)
        assert any("numeric" in message for message in caplog.messages)
        # |0><0| never separates under drift-only dynamics.
        assert np.abs(result.d_tr).max() < 1e-12


class TestMAnalytic:
    def test_zero_gamma(self):
        assert m_analytic(0.3, 0.0) == 0.0

    def test_symmetric_point(self):
        assert m_analytic(0.07, 0.07) == pytest.approx(M_AT_SYMMETRIC_POINT, abs=1e-12)

    def test_limits(self):
        assert m_analytic(1.0, 1e-3) < 0.01  # delta_b/gamma = 1e3: near-perfect
        assert m_analytic(1e-3, 1.0) > 0.99  # delta_b/gamma = 1e-3: near-blind

    def test_matches_numeric_minimization_relaxation(self):
        for delta_b, gamma in [(0.01, 1e-3), (0.05, 1e-2), (0.002, 1e-3), (0.3, 1e-2)]:
            problem = make_problem(
                delta_b, qsl_time(delta_b), 4000, LindbladSpec("relaxation", gamma)
            )
            result = ramsey_analytic(problem)
            numeric = float(np.min(1.0 - result.d_tr))
            assert numeric == pytest.approx(m_analytic(delta_b, gamma), abs=1e-5)

    def test_matches_numeric_minimization_dephasing_factor_four(self):
        for delta_b, t2 in [(0.02, 1000.0), (0.1, 100.0)]:
            problem = make_problem(
                delta_b, qsl_time(delta_b), 4000, LindbladSpec.dephasing(t2)
            )
            result = ramsey_analytic(problem)
            numeric = float(np.min(1.0 - result.d_tr))
            assert numeric == pytest.approx(m_analytic(delta_b, 4.0 / t2), abs=1e-5)


class TestMNumeric:
    def test_identical_trajectories(self):
        traj = np.broadcast_to(zero_state(), (50, 2, 2)).copy()
        assert m_numeric(traj, traj) == pytest.approx(1.0)

    def test_perfect_splitting(self):
        delta_b = 0.04
        problem = make_problem(delta_b, qsl_time(delta_b), 1000, LindbladSpec.none())
        zero = np.zeros((3, 1000))
        t1 = propagate_forward(problem, 1, zero)
        t2 = propagate_forward(problem, 2, zero)
        assert m_numeric(t1, t2) == pytest.approx(0.0, abs=1e-6)

    def test_cross_oracle_with_analytic(self):
        delta_b, gamma = 0.02, 2e-3
        problem = make_problem(delta_b, qsl_time(delta_b), 4000,
                               LindbladSpec("relaxation", gamma))
        zero = np.zeros((3, 4000))
        t1 = propagate_forward(problem, 1, zero)
        t2 = propagate_forward(problem, 2, zero)
        assert m_numeric(t1, t2) == pytest.approx(m_analytic(delta_b, gamma), abs=1e-5)


class TestQfi:
    def test_identical_states(self):
        rho = from_bloch([0.2, 0.2, 0.1])
        assert qfi(rho, rho, 0.01) == pytest.approx(0.0, abs=1e-6)

    def test_phase_estimation_limit(self):
        # gamma = 0 Ramsey at time t: F_Q = t^2; oracle is the pure-state
        # overlap cos(delta_b t / 2).
        delta_b = 1e-3
        for t in (5.0, 40.0, 200.0):
            psi1 = dm_from_ket([1.0, np.exp(1j * (1.0 - delta_b / 2) * t)])
            psi2 = dm_from_ket([1.0, np.exp(1j * (1.0 + delta_b / 2) * t)])
            value = qfi(psi1, psi2, delta_b)
            assert value == pytest.approx(t**2, rel=1e-2)
            overlap = abs(np.cos(0.5 * delta_b * t))
            oracle = 4.0 * (2.0 - 2.0 * overlap) / delta_b**2
            assert value == pytest.approx(oracle, rel=1e-9)


class TestEffectiveDecayTimeFit:
    def test_self_fit_recovers_gamma(self):
        gamma0 = 1e-3
        db = np.geomspace(2e-4, 2e-2, 24)
        curve = MCurve(db, np.array([m_analytic(x, gamma0) for x in db]), gamma_label=gamma0)
        fit = fit_effective_time(curve, "relaxation")
        assert fit.gamma_eff == pytest.approx(gamma0, rel=1e-6)
        assert fit.ratio == pytest.approx(1.0, rel=1e-6)
        assert fit.residual < 1e-9

    def test_ratio_reports_effective_time(self):
        gamma0, factor = 1e-3, 2.4
        db = np.geomspace(2e-4, 2e-2, 24)
        m = np.array([m_analytic(x, gamma0 / factor) for x in db])
        fit = fit_effective_time(MCurve(db, m, gamma_label=gamma0), "relaxation")
        assert fit.ratio == pytest.approx(factor, rel=1e-6)

    def test_scale_covariance(self):
        gamma0 = 3e-3
        db = np.geomspace(1e-3, 0.5, 16)
        m = np.array([m_analytic(x, gamma0) for x in db])
        base = EffectiveDecayTime().fit(db, m)
        for c in (10.0, 0.01):
            scaled = EffectiveDecayTime().fit(c * db, m)
            assert scaled.gamma_eff_ == pytest.approx(c * base.gamma_eff_, rel=1e-8)

    def test_boundary_pinned_raises(self):
        db = np.geomspace(1e-3, 1e-1, 12)
        with pytest.raises(FitError):
            EffectiveDecayTime().fit(db, np.zeros(12))

    def test_underdetermined_rejected(self):
        with pytest.raises(ValidationError):
            EffectiveDecayTime().fit(np.array([1e-3, 2e-3, 3e-3]), np.zeros(3))
        db = np.linspace(1e-3, 2e-3, 8)  # less than a decade
        with pytest.raises(ValidationError):
            EffectiveDecayTime().fit(db, np.full(8, 0.3))


class TestCurveHelpers:
    def test_ramsey_m_curve_uses_convention(self):
        db = np.geomspace(1e-3, 1e-1, 8)
        relax = ramsey_m_curve(db, LindbladSpec.relaxation(1000.0))
        deph = ramsey_m_curve(db, LindbladSpec.dephasing(1000.0))
        assert relax.gamma_label == pytest.approx(1e-3)
        assert deph.gamma_label == pytest.approx(4e-3)
        assert np.all(deph.m_values >= relax.m_values)

    def test_effective_m_gamma(self):
        assert effective_m_gamma(LindbladSpec.relaxation(100.0)) == pytest.approx(0.01)
        assert effective_m_gamma(LindbladSpec.dephasing(100.0)) == pytest.approx(0.04)
        assert effective_m_gamma(LindbladSpec.none()) == 0.0

    def test_default_time_family_caps(self):
        family = default_time_family(0.011, decay_time=1000.0)
        assert family[0] == pytest.approx(0.5 * qsl_time(0.011))
        assert max(family) <= 10000.0
        assert family == sorted(family)

    def test_mcurve_validation(self):
        with pytest.raises(ValidationError):
            MCurve(np.array([0.1, -0.2]), np.array([0.1, 0.2]), gamma_label=1e-3)
        with pytest.raises(ValidationError):
            MCurve(np.array([0.1, 0.2]), np.array([0.1, 1.5]), gamma_label=1e-3)
