import numpy as np
import pytest

from qdiscrim.algebra import to_bloch
from qdiscrim.controls import (
    SHAPE_FLOOR,
    CancelDriftGuess,
    ConstantGuess,
    KickPairGuess,
    SplitPeakGuess,
    ZeroGuess,
    load_field_csv,
    make_guess,
    make_shape,
    pulse_fluence,
    save_field_csv,
)
from qdiscrim.dynamics import DiscriminationProblem, LindbladSpec, TimeGrid, propagate_forward
from qdiscrim.validation import ValidationError


class TestMakeShape:
    def test_zero_ramp_is_constant_one(self):
        grid = TimeGrid(10.0, 64)
        assert np.array_equal(make_shape(grid, 0.0), np.ones(64))

    def test_flat_top_profile(self):
        grid = TimeGrid(100.0, 1000)
        s = make_shape(grid, 0.1)
        assert s[0] < 0.01  # near the floor at the edge
        assert s[500] == pytest.approx(1.0)
        assert np.all(s >= SHAPE_FLOOR)
        assert np.all(s <= 1.0)

    def test_symmetric(self):
        grid = TimeGrid(37.0, 501)
        s = make_shape(grid, 0.13)
        assert np.abs(s - s[::-1]).max() < 1e-12

    def test_rejects_bad_ramp(self):
        with pytest.raises(ValidationError):
            make_shape(TimeGrid(1.0, 10), 0.7)


class TestMakeGuess:
    def test_zero(self):
        grid = TimeGrid(5.0, 20)
        assert np.array_equal(make_guess(ZeroGuess(), grid), np.zeros(20))

    def test_constant_and_cancel_drift(self):
        grid = TimeGrid(5.0, 20)
        assert np.array_equal(make_guess(ConstantGuess(0.25), grid), np.full(20, 0.25))
        assert np.array_equal(make_guess(CancelDriftGuess(b=1.0), grid), np.full(20, -1.0))

    def test_kick_pair_lobe_areas(self):
        grid = TimeGrid(1000.0, 4000)
        samples = make_guess(KickPairGuess(), grid)
        dt = grid.dt
        half = grid.n_steps // 2
        first_area = np.sum(samples[:half]) * dt
        second_area = np.sum(samples[half:]) * dt
        assert abs(first_area) == pytest.approx(np.pi / 2, abs=1e-6)
        assert abs(second_area) == pytest.approx(np.pi / 2, abs=1e-6)
        assert first_area == pytest.approx(-second_area, abs=1e-6)

    def test_kick_rotates_plus_towards_ground(self):
        # The first lobe alone (no drift, no noise) must carry |+><+| to
        # within Bloch distance 0.05 of |0><0|.
        grid = TimeGrid(1000.0, 4000)
        fields = np.zeros((3, grid.n_steps))
        fields[1] = make_guess(KickPairGuess(), grid)
        problem = DiscriminationProblem(
            b=0.0, delta_b=1e-9, noise=LindbladSpec.none(), grid=grid
        )
        traj = propagate_forward(problem, 1, fields)
        mid_bloch = to_bloch(traj[grid.n_steps // 2])
        assert np.linalg.norm(mid_bloch - np.array([0.0, 0.0, 1.0])) < 0.05
        # and the second lobe brings it back to the equator
        final_bloch = to_bloch(traj[-1])
        assert abs(final_bloch[2]) < 0.05

    def test_split_peak_area_and_sign(self):
        grid = TimeGrid(500.0, 2000)
        samples = make_guess(SplitPeakGuess(), grid)
        assert np.all(samples >= 0.0)
        assert np.sum(samples) * grid.dt == pytest.approx(np.pi / 2, abs=1e-6)

    def test_explicit_amplitude_respected(self):
        grid = TimeGrid(500.0, 2000)
        samples = make_guess(SplitPeakGuess(amplitude=0.2, width=10.0, center=100.0), grid)
        assert samples.max() == pytest.approx(0.2, rel=1e-3)

    def test_deterministic(self):
        grid = TimeGrid(700.0, 1234)
        spec = KickPairGuess(width=11.0)
        assert np.array_equal(make_guess(spec, grid), make_guess(spec, grid))

    def test_truncation_warning(self):
        grid = TimeGrid(100.0, 400)
        with pytest.warns(UserWarning, match="truncated"):
            make_guess(SplitPeakGuess(width=30.0, center=10.0), grid)

    def test_rejects_bad_geometry(self):
        grid = TimeGrid(100.0, 400)
        with pytest.raises(ValidationError):
            make_guess(KickPairGuess(width=-1.0), grid)
        with pytest.raises(ValidationError):
            make_guess(SplitPeakGuess(center=200.0), grid)


class TestPulseFluence:
    def test_zero_for_equal_fields(self):
        grid = TimeGrid(10.0, 50)
        field = np.linspace(0, 1, 50)
        shape = np.ones(50)
        assert pulse_fluence(field, field, shape, 2.0, grid) == 0.0

    def test_constant_offset(self):
        grid = TimeGrid(10.0, 1000)
        c, lam = 0.3, 1.7
        field = np.full(1000, c)
        ref = np.zeros(1000)
        shape = np.ones(1000)
        assert pulse_fluence(field, ref, shape, lam, grid) == pytest.approx(
            lam * c**2 * grid.t_final, rel=1e-12
        )

    def test_linear_in_lambda(self):
        grid = TimeGrid(4.0, 64)
        rng = np.random.default_rng(2)
        field = rng.normal(size=64)
        ref = rng.normal(size=64)
        shape = make_shape(grid, 0.1)
        full = pulse_fluence(field, ref, shape, 1.0, grid)
        assert pulse_fluence(field, ref, shape, 0.5, grid) == pytest.approx(0.5 * full)

    def test_nonnegative(self):
        grid = TimeGrid(4.0, 64)
        rng = np.random.default_rng(4)
        shape = make_shape(grid, 0.05)
        for _ in range(50):
            value = pulse_fluence(
                rng.normal(size=64), rng.normal(size=64), shape, 1.0, grid
            )
            assert value >= 0.0

    def test_rejects_nonpositive_lambda(self):
        grid = TimeGrid(4.0, 8)
        with pytest.raises(ValidationError):
            pulse_fluence(np.zeros(8), np.zeros(8), np.ones(8), 0.0, grid)


class TestFieldCsv:
    def test_roundtrip(self, tmp_path):
        grid = TimeGrid(25.0, 100)
        samples = make_guess(KickPairGuess(), grid)
        path = tmp_path / "field_y.csv"
        save_field_csv(path, grid, samples)
        t, loaded = load_field_csv(path, grid)
        assert t == pytest.approx(grid.midpoints(), rel=1e-14)
        assert loaded == pytest.approx(samples, rel=1e-14)

    def test_rejects_wrong_grid(self, tmp_path):
        grid = TimeGrid(25.0, 100)
        path = tmp_path / "field_y.csv"
        save_field_csv(path, grid, np.zeros(100))
        with pytest.raises(ValidationError):
            load_field_csv(path, TimeGrid(25.0, 99))

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValidationError):
            load_field_csv(path)
