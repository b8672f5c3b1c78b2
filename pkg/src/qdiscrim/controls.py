"""Control fields: shape functions, guess families, fluence, CSV round-trip.

Fields are real samples on the grid intervals (midpoint convention), stored
as plain 1-D arrays of length n_steps; a full control set is a (3, n_steps)
array ordered (x, y, z).
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .dynamics import TimeGrid
from .validation import ValidationError, check_shape_function

__all__ = [
    "SHAPE_FLOOR",
    "ZeroGuess",
    "ConstantGuess",
    "CancelDriftGuess",
    "KickPairGuess",
    "SplitPeakGuess",
    "GuessSpec",
    "make_shape",
    "make_guess",
    "pulse_fluence",
    "total_fluence",
    "save_field_csv",
    "load_field_csv",
]

#: Smallest allowed shape-function value; keeps the update formula finite
#: while pinning the fields to their reference at the interval edges.
SHAPE_FLOOR = 1e-8

#: Pulse area of a calibrated kick lobe (a pi/2 rotation).
KICK_AREA = 0.5 * np.pi

#: Default Gaussian width of guess lobes as a fraction of the total time.
DEFAULT_WIDTH_FRACTION = 0.02


def make_shape(grid: TimeGrid, ramp_fraction: float = 0.05) -> np.ndarray:
    """Flat-top update shape: sin^2 ramps over ramp_fraction*T at both ends.

    Sampled at interval midpoints, floored at SHAPE_FLOOR so S > 0 holds
    everywhere.  ramp_fraction = 0 gives a constant 1.
    """
    if not 0.0 <= ramp_fraction <= 0.5:
        raise ValidationError(f"ramp_fraction must be in [0, 0.5], got {ramp_fraction}")
    t = grid.midpoints()
    if ramp_fraction == 0.0:
        return np.ones(grid.n_steps)
    t_ramp = ramp_fraction * grid.t_final
    s = np.ones(grid.n_steps)
    rising = t < t_ramp
    falling = t > grid.t_final - t_ramp
    s[rising] = np.sin(0.5 * np.pi * t[rising] / t_ramp) ** 2
    s[falling] = np.sin(0.5 * np.pi * (grid.t_final - t[falling]) / t_ramp) ** 2
    return check_shape_function(np.maximum(s, SHAPE_FLOOR), grid.n_steps)


@dataclass(frozen=True)
class ZeroGuess:
    """All-zero field."""


@dataclass(frozen=True)
class ConstantGuess:
    """Constant field of the given value."""

    value: float


@dataclass(frozen=True)
class CancelDriftGuess:
    """Constant -b, cancelling a known drift field b on the same axis."""

    b: float


@dataclass(frozen=True)
class KickPairGuess:
    """Two opposite-sign Gaussian lobes: an initial kick and its inverse.

    With amplitude=None each lobe is calibrated on the emitted samples so
    its time integral is -/+ pi/2: the first (negative) lobe rotates the
    equatorial initial state about the control axis towards |0><0|, the
    second undoes the rotation before the final measurement.  Widths are
    Gaussian sigmas; defaults are 2% of the total time with centers three
    sigmas inside the interval.
    """

    amplitude: float | None = None
    width: float | None = None
    center1: float | None = None
    center2: float | None = None

    def resolve(self, grid: TimeGrid) -> tuple[float, float, float]:
        width = self.width if self.width is not None else DEFAULT_WIDTH_FRACTION * grid.t_final
        if width <= 0:
            raise ValidationError(f"kick width must be positive, got {width}")
        c1 = self.center1 if self.center1 is not None else 3.0 * width
        c2 = self.center2 if self.center2 is not None else grid.t_final - 3.0 * width
        for c in (c1, c2):
            if not 0.0 <= c <= grid.t_final:
                raise ValidationError(f"kick center {c} outside [0, {grid.t_final}]")
        return width, c1, c2


@dataclass(frozen=True)
class SplitPeakGuess:
    """Single positive Gaussian lobe, by default early in the protocol.

    With amplitude=None the lobe is calibrated to pulse area pi/2 on the
    emitted samples.
    """

    amplitude: float | None = None
    width: float | None = None
    center: float | None = None

    def resolve(self, grid: TimeGrid) -> tuple[float, float]:
        width = self.width if self.width is not None else DEFAULT_WIDTH_FRACTION * grid.t_final
        if width <= 0:
            raise ValidationError(f"peak width must be positive, got {width}")
        center = self.center if self.center is not None else 3.0 * width
        if not 0.0 <= center <= grid.t_final:
            raise ValidationError(f"peak center {center} outside [0, {grid.t_final}]")
        return width, center


GuessSpec = Union[ZeroGuess, ConstantGuess, CancelDriftGuess, KickPairGuess, SplitPeakGuess]


def _gaussian_lobe(t: np.ndarray, center: float, width: float, t_final: float) -> np.ndarray:
    if center - 2.0 * width < 0.0 or center + 2.0 * width > t_final:
        warnings.warn(
            f"guess lobe at t={center:g} (width {width:g}) extends beyond "
            f"[0, {t_final:g}] and is truncated",
            stacklevel=3,
        )
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def make_guess(spec: GuessSpec, grid: TimeGrid) -> np.ndarray:
    """Field samples (length n_steps) for a guess specification.

    Deterministic: the same spec and grid always give bit-identical samples.
    """
    t = grid.midpoints()
    if isinstance(spec, ZeroGuess):
        return np.zeros(grid.n_steps)
    if isinstance(spec, ConstantGuess):
        return np.full(grid.n_steps, float(spec.value))
    if isinstance(spec, CancelDriftGuess):
        return np.full(grid.n_steps, -float(spec.b))
    if isinstance(spec, KickPairGuess):
        width, c1, c2 = spec.resolve(grid)
        lobe1 = _gaussian_lobe(t, c1, width, grid.t_final)
        lobe2 = _gaussian_lobe(t, c2, width, grid.t_final)
        if spec.amplitude is None:
            # Calibrate each lobe on its own half so the emitted samples
            # integrate to exactly -/+ pi/2.
            split = 0.5 * (c1 + c2)
            first = t < split
            a1 = KICK_AREA / max(np.sum(lobe1[first]) * grid.dt, np.finfo(float).tiny)
            a2 = KICK_AREA / max(np.sum(lobe2[~first]) * grid.dt, np.finfo(float).tiny)
        else:
            a1 = a2 = float(spec.amplitude)
        return -a1 * lobe1 + a2 * lobe2
    if isinstance(spec, SplitPeakGuess):
        width, center = spec.resolve(grid)
        lobe = _gaussian_lobe(t, center, width, grid.t_final)
        if spec.amplitude is None:
            amp = KICK_AREA / max(np.sum(lobe) * grid.dt, np.finfo(float).tiny)
        else:
            amp = float(spec.amplitude)
        return amp * lobe
    raise ValidationError(f"unknown guess spec {spec!r}")


def pulse_fluence(field, reference, shape, lam: float, grid: TimeGrid) -> float:
    """Running cost sum_j (lam / S_j) (E_j - E_j^ref)^2 dt for one control."""
    f = np.asarray(field, dtype=float)
    ref = np.asarray(reference, dtype=float)
    s = check_shape_function(shape, grid.n_steps)
    if f.shape != (grid.n_steps,) or ref.shape != (grid.n_steps,):
        raise ValidationError("field and reference must match the grid length")
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    return float(np.sum(lam / s * (f - ref) ** 2) * grid.dt)


def total_fluence(fields, grid: TimeGrid) -> float:
    """Integral of sum_k E_k(t)^2 dt over the protocol."""
    f = np.asarray(fields, dtype=float)
    return float(np.sum(f**2) * grid.dt)


def save_field_csv(path, grid: TimeGrid, samples) -> None:
    """Write one control field as two-column CSV (t_midpoint, value)."""
    f = np.asarray(samples, dtype=float)
    if f.shape != (grid.n_steps,):
        raise ValidationError("samples must match the grid length")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t_midpoint", "value"])
        for t, value in zip(grid.midpoints(), f):
            writer.writerow([f"{t:.15g}", f"{value:.15g}"])


def load_field_csv(path, grid: TimeGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column field CSV; returns (midpoints, samples)."""
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if [h.strip() for h in header] != ["t_midpoint", "value"]:
            raise ValidationError(f"{path} is not a field CSV (header {header})")
        for row in reader:
            rows.append((float(row[0]), float(row[1])))
    t = np.array([r[0] for r in rows])
    values = np.array([r[1] for r in rows])
    if grid is not None:
        if len(values) != grid.n_steps:
            raise ValidationError(
                f"{path} has {len(values)} samples, grid needs {grid.n_steps}"
            )
        if not np.allclose(t, grid.midpoints(), rtol=0.0, atol=1e-9 * max(grid.t_final, 1.0)):
            raise ValidationError(f"{path} midpoints do not match the grid")
    return t, values
