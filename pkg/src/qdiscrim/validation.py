"""Input validation helpers for states, co-states, Bloch vectors and fields.

All numerical slack used by state-level checks lives here as module-level
constants, so there is a single source of truth that tests can reference
or override.
"""
from __future__ import annotations

import numpy as np

#: Max-abs entrywise deviation from Hermiticity tolerated in a density matrix.
HERMITICITY_ATOL = 1e-12
#: Tolerated deviation of the trace from one.
TRACE_ATOL = 1e-12
#: Eigenvalue floor for positive semidefiniteness; round-off can push
#: eigenvalues of propagated states slightly negative.
EIGENVALUE_FLOOR = -1e-12
#: Slack on the Bloch-ball radius.
BLOCH_NORM_ATOL = 1e-12


class ValidationError(ValueError):
    """An input failed a structural or numerical-range check."""


def check_complex_matrix(matrix, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite complex 2x2 ndarray."""
    m = np.asarray(matrix, dtype=complex)
    if m.shape != (2, 2):
        raise ValidationError(f"{name} must be 2x2, got shape {m.shape}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValidationError(f"{name} contains non-finite entries")
    return m


def check_density_matrix(
    rho,
    name: str = "rho",
    hermiticity_atol: float = HERMITICITY_ATOL,
    trace_atol: float = TRACE_ATOL,
    eigenvalue_floor: float = EIGENVALUE_FLOOR,
) -> np.ndarray:
    """Validate a qubit density matrix: Hermitian, unit trace, PSD."""
    m = check_complex_matrix(rho, name)
    herm_dev = np.abs(m - m.conj().T).max()
    if herm_dev > hermiticity_atol:
        raise ValidationError(
            f"{name} is not Hermitian (max deviation {herm_dev:.3e})"
        )
    trace_dev = abs(np.trace(m) - 1.0)
    if trace_dev > trace_atol:
        raise ValidationError(f"{name} has trace deviating by {trace_dev:.3e}")
    eigs = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if eigs.min() < eigenvalue_floor:
        raise ValidationError(
            f"{name} is not positive semidefinite (min eigenvalue {eigs.min():.3e})"
        )
    return m


def check_costate(chi, name: str = "chi") -> np.ndarray:
    """Validate a co-state matrix: Hermitian, arbitrary trace."""
    m = check_complex_matrix(chi, name)
    herm_dev = np.abs(m - m.conj().T).max()
    if herm_dev > HERMITICITY_ATOL:
        raise ValidationError(
            f"{name} is not Hermitian (max deviation {herm_dev:.3e})"
        )
    return m


def check_bloch_vector(r, name: str = "r") -> np.ndarray:
    """Validate a real 3-vector inside the Bloch ball (up to slack)."""
    v = np.asarray(r, dtype=float)
    if v.shape != (3,):
        raise ValidationError(f"{name} must be a real 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite entries")
    norm = float(np.linalg.norm(v))
    if norm > 1.0 + BLOCH_NORM_ATOL:
        raise ValidationError(f"{name} has norm {norm:.12f} > 1")
    return v


def check_control_fields(fields, n_steps: int, name: str = "fields") -> np.ndarray:
    """Validate a (3, n_steps) array of real field samples on intervals."""
    f = np.asarray(fields, dtype=float)
    if f.shape != (3, n_steps):
        raise ValidationError(
            f"{name} must have shape (3, {n_steps}), got {f.shape}"
        )
    if not np.all(np.isfinite(f)):
        raise ValidationError(f"{name} contains non-finite samples")
    return f


def check_shape_function(shape, n_steps: int, name: str = "shape") -> np.ndarray:
    """Validate shape-function samples: values in (0, 1], one per interval."""
    s = np.asarray(shape, dtype=float)
    if s.shape != (n_steps,):
        raise ValidationError(f"{name} must have shape ({n_steps},), got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValidationError(f"{name} contains non-finite samples")
    if s.min() <= 0.0 or s.max() > 1.0:
        raise ValidationError(f"{name} values must lie in (0, 1]")
    return s
