"""Qubit states, Pauli algebra, and distance/information measures.

Conventions: basis ordering (|0>, |1>) with sigma_z = diag(1, -1), so the
Bloch vector of |0><0| is (0, 0, 1).  All inputs are validated density
matrices unless stated otherwise; all functions are pure.
"""
from __future__ import annotations

import numpy as np

from .validation import check_bloch_vector, check_density_matrix

__all__ = [
    "IDENTITY",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "PAULIS",
    "zero_state",
    "one_state",
    "plus_state",
    "minus_state",
    "dm_from_ket",
    "to_bloch",
    "from_bloch",
    "trace_distance",
    "hilbert_schmidt_distance",
    "state_fidelity",
    "bures_distance",
    "purity",
    "success_probability",
    "BURES_RADICAND_FLOOR",
]

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
#: Stack (sigma_x, sigma_y, sigma_z), shape (3, 2, 2).
PAULIS = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

#: Radicands (determinant product, squared fidelity, squared distance) this
#: negative are treated as round-off and clamped to zero; anything below is
#: an error in the inputs.
BURES_RADICAND_FLOOR = -1e-12


def dm_from_ket(ket) -> np.ndarray:
    """Density matrix |psi><psi| of a (normalized) state vector."""
    psi = np.asarray(ket, dtype=complex).reshape(2)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def zero_state() -> np.ndarray:
    return dm_from_ket([1.0, 0.0])


def one_state() -> np.ndarray:
    return dm_from_ket([0.0, 1.0])


def plus_state() -> np.ndarray:
    return dm_from_ket([1.0, 1.0])


def minus_state() -> np.ndarray:
    return dm_from_ket([1.0, -1.0])


def to_bloch(rho) -> np.ndarray:
    """Bloch vector r with r_k = Tr{sigma_k rho}."""
    m = check_density_matrix(rho)
    return np.array([np.trace(p @ m).real for p in PAULIS])


def from_bloch(r) -> np.ndarray:
    """Density matrix (1 + r.sigma)/2; rejects vectors outside the ball."""
    v = check_bloch_vector(r)
    return 0.5 * (IDENTITY + v[0] * SIGMA_X + v[1] * SIGMA_Y + v[2] * SIGMA_Z)


def trace_distance(a, b) -> float:
    """Half the trace norm of (a - b); in [0, 1] for density matrices."""
    ma = check_density_matrix(a, "a")
    mb = check_density_matrix(b, "b")
    diff = ma - mb
    eigs = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.abs(eigs).sum())


def hilbert_schmidt_distance(a, b) -> float:
    """Half the squared Frobenius norm of (a - b); equals D_tr^2 for qubits."""
    ma = check_density_matrix(a, "a")
    mb = check_density_matrix(b, "b")
    diff = ma - mb
    return float(0.5 * np.sum(np.abs(diff) ** 2))


def _clamped_sqrt(x: float, name: str) -> float:
    if x < BURES_RADICAND_FLOOR:
        raise ValueError(f"{name} radicand {x:.3e} below round-off floor")
    return np.sqrt(max(x, 0.0))


def state_fidelity(a, b) -> float:
    """Squared Uhlmann fidelity via the qubit closed form.

    F = Tr(a b) + 2 sqrt(det a * det b), exact for 2x2 density matrices and
    free of matrix square roots.
    """
    ma = check_density_matrix(a, "a")
    mb = check_density_matrix(b, "b")
    det_prod = (np.linalg.det(ma) * np.linalg.det(mb)).real
    f = np.trace(ma @ mb).real + 2.0 * _clamped_sqrt(det_prod, "fidelity determinant")
    return float(min(f, 1.0)) if f <= 1.0 + 1e-12 else float(f)


def bures_distance(a, b) -> float:
    """Bures distance sqrt(2 - 2 sqrt(F)) from the qubit fidelity closed form."""
    f = state_fidelity(a, b)
    sqrt_f = _clamped_sqrt(f, "fidelity")
    return float(_clamped_sqrt(2.0 - 2.0 * sqrt_f, "squared Bures distance"))


def purity(rho) -> float:
    """Tr{rho^2}, in [1/2, 1] for a qubit."""
    m = check_density_matrix(rho)
    return float(np.trace(m @ m).real)


def success_probability(a, b) -> float:
    """Helstrom success probability (1 + D_tr)/2 for single-shot discrimination."""
    return 0.5 * (1.0 + trace_distance(a, b))


# Vectorized helpers over trajectories (stacks of 2x2 matrices).  These skip
# per-point validation; callers pass trajectories produced by the propagator.

def trace_distance_stack(a_stack: np.ndarray, b_stack: np.ndarray) -> np.ndarray:
    diff = a_stack - b_stack
    diff = 0.5 * (diff + np.conj(np.swapaxes(diff, -1, -2)))
    eigs = np.linalg.eigvalsh(diff)
    return 0.5 * np.abs(eigs).sum(axis=-1)


def hilbert_schmidt_distance_stack(a_stack: np.ndarray, b_stack: np.ndarray) -> np.ndarray:
    diff = a_stack - b_stack
    return 0.5 * np.sum(np.abs(diff) ** 2, axis=(-2, -1))


def purity_stack(stack: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...ba->...", stack, stack).real


def bloch_stack(stack: np.ndarray) -> np.ndarray:
    """Bloch vectors of a trajectory, shape (..., 3)."""
    return np.stack(
        [np.einsum("ab,...ba->...", p, stack).real for p in PAULIS], axis=-1
    )
