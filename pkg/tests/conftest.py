"""Shared helpers for the test suite."""
from __future__ import annotations

import numpy as np

from qdiscrim.algebra import from_bloch


def random_bloch(rng: np.random.Generator, pure: bool = False) -> np.ndarray:
    """Uniform random direction; radius 1 (pure) or uniform in [0, 1)."""
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    if pure:
        return v
    return v * rng.uniform(0.0, 1.0) ** (1.0 / 3.0)


def random_density_matrix(rng: np.random.Generator, pure: bool = False) -> np.ndarray:
    return from_bloch(random_bloch(rng, pure=pure))


def bures_distance_eig_oracle(a: np.ndarray, b: np.ndarray) -> float:
    """General-form Bures distance via eigendecomposition matrix square roots."""
    wa, va = np.linalg.eigh(a)
    sqrt_a = va @ np.diag(np.sqrt(np.clip(wa, 0.0, None))) @ va.conj().T
    inner = sqrt_a @ b @ sqrt_a
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    sqrt_fidelity = np.sqrt(np.clip(w, 0.0, None)).sum()
    return float(np.sqrt(max(2.0 - 2.0 * sqrt_fidelity, 0.0)))
