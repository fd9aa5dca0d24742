"""Small construction helpers shared across test modules."""

from __future__ import annotations

import numpy as np

from boselab.evolve import StateVector
from boselab.fock import FockBasis


def fock_state(b: FockBasis, occ) -> StateVector:
    """Unit basis vector for one occupation tuple."""
    amps = np.zeros(b.dim, dtype=np.complex128)
    amps[b.index_of(tuple(occ))] = 1.0
    return StateVector(b, amps)


def random_state(b: FockBasis, seed: int) -> StateVector:
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(b.dim) + 1j * rng.standard_normal(b.dim)
    return StateVector(b, amps / np.linalg.norm(amps))


def random_hermitian(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2.0


def mott_occupation(n_sites: int, filling: int = 1) -> tuple[int, ...]:
    return (filling,) * n_sites
