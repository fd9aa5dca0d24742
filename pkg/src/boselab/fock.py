"""Truncated bosonic Fock bases and diagonal (number-basis) operators.

States are occupation vectors respecting per-site cutoffs and, optionally, a
fixed total boson number.  Ordering is lexicographic by occupation vector so
matrix layouts are reproducible across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeGraph

__all__ = [
    "FockBasis",
    "DiagonalOperator",
    "ResourceLimitError",
    "enumerate_basis",
    "site_projector",
    "region_total_projector",
    "truncation_projector",
    "number_operator",
    "DIMENSION_CAP",
]

DIMENSION_CAP = 5_000_000


class ResourceLimitError(RuntimeError):
    """Requested basis exceeds the configured dimension cap."""


@dataclass(frozen=True)
class FockBasis:
    lattice: LatticeGraph
    site_cutoffs: tuple[int, ...]
    sector: int | None
    states: np.ndarray = field(repr=False)          # (dim, n_sites) int16
    index_map: dict[bytes, int] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def n_sites(self) -> int:
        return self.states.shape[1]

    def index_of(self, occ: Sequence[int]) -> int:
        key = np.asarray(occ, dtype=np.int16).tobytes()
        try:
            return self.index_map[key]
        except KeyError:
            raise KeyError(f"occupation {tuple(occ)} not in basis") from None


@dataclass(frozen=True)
class DiagonalOperator:
    """Operator diagonal in the occupation basis."""

    basis: FockBasis
    entries: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.entries.shape != (self.basis.dim,):
            raise ValueError("entry count must equal basis dimension")

    def is_projector(self, tol: float = 0.0) -> bool:
        e = self.entries
        return bool(np.all((np.abs(e) <= tol) | (np.abs(e - 1.0) <= tol)))

    def compose(self, other: "DiagonalOperator") -> "DiagonalOperator":
        if other.basis is not self.basis:
            raise ValueError("operands live on different bases")
        return DiagonalOperator(self.basis, self.entries * other.entries)


def _count_sector(cutoffs: Sequence[int], total: int) -> int:
    # DP over sites: ways[n] = number of tails summing to n
    ways = np.zeros(total + 1, dtype=np.int64)
    ways[0] = 1
    for c in cutoffs:
        new = np.zeros_like(ways)
        for n in range(total + 1):
            lo = max(0, n - c)
            new[n] = ways[lo : n + 1].sum()
        ways = new
    return int(ways[total])


def enumerate_basis(
    g: LatticeGraph,
    site_cutoffs: int | Sequence[int],
    sector: int | None = None,
    *,
    dim_cap: int = DIMENSION_CAP,
) -> FockBasis:
    """Enumerate all occupation vectors, lexicographically ordered.

    ``site_cutoffs`` may be a single integer (uniform) or one per site.
    With ``sector`` set, only states with total occupation == sector are
    kept; the enumeration prunes rather than filtering the full product.
    """
    n = g.site_count
    if isinstance(site_cutoffs, int):
        cutoffs = [site_cutoffs] * n
    else:
        cutoffs = [int(c) for c in site_cutoffs]
    if len(cutoffs) != n:
        raise ValueError("need one cutoff per site")
    if any(c < 0 for c in cutoffs):
        raise ValueError("cutoffs must be >= 0")

    if sector is not None:
        if sector < 0 or sector > sum(cutoffs):
            raise ValueError("sector outside attainable occupation range")
        dim = _count_sector(cutoffs, sector)
    else:
        dim = math.prod(c + 1 for c in cutoffs)
    if dim > dim_cap:
        raise ResourceLimitError(
            f"basis dimension {dim} exceeds cap {dim_cap}"
        )

    if sector is None:
        grids = np.meshgrid(
            *[np.arange(c + 1, dtype=np.int16) for c in cutoffs], indexing="ij"
        )
        states = np.stack([a.ravel() for a in grids], axis=1)
    else:
        # suffix capacities let us prune branches that cannot reach the sector
        suffix = np.zeros(n + 1, dtype=np.int64)
        for i in range(n - 1, -1, -1):
            suffix[i] = suffix[i + 1] + cutoffs[i]
        out = np.empty((dim, n), dtype=np.int16)
        row = 0
        occ = np.zeros(n, dtype=np.int16)

        def rec(site: int, remaining: int) -> None:
            nonlocal row
            if site == n:
                out[row] = occ
                row += 1
                return
            lo = max(0, remaining - int(suffix[site + 1]))
            hi = min(cutoffs[site], remaining)
            for v in range(lo, hi + 1):
                occ[site] = v
                rec(site + 1, remaining - v)
            occ[site] = 0

        rec(0, sector)
        states = out

    index_map = {states[k].tobytes(): k for k in range(states.shape[0])}
    return FockBasis(
        lattice=g,
        site_cutoffs=tuple(cutoffs),
        sector=sector,
        states=states,
        index_map=index_map,
    )


_PREDICATE_OPS = ("==", "<=", ">=")


def _predicate_mask(values: np.ndarray, predicate: tuple[str, int]) -> np.ndarray:
    op, q = predicate
    if op not in _PREDICATE_OPS:
        raise ValueError(f"predicate op must be one of {_PREDICATE_OPS}")
    if op == "==":
        return values == q
    if op == "<=":
        return values <= q
    return values >= q


def site_projector(
    b: FockBasis, i: int, predicate: tuple[str, int]
) -> DiagonalOperator:
    """Pi_{i,=q}, Pi_{i,<=q}, or Pi_{i,>=q} as a diagonal 0/1 operator."""
    if not (0 <= i < b.n_sites):
        raise ValueError(f"site {i} out of range")
    vals = b.states[:, i].astype(np.int64)
    return DiagonalOperator(b, _predicate_mask(vals, predicate).astype(np.float64))


def region_total_projector(
    b: FockBasis, X: Iterable[int], predicate: tuple[str, int]
) -> DiagonalOperator:
    """Projector onto eigenspaces of n_X = sum_{i in X} n_i."""
    idx = sorted(set(int(i) for i in X))
    if not idx:
        raise ValueError("region must be nonempty")
    vals = b.states[:, idx].astype(np.int64).sum(axis=1)
    return DiagonalOperator(b, _predicate_mask(vals, predicate).astype(np.float64))


def truncation_projector(
    b: FockBasis, scheme: Sequence[tuple[Iterable[int], int]]
) -> DiagonalOperator:
    """Product of per-site <=q projectors over the scheme's regions.

    Overlapping regions resolve to the elementwise minimum cutoff.
    """
    eff: dict[int, int] = {}
    for region, q in scheme:
        if q < 0:
            raise ValueError("truncation cutoff must be >= 0")
        for i in region:
            i = int(i)
            if not (0 <= i < b.n_sites):
                raise ValueError(f"site {i} out of range")
            eff[i] = min(eff.get(i, q), q)
    mask = np.ones(b.dim, dtype=bool)
    for i, q in eff.items():
        mask &= b.states[:, i] <= q
    return DiagonalOperator(b, mask.astype(np.float64))


def number_operator(b: FockBasis, X: Iterable[int]) -> DiagonalOperator:
    """n_X as a diagonal operator."""
    idx = sorted(set(int(i) for i in X))
    if not idx:
        raise ValueError("region must be nonempty")
    vals = b.states[:, idx].astype(np.float64).sum(axis=1)
    return DiagonalOperator(b, vals)
