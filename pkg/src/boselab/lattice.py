"""Finite lattice graphs with the hop-distance metric.

Everything downstream (subset Hamiltonians, light-cone sweeps, bound
evaluators) measures distance in graph hops, so the all-pairs table is
computed once at construction and kept dense.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

__all__ = [
    "LatticeGraph",
    "GeometryConstants",
    "build_lattice",
    "lattice_from_edges",
    "distance",
    "ball",
    "boundary",
    "geometric_constants",
]


@dataclass(frozen=True)
class LatticeGraph:
    """Connected graph with a precomputed hop metric.

    ``dimension_D`` is the spatial dimension used in the gamma*r^D volume
    inequality; it is declared by the constructor (1 for chains/rings,
    len(dims) for grids), not inferred.
    """

    site_count: int
    edges: tuple[tuple[int, int], ...]
    dimension_D: int
    distances: np.ndarray = field(repr=False)
    neighbors: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def sites(self) -> range:
        return range(self.site_count)

    @property
    def diameter(self) -> int:
        return int(self.distances.max())

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])


@dataclass(frozen=True)
class GeometryConstants:
    gamma: float
    lambda0: float
    max_degree_dG: int
    dimension_D: int


def _finalize(n: int, edges: set[tuple[int, int]], dimension_D: int) -> LatticeGraph:
    if n < 1:
        raise ValueError("lattice needs at least one site")
    rows = [i for i, j in edges] + [j for i, j in edges]
    cols = [j for i, j in edges] + [i for i, j in edges]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    dist = shortest_path(adj, method="D", unweighted=True)
    if np.isinf(dist).any():
        raise ValueError("lattice graph must be connected")
    dist_int = dist.astype(np.int64)
    nbrs: list[tuple[int, ...]] = [() for _ in range(n)]
    by_site: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in edges:
        by_site[i].append(j)
        by_site[j].append(i)
    for i in range(n):
        nbrs[i] = tuple(sorted(by_site[i]))
    return LatticeGraph(
        site_count=n,
        edges=tuple(sorted(edges)),
        dimension_D=dimension_D,
        distances=dist_int,
        neighbors=tuple(nbrs),
    )


def build_lattice(kind: str, dims: Sequence[int]) -> LatticeGraph:
    """Construct a chain, ring, or hypercubic grid.

    dims: [L] for chain/ring, [L1, ..., LD] for grid.  Grid sites are
    indexed in row-major (C) order.
    """
    dims = list(dims)
    if not dims:
        raise ValueError("dims must be nonempty")
    if any(d < 1 for d in dims):
        raise ValueError("every dimension must be >= 1")

    if kind == "chain":
        if len(dims) != 1:
            raise ValueError("chain takes a single length")
        n = dims[0]
        edges = {(i, i + 1) for i in range(n - 1)}
        return _finalize(n, edges, 1)
    if kind == "ring":
        if len(dims) != 1:
            raise ValueError("ring takes a single length")
        n = dims[0]
        if n < 3:
            raise ValueError("ring needs at least 3 sites")
        edges = {(i, (i + 1) % n) for i in range(n)}
        edges = {(min(i, j), max(i, j)) for i, j in edges}
        return _finalize(n, edges, 1)
    if kind == "grid":
        n = math.prod(dims)
        strides = np.zeros(len(dims), dtype=np.int64)
        strides[-1] = 1
        for a in range(len(dims) - 2, -1, -1):
            strides[a] = strides[a + 1] * dims[a + 1]
        edges = set()
        for coord in itertools.product(*(range(d) for d in dims)):
            i = int(np.dot(coord, strides))
            for axis, c in enumerate(coord):
                if c + 1 < dims[axis]:
                    j = i + int(strides[axis])
                    edges.add((i, j))
        return _finalize(n, edges, len(dims))
    raise ValueError(f"unknown lattice kind: {kind!r}")


def lattice_from_edges(
    site_count: int, edges: Iterable[Sequence[int]], dimension_D: int = 1
) -> LatticeGraph:
    """Custom connected graph from an explicit edge list."""
    cleaned = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise ValueError("self-loops are not allowed")
        if not (0 <= i < site_count and 0 <= j < site_count):
            raise ValueError(f"edge {(i, j)} out of range")
        cleaned.add((min(i, j), max(i, j)))
    return _finalize(site_count, cleaned, dimension_D)


def _as_index(X: Iterable[int], n: int) -> np.ndarray:
    idx = np.asarray(sorted(set(int(i) for i in X)), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("site set must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError("site index out of range")
    return idx


def distance(g: LatticeGraph, X: Iterable[int], Y: Iterable[int]) -> int:
    """min_{i in X, j in Y} d(i, j); zero iff the sets overlap."""
    xi = _as_index(X, g.site_count)
    yi = _as_index(Y, g.site_count)
    return int(g.distances[np.ix_(xi, yi)].min())


def ball(g: LatticeGraph, X: Iterable[int], r: int) -> frozenset[int]:
    """X[r] = {i : d(i, X) <= r}."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    xi = _as_index(X, g.site_count)
    d_to_X = g.distances[xi, :].min(axis=0)
    return frozenset(int(i) for i in np.nonzero(d_to_X <= r)[0])


def boundary(g: LatticeGraph, X: Iterable[int]) -> frozenset[int]:
    """Inner boundary: sites of X adjacent to the complement."""
    xi = _as_index(X, g.site_count)
    inside = set(int(i) for i in xi)
    out = [i for i in inside if any(j not in inside for j in g.neighbors[i])]
    return frozenset(out)


def geometric_constants(g: LatticeGraph) -> GeometryConstants:
    """Minimal gamma with |i[r]| <= gamma * r^D for all i and integer r >= 1,
    exact lambda0 = max_i sum_j e^{-d(i,j)}, and the max degree."""
    D = g.dimension_D
    diam = max(g.diameter, 1)
    gamma = 1.0
    for r in range(1, diam + 1):
        counts = (g.distances <= r).sum(axis=1)     # |i[r]| for every i
        gamma = max(gamma, float(counts.max()) / r**D)
    lam = float(np.exp(-g.distances.astype(float)).sum(axis=1).max())
    dG = max(len(nb) for nb in g.neighbors)
    return GeometryConstants(
        gamma=gamma, lambda0=lam, max_degree_dG=dG, dimension_D=D
    )
