"""Exact numerical probes for the quantities the analytic bounds control.

Every function here measures, on an exactly representable basis, one of the
objects that :mod:`boselab.bounds` upper-bounds analytically: boson-number
moments of the sandwiched state, site tail probabilities, the
moment-generating-function condition on the initial state, commutator norms,
and state-restricted approximation errors.  Keeping the measurement code
independent of the bound evaluators is what makes the inequality tests
meaningful.
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import evolve as _ev
from .evolve import StateVector, evolve_state, heisenberg
from .model import OperatorMatrix

GROUND_RESIDUAL_TOL = 1e-8
_DEGENERACY_RTOL = 1e-9

# A weighted pure-state ensemble: [(w_1, psi_1), ...] with w_j >= 0.
Ensemble = Sequence[tuple[float, StateVector]]


@dataclass(frozen=True)
class ProbeSeries:
    """A labelled 2-D sweep of probe values over two parameter axes."""

    label: str
    row_name: str
    row_axis: tuple[float, ...]
    col_name: str
    col_axis: tuple[float, ...]
    values: np.ndarray
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.row_axis), len(self.col_axis)):
            raise ValueError(
                f"values shape {vals.shape} does not match axes "
                f"({len(self.row_axis)}, {len(self.col_axis)})"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("probe series contains non-finite values")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class GroundStateResult:
    E0: float
    gap_DeltaE: float
    ground: StateVector
    degenerate: bool


def _as_ensemble(rho: StateVector | Ensemble) -> list[tuple[float, StateVector]]:
    if isinstance(rho, StateVector):
        return [(1.0, rho)]
    out = [(float(w), psi) for w, psi in rho]
    if not out:
        raise ValueError("empty ensemble")
    if any(w < 0 for w, _ in out):
        raise ValueError("ensemble weights must be non-negative")
    return out


def moment(rho_tilde_t: StateVector, i: int, s: int) -> float:
    """Boson-number moment of the (generally unnormalized) sandwiched state.

    ``rho_tilde_t`` holds the vector ``e^{-iHt} O_X |psi0>``; the moment is
    the unnormalized trace sum_states n_i^s |amplitude|^2.  Callers comparing
    against norm-scaled bounds divide by ``zeta0**2`` themselves.
    """
    if s < 1:
        raise ValueError("moment order s must be >= 1")
    n_i = rho_tilde_t.basis.states[:, i].astype(np.float64)
    weights = np.abs(rho_tilde_t.amplitudes) ** 2
    return float(np.dot(n_i**s, weights))


def tail_probability(rho_tilde_t: StateVector, i: int, z0: int) -> float:
    """Unnormalized weight of basis states with at least ``z0`` bosons on ``i``."""
    mask = rho_tilde_t.basis.states[:, i] >= z0
    return float(np.sum(np.abs(rho_tilde_t.amplitudes[mask]) ** 2))


def mgf_condition(rho: StateVector | Ensemble, c0: float, qbar: float) -> float:
    """Worst-site exponential-moment value max_i tr(e^{c0(n_i - qbar)} rho).

    The low-density condition holds iff the returned value is <= 1.
    """
    if not 0.0 < c0 <= 1.0:
        raise ValueError("c0 must lie in (0, 1]")
    parts = _as_ensemble(rho)
    basis = parts[0][1].basis
    worst = 0.0
    for i in range(basis.n_sites):
        n_i = basis.states[:, i].astype(np.float64)
        factor = np.exp(c0 * (n_i - qbar))
        total = 0.0
        for w, psi in parts:
            if psi.basis is not basis:
                raise ValueError("ensemble members live on different bases")
            total += w * float(np.dot(factor, np.abs(psi.amplitudes) ** 2))
        worst = max(worst, total)
    return worst


def heisenberg_apply(
    H: OperatorMatrix,
    O: OperatorMatrix,
    psi: StateVector,
    t: float,
    *,
    tol: float = 1e-10,
) -> StateVector:
    """Apply the Heisenberg-evolved operator to a state without forming it.

    Computes ``e^{iHt} O e^{-iHt} |psi>`` by two sparse propagations and one
    matvec, so it works far beyond the dense cap.
    """
    forward = evolve_state(H, psi, t, tol=tol)
    hit = StateVector(psi.basis, O.matrix @ forward.amplitudes)
    return evolve_state(H, hit, -t, tol=tol)


def commutator_norm(
    H: OperatorMatrix, O_A: OperatorMatrix, O_B: OperatorMatrix, t: float
) -> float:
    """Spectral norm of [O_A(t), O_B] under Heisenberg evolution by ``H``."""
    evolved = heisenberg(H, O_A, t)
    comm = (evolved.matrix @ O_B.matrix - O_B.matrix @ evolved.matrix).toarray()
    return float(np.linalg.norm(comm, 2))


def restricted_error(
    H_true: OperatorMatrix,
    O: OperatorMatrix,
    O_approx: OperatorMatrix,
    psi0: StateVector | Ensemble,
    t: float,
    *,
    tol: float = 1e-10,
) -> float:
    """State-restricted trace-norm error ||(O(t) - O_approx) rho0||_1.

    For a pure ``psi0`` this is exact: the trace norm of a rank-one
    M|psi><psi| equals ||M psi||_2.  For an ensemble the convexity upper
    bound sum_j w_j ||M psi_j||_2 is returned; it over-estimates the trace
    norm, so an inequality test that passes with it is still sound while a
    failure is inconclusive and needs a dense recomputation.
    """
    parts = _as_ensemble(psi0)
    total = 0.0
    for w, psi in parts:
        target = heisenberg_apply(H_true, O, psi, t, tol=tol)
        defect = target.amplitudes - O_approx.matrix @ psi.amplitudes
        total += w * float(np.linalg.norm(defect))
    return total


def ground_state(H: OperatorMatrix) -> GroundStateResult:
    """Lowest two eigenpairs of a Hermitian operator, with gap and residual check."""
    if not H.hermitian:
        raise ValueError("ground_state requires a Hermitian operator")
    dim = H.dim
    if dim < 2:
        raise ValueError("need dimension >= 2 to report a gap")

    evals: np.ndarray
    evecs: np.ndarray
    if dim <= _ev.DENSE_CAP:
        evals, evecs = eigh(H.dense())
        evals, evecs = evals[:2], evecs[:, :2]
    else:
        # fixed start vector keeps repeated runs bit-identical
        v0 = np.random.default_rng(7).standard_normal(dim)
        # Gershgorin shift pushes the whole spectrum below zero, so the
        # ground pair is the dominant-magnitude end; an unshifted solve can
        # miss an exactly-zero ground energy (the Krylov space loses any
        # null-space component after one matvec)
        mat = H.matrix.tocsr()
        diag = mat.diagonal().real
        radius = np.asarray(np.abs(mat).sum(axis=1)).ravel() - np.abs(diag)
        sigma = float((diag + radius).max()) + 1.0
        shifted = mat - sigma * sparse.identity(dim, format="csr", dtype=mat.dtype)
        try:
            evals, evecs = eigsh(shifted, k=2, which="SA", v0=v0)
        except ArpackNoConvergence as exc:
            raise RuntimeError(
                f"iterative ground-state solve did not converge: {exc}"
            ) from exc
        evals = evals + sigma
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]

    e0, e1 = float(evals[0]), float(evals[1])
    vec = evecs[:, 0].astype(np.complex128)
    vec /= np.linalg.norm(vec)
    pivot = int(np.argmax(np.abs(vec)))
    if abs(vec[pivot]) > 0:
        vec = vec * (np.conj(vec[pivot]) / abs(vec[pivot]))
    residual = float(np.linalg.norm(H.matrix @ vec - e0 * vec))
    scale = max(1.0, abs(e0))
    if residual > GROUND_RESIDUAL_TOL * scale:
        raise RuntimeError(
            f"ground-state residual {residual:.3e} exceeds tolerance "
            f"{GROUND_RESIDUAL_TOL * scale:.3e}"
        )
    gap = max(0.0, e1 - e0)
    degenerate = gap <= _DEGENERACY_RTOL * scale
    return GroundStateResult(
        E0=e0,
        gap_DeltaE=gap,
        ground=StateVector(H.basis, vec),
        degenerate=degenerate,
    )


def connected_correlation(
    psi: StateVector, O_X: OperatorMatrix, O_Y: OperatorMatrix
) -> float:
    """Connected correlation <O_X O_Y> - <O_X><O_Y> in the state ``psi``."""
    amp = psi.amplitudes
    nrm = psi.norm()
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"state must be normalized (norm {nrm:.3e})")
    y = O_Y.matrix @ amp
    joint = complex(np.vdot(amp, O_X.matrix @ y))
    ex = complex(np.vdot(amp, O_X.matrix @ amp))
    ey = complex(np.vdot(amp, y))
    value = joint - ex * ey
    if abs(value.imag) > 1e-10:
        warnings.warn(
            f"connected correlation has imaginary part {value.imag:.3e}",
            stacklevel=2,
        )
    return float(value.real)


def moment_series(
    H: OperatorMatrix,
    O_X: OperatorMatrix,
    psi0: StateVector,
    times: Sequence[float],
    sites: Sequence[int],
    s: int,
    *,
    tol: float = 1e-10,
    label: str = "moment",
    metadata: Mapping[str, object] | None = None,
) -> ProbeSeries:
    """Sweep M_i^(s)(t) over a time grid and a site list."""
    rows = []
    hit = StateVector(psi0.basis, O_X.matrix @ psi0.amplitudes)
    for t in times:
        rho = evolve_state(H, hit, t, tol=tol)
        rows.append([moment(rho, i, s) for i in sites])
    return ProbeSeries(
        label=label,
        row_name="t",
        row_axis=tuple(float(t) for t in times),
        col_name="site",
        col_axis=tuple(float(i) for i in sites),
        values=np.asarray(rows, dtype=np.float64),
        metadata=dict(metadata or {}),
    )
