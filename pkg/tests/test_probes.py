"""Moments, tails, restricted errors, ground states, correlations."""

import math

import numpy as np
import pytest

from boselab.evolve import StateVector, dense_expm, evolve_state, heisenberg
from boselab.fock import enumerate_basis
from boselab.lattice import build_lattice
from boselab.model import assemble_hamiltonian, bose_hubbard, local_operator
from boselab.probes import (
    ProbeSeries,
    commutator_norm,
    connected_correlation,
    ground_state,
    heisenberg_apply,
    mgf_condition,
    moment,
    moment_series,
    restricted_error,
    tail_probability,
)
from helpers import fock_state, random_state


def chain_setup(n, cutoff, J=1.0, U=0.0, mu=0.0, sector=None):
    g = build_lattice("chain", [n])
    b = enumerate_basis(g, cutoff, sector=sector)
    H = assemble_hamiltonian(bose_hubbard(g, J=J, U=U, mu=mu), b)
    return g, b, H


def test_moment_basic_values():
    g, b, _ = chain_setup(3, 2)
    mott = fock_state(b, (1, 1, 1))
    for i in range(3):
        for s in (1, 2, 3):
            assert moment(mott, i, s) == pytest.approx(1.0, abs=1e-14)
    g1, b1, _ = chain_setup(1, 3)
    two = fock_state(b1, (2,))
    assert moment(two, 0, 1) == pytest.approx(2.0)
    assert moment(two, 0, 2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        moment(two, 0, 0)


def test_moment_is_unnormalized():
    # sandwiched vectors keep the weight of the operator hit
    g, b, _ = chain_setup(1, 2)
    half = StateVector(b, 0.5 * fock_state(b, (2,)).amplitudes)
    assert moment(half, 0, 1) == pytest.approx(0.5)


def test_tail_probability():
    g, b, _ = chain_setup(3, 2)
    mott = fock_state(b, (1, 1, 1))
    assert tail_probability(mott, 0, 2) == 0.0
    assert tail_probability(mott, 0, 1) == 1.0
    assert tail_probability(mott, 0, 0) == 1.0
    g1, b1, _ = chain_setup(1, 2)
    sup = StateVector(
        b1,
        (fock_state(b1, (0,)).amplitudes + fock_state(b1, (2,)).amplitudes)
        / math.sqrt(2),
    )
    assert tail_probability(sup, 0, 1) == pytest.approx(0.5)
    assert tail_probability(sup, 0, 2) == pytest.approx(0.5)


def test_tail_obeys_markov_on_evolved_state():
    g, b, H = chain_setup(3, 3, J=1.0, U=0.6)
    psi = evolve_state(H, fock_state(b, (2, 1, 0)), 0.7)
    for i in range(3):
        for z0 in (1, 2, 3):
            p = tail_probability(psi, i, z0)
            for s in (1, 2, 3, 4):
                assert p <= moment(psi, i, s) / z0**s + 1e-12


def test_mgf_condition_values():
    g, b, _ = chain_setup(3, 2)
    mott = fock_state(b, (1, 1, 1))
    assert mgf_condition(mott, 1.0, 1.0) == pytest.approx(1.0, rel=1e-14)
    vac = fock_state(b, (0, 0, 0))
    for c0 in (0.3, 1.0):
        assert mgf_condition(vac, c0, 0.0) == pytest.approx(1.0, rel=1e-14)
    g1, b1, _ = chain_setup(1, 2)
    two = fock_state(b1, (2,))
    assert mgf_condition(two, 1.0, 1.0) == pytest.approx(math.e, rel=1e-14)


def test_mgf_condition_ensemble_and_validation():
    g, b, _ = chain_setup(1, 2)
    vac, two = fock_state(b, (0,)), fock_state(b, (2,))
    mixed = [(0.5, vac), (0.5, two)]
    expect = 0.5 * 1.0 + 0.5 * math.exp(2.0)
    assert mgf_condition(mixed, 1.0, 0.0) == pytest.approx(expect, rel=1e-14)
    for c0 in (0.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            mgf_condition(vac, c0, 0.0)
    with pytest.raises(ValueError):
        mgf_condition([], 1.0, 0.0)
    with pytest.raises(ValueError):
        mgf_condition([(-0.5, vac), (1.5, two)], 1.0, 0.0)


def test_heisenberg_apply_matches_dense_route():
    g, b, H = chain_setup(3, 2, J=1.0, U=0.9)
    O = local_operator("number", [0], b)
    psi = random_state(b, 4)
    t = 0.8
    direct = heisenberg(H, O, t).matrix @ psi.amplitudes
    via_states = heisenberg_apply(H, O, psi, t, tol=1e-12)
    assert np.linalg.norm(direct - via_states.amplitudes) <= 1e-9


def test_commutator_norm_zero_cases():
    g, b, H = chain_setup(4, 1, J=1.0)
    n0 = local_operator("number", [0], b)
    n3 = local_operator("number", [3], b)
    assert commutator_norm(H, n0, n3, 0.0) <= 1e-12
    assert commutator_norm(H, n0, n0, 0.0) <= 1e-12


def test_commutator_norm_growth_regression():
    # frozen reference values for the hard-core chain
    g, b, H = chain_setup(4, 1, J=1.0)
    n0 = local_operator("number", [0], b)
    n3 = local_operator("number", [3], b)
    v2 = commutator_norm(H, n0, n3, 0.2)
    v4 = commutator_norm(H, n0, n3, 0.4)
    assert v2 == pytest.approx(1.3253524571586722e-03, rel=1e-9)
    assert v4 == pytest.approx(1.0412687588771863e-02, rel=1e-9)
    assert 0.0 < v2 < v4


def test_restricted_error_exact_approximation():
    g, b, H = chain_setup(3, 2, J=1.0, U=0.4)
    O = local_operator("number", [1], b)
    psi = random_state(b, 8)
    t = 0.5
    exact = heisenberg(H, O, t)
    assert restricted_error(H, O, exact, psi, t, tol=1e-12) <= 1e-9
    assert restricted_error(H, O, O, psi, 0.0) <= 1e-12


def test_restricted_error_phase_invariance_and_convexity():
    g, b, H = chain_setup(3, 2, J=1.0, U=0.4)
    O = local_operator("number", [0], b)
    approx = local_operator("number", [1], b)  # deliberately wrong
    psi1, psi2 = random_state(b, 1), random_state(b, 2)
    t = 0.3
    e1 = restricted_error(H, O, approx, psi1, t)
    spun = StateVector(b, np.exp(1j * 0.9) * psi1.amplitudes)
    assert restricted_error(H, O, approx, spun, t) == pytest.approx(e1, rel=1e-10)
    e2 = restricted_error(H, O, approx, psi2, t)
    mixed = restricted_error(H, O, approx, [(0.3, psi1), (0.7, psi2)], t)
    assert mixed == pytest.approx(0.3 * e1 + 0.7 * e2, rel=1e-10)


def test_ground_state_atomic_limit():
    g, b, H = chain_setup(4, 2, J=0.0, U=1.0, mu=0.5)
    res = ground_state(H)
    assert res.E0 == pytest.approx(-2.0, abs=1e-10)
    assert res.gap_DeltaE == pytest.approx(0.5, abs=1e-10)
    assert not res.degenerate
    mott = fock_state(b, (1, 1, 1, 1))
    assert abs(res.ground.overlap(mott)) == pytest.approx(1.0, abs=1e-10)
    assert abs(res.ground.norm() - 1.0) <= 1e-12


def test_ground_state_atomic_limit_fixed_sector():
    # restricting to total number 4 removes the particle-number excitations;
    # the cheapest in-sector excitation moves one boson, costing a full U
    g, b, H = chain_setup(4, 2, J=0.0, U=1.0, mu=0.5, sector=4)
    res = ground_state(H)
    assert res.E0 == pytest.approx(-2.0, abs=1e-10)
    assert res.gap_DeltaE == pytest.approx(1.0, abs=1e-10)


def test_ground_state_validation_and_degeneracy():
    g = build_lattice("chain", [1])
    b = enumerate_basis(g, 2)
    H2 = local_operator("custom-matrix", [0], b, matrix=np.diag([0.0, 0.0, 1.0]))
    res = ground_state(H2)
    assert res.degenerate
    assert res.gap_DeltaE == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        ground_state(local_operator("creation", [0], b))
    b1 = enumerate_basis(g, 0)
    one = local_operator("custom-matrix", [0], b1, matrix=np.zeros((1, 1)))
    with pytest.raises(ValueError):
        ground_state(one)


def test_ground_state_iterative_path_is_deterministic():
    # dimension above the dense cap exercises the sparse solver
    g = build_lattice("chain", [1])
    b = enumerate_basis(g, 2400)
    H = assemble_hamiltonian(bose_hubbard(g, J=0.0, U=0.0, mu=-1.0), b)
    r1 = ground_state(H)
    r2 = ground_state(H)
    assert r1.E0 == pytest.approx(0.0, abs=1e-8)
    assert r1.gap_DeltaE == pytest.approx(1.0, abs=1e-8)
    assert np.array_equal(r1.ground.amplitudes, r2.ground.amplitudes)


def test_connected_correlation_product_state():
    g, b, _ = chain_setup(3, 2)
    mott = fock_state(b, (1, 1, 1))
    n0 = local_operator("number", [0], b)
    n2 = local_operator("number", [2], b)
    assert abs(connected_correlation(mott, n0, n2)) <= 1e-14
    ident = local_operator(
        "custom-matrix", [0], b, matrix=np.eye(3)
    )
    assert abs(connected_correlation(mott, ident, n2)) <= 1e-14


def test_connected_correlation_symmetry_and_validation():
    g, b, H = chain_setup(4, 1, J=1.0, U=0.0)
    res = ground_state(H)
    n0 = local_operator("number", [0], b)
    n3 = local_operator("number", [3], b)
    c = connected_correlation(res.ground, n0, n3)
    assert connected_correlation(res.ground, n3, n0) == pytest.approx(c, abs=1e-10)
    bad = StateVector(b, 0.5 * res.ground.amplitudes)
    with pytest.raises(ValueError):
        connected_correlation(bad, n0, n3)


def test_probe_series_validation():
    with pytest.raises(ValueError):
        ProbeSeries(
            label="x",
            row_name="t",
            row_axis=(0.0, 1.0),
            col_name="site",
            col_axis=(0.0,),
            values=np.zeros((3, 1)),
        )
    with pytest.raises(ValueError):
        ProbeSeries(
            label="x",
            row_name="t",
            row_axis=(0.0,),
            col_name="site",
            col_axis=(0.0,),
            values=np.array([[np.nan]]),
        )


def test_moment_series_shape_and_t0_column():
    g, b, H = chain_setup(3, 1, J=1.0)
    psi = fock_state(b, (1, 0, 0))
    ident = local_operator("custom-matrix", [0], b, matrix=np.eye(2))
    series = moment_series(H, ident, psi, [0.0, 0.4], [0, 1, 2], 1)
    assert series.values.shape == (2, 3)
    assert series.row_axis == (0.0, 0.4)
    assert series.col_axis == (0.0, 1.0, 2.0)
    for col, i in enumerate([0, 1, 2]):
        assert series.values[0, col] == pytest.approx(moment(psi, i, 1), abs=1e-12)
    # total boson number is conserved along each row
    assert series.values.sum(axis=1) == pytest.approx([1.0, 1.0], abs=1e-10)
