"""Boson-lattice dynamics toolkit.

Exact diagonalization of Bose-Hubbard-type models on finite lattices,
occupation-moment and light-cone probes, explicit-constant propagation and
truncation bounds, and the step-connected local approximation algorithms
the bounds certify.
"""

from .lattice import (
    GeometryConstants,
    LatticeGraph,
    ball,
    boundary,
    build_lattice,
    distance,
    geometric_constants,
    lattice_from_edges,
)
from .fock import (
    DIMENSION_CAP,
    DiagonalOperator,
    FockBasis,
    ResourceLimitError,
    enumerate_basis,
    number_operator,
    region_total_projector,
    site_projector,
    truncation_projector,
)
from .model import (
    HamiltonianSpec,
    Interaction,
    Monomial,
    OperatorMatrix,
    assemble_hamiltonian,
    bose_hubbard,
    creation_degree,
    effective_hamiltonian,
    local_operator,
    operator_support,
    subset_hamiltonian,
)
from .evolve import (
    DENSE_CAP,
    PropagationError,
    StateVector,
    dense_expm,
    evolve_state,
    heisenberg,
    interaction_picture_unitary,
    spectral_norm,
)
from .probes import (
    GroundStateResult,
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
from .bounds import (
    BoundConditionError,
    BoundConstants,
    BoundValue,
    adjacency_exp_bound,
    bound_report,
    clustering_bound,
    concentration_bound,
    expectation_lemma_rhs,
    first_moment_bound,
    fs_lemma_check,
    fs_polynomial,
    initial_moment_bounds,
    lightcone_radius,
    main_lr_bound,
    moment_bound,
    quench_bounds,
    short_lr_bound,
    solve_eta,
    subtheorem_bound,
    tail_bound,
    truncation_error_bound,
)
from .approx import (
    LocalUnitary,
    StepSchedule,
    approximate_heisenberg,
    local_step_unitary,
    quench_step_unitary,
    run_quench,
    step_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "GeometryConstants", "LatticeGraph", "ball", "boundary", "build_lattice",
    "distance", "geometric_constants", "lattice_from_edges",
    "DIMENSION_CAP", "DiagonalOperator", "FockBasis", "ResourceLimitError",
    "enumerate_basis", "number_operator", "region_total_projector",
    "site_projector", "truncation_projector",
    "HamiltonianSpec", "Interaction", "Monomial", "OperatorMatrix",
    "assemble_hamiltonian", "bose_hubbard", "creation_degree",
    "effective_hamiltonian", "local_operator", "operator_support",
    "subset_hamiltonian",
    "DENSE_CAP", "PropagationError", "StateVector", "dense_expm",
    "evolve_state", "heisenberg", "interaction_picture_unitary",
    "spectral_norm",
    "GroundStateResult", "ProbeSeries", "commutator_norm",
    "connected_correlation", "ground_state", "heisenberg_apply",
    "mgf_condition", "moment", "moment_series", "restricted_error",
    "tail_probability",
    "BoundConditionError", "BoundConstants", "BoundValue",
    "adjacency_exp_bound", "bound_report", "clustering_bound",
    "concentration_bound", "expectation_lemma_rhs", "first_moment_bound",
    "fs_lemma_check", "fs_polynomial", "initial_moment_bounds",
    "lightcone_radius", "main_lr_bound", "moment_bound", "quench_bounds",
    "short_lr_bound", "solve_eta", "subtheorem_bound", "tail_bound",
    "truncation_error_bound",
    "LocalUnitary", "StepSchedule", "approximate_heisenberg",
    "local_step_unitary", "quench_step_unitary", "run_quench",
    "step_schedule",
    "__version__",
]
