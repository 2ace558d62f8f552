"""
Stochastic Decentralized Optimization - Library Package

Contains:
- topology: communication graphs and consensus matrices
- objectives: local objectives, datasets and stochastic gradient oracles
- methods: NEAR-DGD and the comparison methods
- analysis: theoretical constants, bounds and run metrics
- harness: experiment configuration, runner and CLI
"""

from lib.topology import (
    ConsensusMatrix,
    Topology,
    apply_consensus,
    averaging_matrix,
    consensus_matrix,
    generate_graph,
    metropolis_weights,
    spectral_report,
)
from lib.objectives import (
    Dataset,
    ObjectiveSuite,
    StochasticOracle,
    make_logistic_suite,
    make_quadratic_suite,
    make_synthetic_classification,
    read_libsvm,
    stochastic_gradient,
)
from lib.methods import ConsensusSchedule, MethodSpec, MethodState, init_state, run, step
from lib.analysis import (
    RunRecord,
    TheoreticalConstants,
    bound_dominance,
    compute_constants,
    plateau_estimate,
    sgd_neighborhood,
    theorem1_bound,
    theorem2_neighborhood,
    theorem3_bound,
)

__all__ = [
    "ConsensusMatrix",
    "Topology",
    "apply_consensus",
    "averaging_matrix",
    "consensus_matrix",
    "generate_graph",
    "metropolis_weights",
    "spectral_report",
    "Dataset",
    "ObjectiveSuite",
    "StochasticOracle",
    "make_logistic_suite",
    "make_quadratic_suite",
    "make_synthetic_classification",
    "read_libsvm",
    "stochastic_gradient",
    "ConsensusSchedule",
    "MethodSpec",
    "MethodState",
    "init_state",
    "run",
    "step",
    "RunRecord",
    "TheoreticalConstants",
    "bound_dominance",
    "compute_constants",
    "plateau_estimate",
    "sgd_neighborhood",
    "theorem1_bound",
    "theorem2_neighborhood",
    "theorem3_bound",
]
