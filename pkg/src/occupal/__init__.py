"""Apprenticeship learning over occupancy measures.

The package trains imitation policies for finite discounted MDPs by
minimizing, with averaged projected stochastic subgradient descent, a
convex surrogate over candidate occupancy vectors: the l1 gap between the
candidate's feature expectations and the expert's, plus a weighted penalty
for leaving the Bellman flow polytope.  Exact companions — a rational
occupancy oracle, a dense simplex baseline, and a deterministic
full-dimensional subgradient solver — make every guarantee checkable at
desk scale.
"""

from .baseline import (
    BoundInputs,
    ExactSolution,
    RegretReport,
    SimplexError,
    exact_al_solve,
    regret_report,
    subgradient_solve,
)
from .expert import (
    EmpiricalFeatureExpectation,
    default_horizon,
    empirical_feature_expectation,
    hoeffding_sample_size,
    load_trajectories,
    sample_trajectories,
    save_trajectories,
)
from .extraction import (
    ExtractionReport,
    evaluate_theta,
    extraction_report,
    policy_from_vector,
)
from .features import (
    CostBasis,
    FeatureMatrix,
    SamplingConstants,
    brute_force_sup_gap,
    build_feature_matrix,
    feature_expectation,
    flow_feature_rows,
    l1_feature_gap,
    load_basis,
    load_features,
    region_indicator_basis,
    sampling_constants,
    save_basis,
    save_features,
    state_action_indicator_basis,
    validate_basis,
)
from .mdp import (
    Mdp,
    OccupancyMeasure,
    Policy,
    chain_cost,
    deterministic_policy,
    expected_return,
    flow_defect,
    flow_residual,
    gridworld_cost,
    load_mdp,
    load_policy,
    make_chain,
    make_gridworld,
    make_random_mdp,
    occupancy_of_policy,
    sa_index,
    save_mdp,
    save_policy,
    state_marginal,
    state_transition_matrix,
    truncated_series_occupancy,
    uniform_policy,
    validate_mdp,
    value_iteration,
)
from .pipeline import ExperimentConfig, PipelineError, run_experiment, stage_seed
from .sgd import (
    LossBreakdown,
    Schedule,
    SgdConfig,
    TrainingTrace,
    certified_schedule,
    exact_subgradient,
    project_l2_ball,
    run_sgd_al,
    stochastic_subgradient,
    subgradient_estimate,
    surrogate_loss,
)

__version__ = "0.1.0"

__all__ = [
    "Mdp",
    "Policy",
    "OccupancyMeasure",
    "sa_index",
    "validate_mdp",
    "uniform_policy",
    "deterministic_policy",
    "state_transition_matrix",
    "occupancy_of_policy",
    "truncated_series_occupancy",
    "state_marginal",
    "flow_defect",
    "flow_residual",
    "expected_return",
    "value_iteration",
    "make_random_mdp",
    "make_gridworld",
    "gridworld_cost",
    "make_chain",
    "chain_cost",
    "save_mdp",
    "load_mdp",
    "save_policy",
    "load_policy",
    "CostBasis",
    "FeatureMatrix",
    "SamplingConstants",
    "validate_basis",
    "state_action_indicator_basis",
    "region_indicator_basis",
    "feature_expectation",
    "l1_feature_gap",
    "brute_force_sup_gap",
    "build_feature_matrix",
    "flow_feature_rows",
    "sampling_constants",
    "save_basis",
    "load_basis",
    "save_features",
    "load_features",
    "EmpiricalFeatureExpectation",
    "default_horizon",
    "hoeffding_sample_size",
    "sample_trajectories",
    "empirical_feature_expectation",
    "save_trajectories",
    "load_trajectories",
    "SgdConfig",
    "LossBreakdown",
    "TrainingTrace",
    "Schedule",
    "project_l2_ball",
    "surrogate_loss",
    "exact_subgradient",
    "subgradient_estimate",
    "stochastic_subgradient",
    "run_sgd_al",
    "certified_schedule",
    "ExtractionReport",
    "policy_from_vector",
    "extraction_report",
    "evaluate_theta",
    "ExactSolution",
    "BoundInputs",
    "RegretReport",
    "SimplexError",
    "exact_al_solve",
    "subgradient_solve",
    "regret_report",
    "ExperimentConfig",
    "PipelineError",
    "run_experiment",
    "stage_seed",
    "__version__",
]
