"""Flow-network samplers for cardinality-constrained submodular set
selection, with reward upper-bound data augmentation."""

from .counting import (
    BoundProbabilityReport,
    McBoundResult,
    PairingGraphStats,
    alpha_count,
    beta_count,
    bound_probability_report,
    closed_form_stats,
    complete_pairwise_dependency,
    coverage_ratio_curve,
    edge_count,
    expected_coverage_lower,
    expected_distinct_bounds,
    janson_lower_bound,
    lambda_count,
    mc_bound_experiment,
    oracle_pairing_stats,
    pairwise_dependency,
    phi_count,
)
from .bounds import (
    BoundIndex,
    ObservationLedger,
    UpperBoundEntry,
    active_bounds,
    coverage_count,
    optimistic_distribution,
    optimistic_partition,
    oversampling_margin,
    record_trajectory,
    tightest_bound,
)
from .dag import (
    EnumerationCapError,
    ProblemInstance,
    Trajectory,
    available_actions,
    count_terminal_states,
    count_trajectories,
    enumerate_terminating_states,
    enumerate_trajectories,
)
from .estimator import GFlowNetSetSampler
from .graphs import CoverageGraph, generate_ba, generate_er, load_edge_list, write_edge_list
from .metrics import (
    FcsConfig,
    MetricsRecord,
    exact_tv,
    fcs,
    learned_terminal_distribution,
    terminal_probabilities,
    top_k_average,
    total_variation,
)
from .policy import (
    SetPolicy,
    backward_policy_logprob,
    forward_policy,
    sample_backward_trajectory,
    sample_trajectories,
    sample_trajectory,
    tb_loss,
    tb_loss_batch,
)
from .rewards import (
    BudgetExhausted,
    CoverageReward,
    ModularReward,
    RewardOracle,
    coverage_reward,
    coverage_size,
)
from .training import ReplayBuffer, TrainConfig, TrainedRun, train

__version__ = "0.1.0"

__all__ = [
    "BoundIndex",
    "BoundProbabilityReport",
    "BudgetExhausted",
    "CoverageGraph",
    "CoverageReward",
    "EnumerationCapError",
    "FcsConfig",
    "GFlowNetSetSampler",
    "McBoundResult",
    "MetricsRecord",
    "ModularReward",
    "ObservationLedger",
    "PairingGraphStats",
    "ProblemInstance",
    "ReplayBuffer",
    "RewardOracle",
    "SetPolicy",
    "TrainConfig",
    "TrainedRun",
    "Trajectory",
    "UpperBoundEntry",
    "active_bounds",
    "alpha_count",
    "beta_count",
    "bound_probability_report",
    "closed_form_stats",
    "complete_pairwise_dependency",
    "coverage_ratio_curve",
    "edge_count",
    "expected_coverage_lower",
    "expected_distinct_bounds",
    "janson_lower_bound",
    "lambda_count",
    "mc_bound_experiment",
    "oracle_pairing_stats",
    "pairwise_dependency",
    "phi_count",
    "available_actions",
    "backward_policy_logprob",
    "count_terminal_states",
    "count_trajectories",
    "coverage_count",
    "coverage_reward",
    "coverage_size",
    "enumerate_terminating_states",
    "enumerate_trajectories",
    "exact_tv",
    "fcs",
    "forward_policy",
    "generate_ba",
    "generate_er",
    "learned_terminal_distribution",
    "load_edge_list",
    "optimistic_distribution",
    "optimistic_partition",
    "oversampling_margin",
    "record_trajectory",
    "sample_backward_trajectory",
    "sample_trajectories",
    "sample_trajectory",
    "tb_loss",
    "tb_loss_batch",
    "terminal_probabilities",
    "tightest_bound",
    "top_k_average",
    "total_variation",
    "train",
    "write_edge_list",
]
