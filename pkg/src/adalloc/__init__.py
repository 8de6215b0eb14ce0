"""Adaptive allocation of decoding compute across batches of queries.

Estimate how much each query benefits from extra decoding compute, allocate
a shared budget to maximize the summed expected gain (online greedy,
offline binned policy, or weak/strong routing), and evaluate allocations
against uniform and oracle baselines.
"""

__version__ = "0.1.0"

from .allocation import (
    Allocation,
    BudgetSpec,
    OfflineBinnedPolicy,
    RoutingCosts,
    RoutingDecision,
    allocate_bruteforce,
    allocate_greedy,
    allocation_objective,
    load_policy,
    route_by_preference,
    route_random,
    save_policy,
    uniform_budgets,
)
from .curves import (
    analytic_marginals,
    marginals_from_quality,
    monotone_envelope,
    quality_from_marginals,
    success_curve,
)
from .datasets import Dataset, DatasetError, QueryRecord, load_dataset, save_dataset
from .estimation import (
    CurveEstimate,
    best_of_b_exact_binary,
    best_of_b_exact_scalar,
    bootstrap_curve,
    empirical_marginals,
    empirical_success_prob,
    exact_curve,
    exact_marginal_matrix,
    exact_quality_matrix,
    preference_probability,
)
from .evaluation import (
    BinBreakdown,
    EvaluationReport,
    PredictorMetrics,
    ReportRow,
    bin_breakdown,
    budget_sweep,
    calibration_curve,
    expected_reward,
    expected_success_rate,
    pathology_study,
    predictor_metrics,
    routing_sweep,
)
from .predictors import (
    MarginalRewardRegressor,
    NoiseSpec,
    PreferencePredictor,
    SuccessProbPredictor,
    load_predictor,
    noisy_oracle,
    save_predictor,
)
from .workloads import (
    WorkloadSpec,
    generate_routing_workload,
    generate_workload,
    select_tranches,
)

__all__ = [
    "__version__",
    "Allocation",
    "BudgetSpec",
    "OfflineBinnedPolicy",
    "RoutingCosts",
    "RoutingDecision",
    "allocate_bruteforce",
    "allocate_greedy",
    "allocation_objective",
    "load_policy",
    "route_by_preference",
    "route_random",
    "save_policy",
    "uniform_budgets",
    "analytic_marginals",
    "marginals_from_quality",
    "monotone_envelope",
    "quality_from_marginals",
    "success_curve",
    "Dataset",
    "DatasetError",
    "QueryRecord",
    "load_dataset",
    "save_dataset",
    "CurveEstimate",
    "best_of_b_exact_binary",
    "best_of_b_exact_scalar",
    "bootstrap_curve",
    "empirical_marginals",
    "empirical_success_prob",
    "exact_curve",
    "exact_marginal_matrix",
    "exact_quality_matrix",
    "preference_probability",
    "BinBreakdown",
    "EvaluationReport",
    "PredictorMetrics",
    "ReportRow",
    "bin_breakdown",
    "budget_sweep",
    "calibration_curve",
    "expected_reward",
    "expected_success_rate",
    "pathology_study",
    "predictor_metrics",
    "routing_sweep",
    "MarginalRewardRegressor",
    "NoiseSpec",
    "PreferencePredictor",
    "SuccessProbPredictor",
    "load_predictor",
    "noisy_oracle",
    "save_predictor",
    "WorkloadSpec",
    "generate_routing_workload",
    "generate_workload",
    "select_tranches",
]
