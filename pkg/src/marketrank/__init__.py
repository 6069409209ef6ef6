"""Online fair re-ranking as an attention market.

Arriving users are served top-K lists whose scores are adjusted by a
supply-side taxation gradient over accumulated group utilities and a
demand-side multiplier from per-user score statistics. The package bundles
the engine, baseline policies, fairness metrics, a brute-force welfare
oracle, property checks for the market laws, and an experiment harness.
"""

from .core import (
    RankedList,
    ScoreDataset,
    TaxationParams,
    UtilityState,
    build_dataset,
    merge_infrequent_groups,
    validate_dataset,
)
from .errors import MarketRankError
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    RegressionResult,
    SweepGrid,
    SynthSpec,
    constrained_best,
    demand_features,
    demand_regression,
    pareto_frontier,
    reference_dataset,
    run_sweep,
    synth_dataset,
    trajectory,
)
from .fairness import (
    FairnessPreset,
    convexity_direction,
    group_power_sum,
    marginal_tax,
    resolve_preset,
    taxation_cost,
    total_cost,
)
from .gradient import demand_gradient, score_entropy, score_skewness, supply_gradient
from .metrics import MetricBundle, ef_at_k, evaluate, gini_index, mmf_at_k, ndcg_at_k
from .rerank import (
    Policy,
    RerankSession,
    allocation_objective,
    demand_response,
    ideal_lists,
    run_session,
    welfare_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "FairnessPreset",
    "MarketRankError",
    "MetricBundle",
    "Policy",
    "RankedList",
    "RegressionResult",
    "RerankSession",
    "ScoreDataset",
    "SweepGrid",
    "SynthSpec",
    "TaxationParams",
    "UtilityState",
    "allocation_objective",
    "build_dataset",
    "constrained_best",
    "convexity_direction",
    "demand_features",
    "demand_gradient",
    "demand_regression",
    "demand_response",
    "ef_at_k",
    "evaluate",
    "gini_index",
    "group_power_sum",
    "ideal_lists",
    "marginal_tax",
    "merge_infrequent_groups",
    "mmf_at_k",
    "ndcg_at_k",
    "pareto_frontier",
    "reference_dataset",
    "resolve_preset",
    "run_session",
    "run_sweep",
    "supply_gradient",
    "score_entropy",
    "score_skewness",
    "synth_dataset",
    "taxation_cost",
    "total_cost",
    "trajectory",
    "validate_dataset",
    "welfare_oracle",
]
