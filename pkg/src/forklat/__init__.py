"""Latency and cost of redundancy in (n, r_f, r, k) fork-join queueing systems."""

from .analytic import (
    AnalyticReport,
    diversity_parallelism_limit,
    early_cancel_general_k,
    fork_early_cancel_k1,
    fork_join_k1,
    full_quorum_max_response_bound,
    general_k_cost_bounds,
    general_k_latency_bounds,
    group_based_partial_fork,
)
from .distributions import (
    Empirical,
    Exponential,
    HyperExponential,
    Mixture,
    Pareto,
    ServiceDistribution,
    ShiftedExponential,
    Uniform,
    Weibull,
    parse_dist,
)
from .errors import (
    ConfigInvalid,
    DistSpecError,
    ForklatError,
    IndivisibleGroup,
    Infeasible,
    InsufficientSamples,
    NonFiniteMoment,
    Unstable,
)
from .orderstats import expected_order_stat, order_stat_moment, order_stat_tail
from .simulation import DispatchPolicy, RunSummary, SystemConfig, mg1_response_sampler, simulate
from .strategy import StrategyQuery, StrategyResult, estimate_curves, recommend, validate_recommendation
from .tails import TailClass, TailLabel, classify_tail

__version__ = "0.1.0"
