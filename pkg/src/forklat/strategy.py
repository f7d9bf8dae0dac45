"""Choosing fork width r_f and retain width r under cost and network caps.

The latency and cost of the (n, r_f, r, k) system are approximated by

    T_hat(r) = E[X_{k:r}] + lam * r * E[X_{k:r}^2] / (2 * (n - lam * r * E[X_{k:r}]))
    C_hat(r) = r * E[X_{k:r}]

which do not depend on r_f. The recommendation forks to r_f = r_max servers
and retains the r in [k, r_max] with the smallest T_hat among those with
C_hat(r) <= gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .distributions import ServiceDistribution
from .errors import ConfigInvalid, Infeasible, NonFiniteMoment
from .orderstats import expected_order_stat
from .simulation import DispatchPolicy, RunSummary, SystemConfig, simulate

__all__ = [
    "StrategyQuery",
    "CurvePoint",
    "StrategyResult",
    "ValidationRow",
    "ValidationReport",
    "estimate_curves",
    "recommend",
    "validate_recommendation",
    "COST_BUDGET",
    "FORK_CAP",
    "NO_CONSTRAINT",
]

COST_BUDGET = "cost-budget"
FORK_CAP = "fork-cap"
NO_CONSTRAINT = "none"


@dataclass(frozen=True)
class StrategyQuery:
    dist: ServiceDistribution
    n: int
    k: int
    lam: float
    gamma: float
    r_max: int

    def __post_init__(self):
        if not (1 <= self.k <= self.r_max <= self.n):
            raise ConfigInvalid(f"need 1 <= k <= r_max <= n, got k={self.k}, r_max={self.r_max}, n={self.n}")
        if not self.gamma > 0:
            raise ConfigInvalid(f"cost budget must be positive, got {self.gamma}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigInvalid(f"arrival rate must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class CurvePoint:
    r: int
    latency: float  # T_hat(r)
    cost: float  # C_hat(r)
    feasible: bool


@dataclass(frozen=True)
class StrategyResult:
    r_f_star: int
    r_star: int
    table: tuple  # CurvePoint for r = k..r_max
    binding_constraint: str
    query: StrategyQuery = field(repr=False)

    @property
    def estimated_latency(self) -> float:
        return self.point(self.r_star).latency

    @property
    def estimated_cost(self) -> float:
        return self.point(self.r_star).cost

    def point(self, r: int) -> CurvePoint:
        for p in self.table:
            if p.r == r:
                return p
        raise KeyError(r)


def _estimate(dist, n, k, lam, r) -> tuple[float, float]:
    try:
        m1 = expected_order_stat(dist, k, r, "first")
        m2 = expected_order_stat(dist, k, r, "second")
    except NonFiniteMoment as exc:
        raise NonFiniteMoment(f"r={r}: {exc}") from exc
    cost = r * m1
    denom = n - lam * r * m1
    latency = m1 + lam * r * m2 / (2.0 * denom) if denom > 0 else math.inf
    return latency, cost


def _curve(query: StrategyQuery, r_hi: int) -> list[CurvePoint]:
    out = []
    for r in range(query.k, r_hi + 1):
        t, c = _estimate(query.dist, query.n, query.k, query.lam, r)
        out.append(CurvePoint(r, t, c, bool(c <= query.gamma and math.isfinite(t))))
    return out


def estimate_curves(query: StrategyQuery) -> list[CurvePoint]:
    """(r, T_hat, C_hat, feasible) for every r in [k, r_max]."""
    return _curve(query, query.r_max)


def _argmin(points) -> Optional[CurvePoint]:
    best = None
    for p in points:  # ascending r, strict improvement keeps the smaller r on ties
        if math.isfinite(p.latency) and (best is None or p.latency < best.latency):
            best = p
    return best


def _beyond_cap(query: StrategyQuery) -> list[CurvePoint]:
    # r above the fork cap only matters for diagnosing the binding constraint;
    # a diverging moment there just means that r is not a candidate.
    out = []
    for r in range(query.r_max + 1, query.n + 1):
        try:
            t, c = _estimate(query.dist, query.n, query.k, query.lam, r)
        except NonFiniteMoment:
            continue
        out.append(CurvePoint(r, t, c, bool(c <= query.gamma and math.isfinite(t))))
    return out


def recommend(query: StrategyQuery) -> StrategyResult:
    """Pick r_f* = r_max and the feasible T_hat-argmin r*.

    ``binding_constraint`` names the constraint whose removal alone would
    lower T_hat: the cost budget is checked first, then the fork cap. When
    neither single relaxation helps it is ``"none"``.
    """
    table = estimate_curves(query)
    feasible = [p for p in table if p.feasible]
    if not feasible:
        raise Infeasible(
            f"no r in [{query.k}, {query.r_max}] has C_hat(r) <= {query.gamma} with finite T_hat",
            min_cost=min(p.cost for p in table),
        )
    best = _argmin(feasible)
    beyond = _beyond_cap(query)

    no_budget = _argmin(table)
    no_cap = _argmin([p for p in table + beyond if p.feasible])
    if no_budget is not None and no_budget.latency < best.latency:
        binding = COST_BUDGET
    elif no_cap is not None and no_cap.latency < best.latency:
        binding = FORK_CAP
    else:
        binding = NO_CONSTRAINT
    return StrategyResult(query.r_max, best.r, tuple(table), binding, query)


@dataclass
class ValidationRow:
    label: str
    r_f: int
    r: int
    summary: RunSummary
    estimated_latency: float
    estimated_cost: float

    @property
    def latency_gap(self) -> float:
        return self.summary.mean_latency - self.estimated_latency

    @property
    def cost_gap(self) -> float:
        return self.summary.mean_cost - self.estimated_cost


@dataclass
class ValidationReport:
    recommended: ValidationRow
    baselines: list  # ValidationRow for (n, r, r, k), r = k..r_max
    gamma: float

    @property
    def within_budget(self) -> bool:
        return self.recommended.summary.mean_cost <= self.gamma

    @property
    def within_budget_ci(self) -> bool:
        s = self.recommended.summary
        return s.mean_cost - s.cost_halfwidth <= self.gamma

    def baseline(self, r: int) -> ValidationRow:
        for row in self.baselines:
            if row.r == r:
                return row
        raise KeyError(r)

    def rows(self):
        return [self.recommended] + list(self.baselines)


def validate_recommendation(query: StrategyQuery, result: StrategyResult, num_jobs: int = 10_000,
                            replications: int = 20, seed: int = 0,
                            policy: DispatchPolicy | str = DispatchPolicy.UNIFORM_RANDOM,
                            jobs: int = 1) -> ValidationReport:
    """Simulate the recommendation and every (n, r, r, k) baseline for r in [k, r_max]."""
    policy = DispatchPolicy.parse(policy)

    def run(r_f, r, label, offset):
        pol = policy
        if pol is DispatchPolicy.GROUP_RANDOM and (r_f != r or query.n % r):
            pol = DispatchPolicy.UNIFORM_RANDOM
        cfg = SystemConfig(query.n, r_f, r, query.k, query.lam, query.dist, pol,
                           num_jobs=num_jobs, replications=replications, seed=seed + offset)
        p = result.point(r)
        return ValidationRow(label, r_f, r, simulate(cfg, jobs=jobs), p.latency, p.cost)

    rec = run(result.r_f_star, result.r_star, "recommended", 0)
    base = [run(r, r, f"baseline r={r}", r) for r in range(query.k, query.r_max + 1)]
    return ValidationReport(rec, base, query.gamma)
