"""Closed-form latency and cost results for fork-join redundancy systems.

All functions return an :class:`AnalyticReport`. Latency is ``inf`` when the
arrival rate is at or beyond the stability threshold of the formula used;
sweeps over the arrival rate therefore always produce total curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distributions import ServiceDistribution
from .errors import IndivisibleGroup, InsufficientSamples, Unstable
from .orderstats import expected_order_stat

__all__ = [
    "AnalyticReport",
    "fork_join_k1",
    "fork_early_cancel_k1",
    "group_based_partial_fork",
    "general_k_latency_bounds",
    "general_k_cost_bounds",
    "early_cancel_general_k",
    "full_quorum_max_response_bound",
    "diversity_parallelism_limit",
    "stability_capacity",
    "erlang_c",
    "mmn_mean_wait",
    "pk_response_time",
    "expected_max_of_samples",
    "MIN_RESPONSE_SAMPLES",
]

MIN_RESPONSE_SAMPLES = 10_000

# provenance labels
PK_MIN = "pollaczek-khinchine, min-of-n service"
COST_MIN = "n times expected minimum"
CAP_COST = "capacity n/E[C]"
MGN_APPROX = "approximation: M/G/n via Erlang-C scaling"
NO_WAIT = "no-wait bound E[X]"
ZERO_WAIT = "zero-wait bound E[X_k:k]"
EARLY_COST = "early-cancel cost k*E[X]"
GROUP_PK = "group-based pollaczek-khinchine"
GROUP_COST = "group-based r*E[X_1:r]"
SPLIT_MERGE = "split-merge upper bound"
K1_PREDECESSORS = "k=1 predecessor lower bound"
COST_UPPER = "cost upper bound (k-1)E[X]+(n-k+1)E[X_1:n-k+1]"
COST_LOWER = "cost lower bound sum E[X_i:n]+(n-k)E[X_1:n-k+1]"
MAX_RESPONSE = "Monte-Carlo estimate of E[max of independent M/G/1 responses]"


@dataclass
class AnalyticReport:
    scenario: dict
    latency_lower: float
    latency_upper: float
    cost_lower: float
    cost_upper: float
    capacity: float
    latency_exact: Optional[float] = None
    cost_exact: Optional[float] = None
    provenance: dict = field(default_factory=dict)
    #: standard error attached to Monte-Carlo valued fields, keyed by field name
    std_errors: dict = field(default_factory=dict)

    def rows(self):
        """Yield ``(metric, value, provenance)`` for every populated field."""
        for name in ("latency_exact", "latency_lower", "latency_upper",
                     "cost_exact", "cost_lower", "cost_upper", "capacity"):
            value = getattr(self, name)
            if value is not None:
                yield name, value, self.provenance.get(name, "")


def stability_capacity(cost_per_job: float, n: int) -> float:
    """Largest supportable arrival rate, n / E[C], for a symmetric policy."""
    if not cost_per_job > 0:
        raise ValueError(f"cost per job must be positive, got {cost_per_job}")
    return n / cost_per_job


def pk_response_time(lam: float, m1: float, m2: float) -> float:
    """Mean M/G/1 response time m1 + lam*m2 / (2(1 - lam*m1)); inf when unstable."""
    rho = lam * m1
    if rho >= 1:
        return math.inf
    return m1 + lam * m2 / (2.0 * (1.0 - rho))


def erlang_c(servers: int, offered_load: float) -> float:
    """Probability that an arrival waits in an M/M/c queue.

    ``offered_load`` is lambda/mu in Erlangs. Uses the Erlang-B recurrence,
    which stays in [0, 1] and is stable for thousands of servers.
    """
    c, a = int(servers), float(offered_load)
    if a >= c:
        return 1.0
    if a == 0:
        return 0.0
    b = 1.0
    for m in range(1, c + 1):
        b = a * b / (m + a * b)
    return c * b / (c - a * (1.0 - b))


def mmn_mean_wait(servers: int, lam: float, mean_service: float) -> float:
    """Mean queueing delay of an M/M/c queue with the given mean service time."""
    a = lam * mean_service
    if a >= servers:
        return math.inf
    mu = 1.0 / mean_service
    return erlang_c(servers, a) / (servers * mu - lam)


def _scenario(dist, **kw) -> dict:
    return {"dist": str(dist), **kw}


def fork_join_k1(dist: ServiceDistribution, n: int, lam: float) -> AnalyticReport:
    """Exact latency and cost of the (n, 1) fork-join system.

    All n replicas start together, so the system is an M/G/1 queue whose
    service time is the minimum of n draws.
    """
    if n < 1 or lam < 0:
        raise ValueError("need n >= 1 and lambda >= 0")
    m1 = expected_order_stat(dist, 1, n, "first")
    m2 = expected_order_stat(dist, 1, n, "second")
    latency = pk_response_time(lam, m1, m2)
    cost = n * m1
    prov = {f: PK_MIN for f in ("latency_exact", "latency_lower", "latency_upper")}
    prov.update({f: COST_MIN for f in ("cost_exact", "cost_lower", "cost_upper")})
    prov["capacity"] = CAP_COST
    return AnalyticReport(
        scenario=_scenario(dist, system="fork-join", n=n, r_f=n, r=n, k=1, lam=lam),
        latency_exact=latency, latency_lower=latency, latency_upper=latency,
        cost_exact=cost, cost_lower=cost, cost_upper=cost,
        capacity=1.0 / m1, provenance=prov,
    )


def fork_early_cancel_k1(dist: ServiceDistribution, n: int, lam: float) -> AnalyticReport:
    """(n, 1) fork-early-cancel: an M/G/n queue.

    Cost is exactly E[X]. Latency has no closed form; ``latency_upper`` holds
    the usual M/G/n approximation E[X] + E[X^2]/(2E[X]^2) * E[W_M/M/n] and
    ``latency_lower`` the zero-wait value E[X]. ``latency_exact`` stays empty.
    """
    if n < 1 or lam < 0:
        raise ValueError("need n >= 1 and lambda >= 0")
    m1 = expected_order_stat(dist, 1, 1, "first")
    m2 = expected_order_stat(dist, 1, 1, "second")
    rho = lam * m1 / n
    if rho >= 1:
        upper = lower = math.inf
    else:
        upper = m1 + m2 / (2.0 * m1**2) * mmn_mean_wait(n, lam, m1)
        lower = m1
    return AnalyticReport(
        scenario=_scenario(dist, system="fork-early-cancel", n=n, r_f=n, r=1, k=1, lam=lam),
        latency_lower=lower, latency_upper=upper,
        cost_exact=m1, cost_lower=m1, cost_upper=m1,
        capacity=n / m1,
        provenance={"latency_lower": NO_WAIT, "latency_upper": MGN_APPROX,
                    "cost_exact": EARLY_COST, "cost_lower": EARLY_COST,
                    "cost_upper": EARLY_COST, "capacity": CAP_COST},
    )


def group_based_partial_fork(dist: ServiceDistribution, n: int, r: int, lam: float) -> AnalyticReport:
    """(n, r, 1) partial fork with group-based random dispatch.

    Each of the n/r groups is an independent (r, 1) fork-join system fed at
    rate lam*r/n.
    """
    if r < 1 or n < 1:
        raise ValueError("need n >= 1 and r >= 1")
    if n % r:
        raise IndivisibleGroup(f"group size r={r} does not divide n={n}")
    m1 = expected_order_stat(dist, 1, r, "first")
    m2 = expected_order_stat(dist, 1, r, "second")
    denom = n - lam * r * m1
    latency = m1 + lam * r * m2 / (2.0 * denom) if denom > 0 else math.inf
    cost = r * m1
    prov = {f: GROUP_PK for f in ("latency_exact", "latency_lower", "latency_upper")}
    prov.update({f: GROUP_COST for f in ("cost_exact", "cost_lower", "cost_upper")})
    prov["capacity"] = CAP_COST
    return AnalyticReport(
        scenario=_scenario(dist, system="group-partial-fork", n=n, r_f=r, r=r, k=1, lam=lam),
        latency_exact=latency, latency_lower=latency, latency_upper=latency,
        cost_exact=cost, cost_lower=cost, cost_upper=cost,
        capacity=stability_capacity(cost, n), provenance=prov,
    )


def _cost_bounds(dist, n, k):
    tail_group = n - k + 1
    m_group = expected_order_stat(dist, 1, tail_group, "first")
    upper = (k - 1) * dist_mean(dist) + tail_group * m_group
    lower = sum(expected_order_stat(dist, i, n, "first") for i in range(1, k + 1)) + (n - k) * m_group
    if k == 1:
        lower = upper = n * m_group
    # The two bounds agree analytically at k=1 and k=n; clip quadrature noise.
    return min(lower, upper), max(lower, upper)


def dist_mean(dist: ServiceDistribution) -> float:
    return expected_order_stat(dist, 1, 1, "first")


def general_k_cost_bounds(dist: ServiceDistribution, n: int, k: int) -> AnalyticReport:
    """Upper and lower bounds on E[C] of the (n, k) fork-join system."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    lower, upper = _cost_bounds(dist, n, k)
    return AnalyticReport(
        scenario=_scenario(dist, system="fork-join", n=n, r_f=n, r=n, k=k),
        latency_lower=0.0, latency_upper=math.inf,
        cost_lower=lower, cost_upper=upper,
        capacity=stability_capacity(lower, n),
        provenance={"cost_lower": COST_LOWER, "cost_upper": COST_UPPER,
                    "capacity": CAP_COST + " at the cost lower bound (necessary condition)"},
    )


def general_k_latency_bounds(dist: ServiceDistribution, n: int, k: int, lam: float) -> AnalyticReport:
    """Bounds on E[T] of the (n, k) fork-join system.

    The upper bound is the split-merge system (an M/G/1 queue serving
    X_{k:n}); the lower bound charges the tagged job X_{k:n} but lets every
    earlier job leave after its first finish.
    """
    if not 1 <= k <= n or lam < 0:
        raise ValueError(f"need 1 <= k <= n and lambda >= 0, got k={k}, n={n}, lambda={lam}")
    mk1 = expected_order_stat(dist, k, n, "first")
    mk2 = expected_order_stat(dist, k, n, "second")
    upper = pk_response_time(lam, mk1, mk2)
    if k == 1:
        lower = upper
    else:
        m1 = expected_order_stat(dist, 1, n, "first")
        m2 = expected_order_stat(dist, 1, n, "second")
        wait = pk_response_time(lam, m1, m2) - m1
        lower = mk1 + wait
    lower = min(lower, upper)
    cost_lower, cost_upper = _cost_bounds(dist, n, k)
    prov = {"latency_lower": K1_PREDECESSORS, "latency_upper": SPLIT_MERGE,
            "cost_lower": COST_LOWER, "cost_upper": COST_UPPER,
            "capacity": CAP_COST + " at the cost lower bound (necessary condition)"}
    exact = None
    if k == 1:
        exact = upper
        prov["latency_exact"] = PK_MIN
    return AnalyticReport(
        scenario=_scenario(dist, system="fork-join", n=n, r_f=n, r=n, k=k, lam=lam),
        latency_exact=exact, latency_lower=lower, latency_upper=upper,
        cost_lower=cost_lower, cost_upper=cost_upper,
        capacity=stability_capacity(cost_lower, n), provenance=prov,
    )


def expected_max_of_samples(samples, k: int) -> float:
    """E[max of k i.i.d. draws] under the empirical distribution of ``samples``.

    Equals the integral of 1 - F_hat(x)^k over x >= 0.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    N = s.size
    i = np.arange(1, N + 1, dtype=float)
    w = (i / N) ** k - ((i - 1) / N) ** k
    return float(np.dot(w, s))


def _block_bootstrap_se(samples, k: int, rng: np.random.Generator, n_boot: int = 200,
                        n_blocks: int = 100) -> float:
    # Queue response samples are autocorrelated; resample contiguous blocks.
    s = np.asarray(samples, dtype=float)
    size = s.size // n_blocks
    blocks = s[: size * n_blocks].reshape(n_blocks, size)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        pick = rng.integers(0, n_blocks, n_blocks)
        stats[b] = expected_max_of_samples(blocks[pick].ravel(), k)
    return float(stats.std(ddof=1))


def _max_response_report(dist, n, k, lam, eff_rate, samples, seed, system, r, cost_exact):
    s = np.asarray(samples, dtype=float)
    if s.size < MIN_RESPONSE_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_RESPONSE_SAMPLES} response samples, got {s.size}")
    mean_x = dist_mean(dist)
    if eff_rate * mean_x >= 1:
        raise Unstable(f"per-server load {eff_rate * mean_x:.4g} >= 1")
    upper = expected_max_of_samples(s, k)
    se = _block_bootstrap_se(s, k, np.random.default_rng(seed))
    prov = {"latency_upper": MAX_RESPONSE, "latency_lower": ZERO_WAIT}
    if cost_exact is not None:
        prov.update({"cost_exact": EARLY_COST, "cost_lower": EARLY_COST, "cost_upper": EARLY_COST})
        cost_lo = cost_hi = cost_exact
    else:
        cost_lo, cost_hi = _cost_bounds(dist, n, k)
        prov.update({"cost_lower": COST_LOWER, "cost_upper": COST_UPPER})
    prov["capacity"] = CAP_COST
    # With no queueing the k retained tasks start together.
    lower = min(expected_order_stat(dist, k, k, "first"), upper)
    return AnalyticReport(
        scenario=_scenario(dist, system=system, n=n, r_f=n, r=r, k=k, lam=lam),
        latency_lower=lower, latency_upper=upper,
        cost_exact=cost_exact, cost_lower=cost_lo, cost_upper=cost_hi,
        capacity=stability_capacity(cost_lo, n), provenance=prov,
        std_errors={"latency_upper": se},
    )


def early_cancel_general_k(dist: ServiceDistribution, n: int, k: int, lam: float,
                           response_samples, seed: int = 0) -> AnalyticReport:
    """(n, k) fork-early-cancel: exact cost and a latency upper bound.

    ``response_samples`` must be M/G/1 response times at arrival rate
    lam*k/n (see :func:`forklat.simulation.mg1_response_sampler`). The bound
    E[max(R_1..R_k)] is evaluated on their empirical distribution and its
    block-bootstrap standard error is stored in ``std_errors``.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    cost = k * dist_mean(dist)
    return _max_response_report(dist, n, k, lam, lam * k / n, response_samples, seed,
                                "fork-early-cancel", k, cost)


def full_quorum_max_response_bound(dist: ServiceDistribution, n: int, lam: float,
                                   response_samples, seed: int = 0) -> AnalyticReport:
    """(n, n) fork-join: E[T] <= E[max(R_1..R_n)] with R the M/G/1 response at rate lam."""
    return _max_response_report(dist, n, n, lam, lam, response_samples, seed,
                                "fork-join", n, None)


def diversity_parallelism_limit(delta_total: float, mu: float, n: int, k: int) -> float:
    """Zero-load E[T] = E[X_{k:n}] for X ~ ShiftedExp(delta_total/k, mu)."""
    if not 1 <= k <= n or mu <= 0 or delta_total < 0:
        raise ValueError("need 1 <= k <= n, mu > 0, delta_total >= 0")
    h = math.fsum(1.0 / i for i in range(n - k + 1, n + 1))
    return delta_total / k + h / mu
