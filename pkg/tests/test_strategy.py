import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forklat.analytic import group_based_partial_fork
from forklat.distributions import (
    Empirical,
    Exponential,
    HyperExponential,
    Mixture,
    Pareto,
    ShiftedExponential,
)
from forklat.errors import ConfigInvalid, Infeasible, NonFiniteMoment
from forklat.orderstats import expected_order_stat
from forklat.strategy import (
    COST_BUDGET,
    FORK_CAP,
    NO_CONSTRAINT,
    StrategyQuery,
    estimate_curves,
    recommend,
    validate_recommendation,
)

PARETO = Pareto(1.0, 2.2)
MIX = Mixture((0.5, 0.5), (Exponential(2.0), ShiftedExponential(1.0, 1.5)))


@pytest.mark.parametrize("r", [1, 2, 3, 4, 6, 12])
def test_estimates_match_group_based_formulas(r):
    q = StrategyQuery(PARETO, 12, 1, 0.8, math.inf, 12)
    p = estimate_curves(q)[r - 1]
    rep = group_based_partial_fork(PARETO, 12, r, 0.8)
    assert p.latency == pytest.approx(rep.latency_exact, rel=1e-9)
    assert p.cost == pytest.approx(rep.cost_exact, rel=1e-9)


def test_zero_load_estimates():
    q = StrategyQuery(ShiftedExponential(1.0, 0.5), 8, 1, 0.0, math.inf, 8)
    curve = estimate_curves(q)
    lat = [p.latency for p in curve]
    assert np.all(np.diff(lat) < 0)
    for p in curve:
        assert p.latency == pytest.approx(expected_order_stat(q.dist, 1, p.r), rel=1e-12)
        assert p.cost == pytest.approx(p.r * p.latency, rel=1e-12)


def test_exponential_cost_is_flat():
    curve = estimate_curves(StrategyQuery(Exponential(0.5), 10, 1, 0.3, 10.0, 10))
    for p in curve:
        assert p.cost == pytest.approx(2.0, rel=1e-7)


def test_unstable_estimate_is_infinite():
    curve = estimate_curves(StrategyQuery(PARETO, 4, 1, 3.0, math.inf, 4))
    assert curve[-1].latency == math.inf and not curve[-1].feasible


def test_recommend_pareto_scenario():
    res = recommend(StrategyQuery(PARETO, 10, 1, 0.7, 5.0, 8))
    assert res.r_f_star == 8
    feasible = [p for p in res.table if p.cost <= 5.0]
    assert res.r_star == min(feasible, key=lambda p: p.latency).r
    assert res.estimated_cost <= 5.0
    assert len(res.table) == 8


def test_recommend_mixture_is_fork_capped():
    res = recommend(StrategyQuery(MIX, 10, 1, 0.3, 2.0, 5))
    assert (res.r_star, res.r_f_star, res.binding_constraint) == (5, 5, FORK_CAP)


def test_binding_cost_budget():
    res = recommend(StrategyQuery(PARETO, 10, 1, 0.7, 3.0, 8))
    assert res.r_star == 2
    assert res.binding_constraint == COST_BUDGET


def test_binding_none():
    res = recommend(StrategyQuery(PARETO, 10, 1, 0.7, 100.0, 10))
    assert res.binding_constraint == NO_CONSTRAINT


def test_log_convex_prefers_full_redundancy():
    res = recommend(StrategyQuery(HyperExponential(0.1, 2.0, 0.2), 6, 1, 1.2, math.inf, 6))
    assert res.r_star == 6


def test_infeasible_reports_min_cost():
    with pytest.raises(Infeasible) as info:
        recommend(StrategyQuery(PARETO, 10, 1, 0.7, 1.0, 8))
    assert info.value.min_cost == pytest.approx(PARETO.mean, rel=1e-9)


def test_non_finite_moment_names_r():
    with pytest.raises(NonFiniteMoment, match="r=1"):
        estimate_curves(StrategyQuery(Pareto(1.0, 1.5), 10, 1, 0.1, 10.0, 4))


def test_query_validation():
    with pytest.raises(ConfigInvalid):
        StrategyQuery(PARETO, 10, 3, 0.7, 5.0, 2)
    with pytest.raises(ConfigInvalid):
        StrategyQuery(PARETO, 10, 1, 0.7, 0.0, 2)
    with pytest.raises(ConfigInvalid):
        StrategyQuery(PARETO, 10, 1, -0.1, 1.0, 2)


def test_empirical_strategy_is_deterministic():
    rng = np.random.default_rng(0)
    e = Empirical(PARETO.sample(rng, 5000))
    q = StrategyQuery(e, 10, 1, 0.7, 5.0, 8)
    a, b = recommend(q), recommend(q)
    assert a == b
    assert 1 <= a.r_star <= 8


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(2.0, 20.0), extra=st.floats(0.0, 10.0), r_max=st.integers(1, 9), lam=st.floats(0.0, 1.0))
def test_relaxation_never_hurts(gamma, extra, r_max, lam):
    base = StrategyQuery(PARETO, 10, 1, lam, gamma, r_max)
    res = recommend(base)
    assert res.estimated_cost <= gamma
    looser = recommend(StrategyQuery(PARETO, 10, 1, lam, gamma + extra, min(10, r_max + 1)))
    assert looser.estimated_latency <= res.estimated_latency


def test_validation_report():
    q = StrategyQuery(PARETO, 10, 1, 0.7, 5.0, 8)
    res = recommend(q)
    rep = validate_recommendation(q, res, num_jobs=3000, replications=4, seed=1)
    assert rep.recommended.r_f == 8 and rep.recommended.r == res.r_star
    assert [b.r for b in rep.baselines] == list(range(1, 9))
    assert rep.recommended.summary.mean_latency < rep.baseline(1).summary.mean_latency
    assert rep.within_budget_ci


def test_estimate_upper_bounds_general_k():
    from forklat.simulation import SystemConfig, simulate

    q = StrategyQuery(ShiftedExponential(0.5, 1.0), 10, 3, 0.6, math.inf, 8)
    curve = {p.r: p for p in estimate_curves(q)}
    for r in (3, 5, 8):
        s = simulate(SystemConfig(10, 8, r, 3, 0.6, q.dist, num_jobs=5000, replications=6, seed=r))
        assert curve[r].latency >= s.mean_latency - s.latency_halfwidth
