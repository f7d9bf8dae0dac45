import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from forklat.analytic import fork_join_k1, group_based_partial_fork
from forklat.distributions import Exponential, HyperExponential, Pareto, ShiftedExponential
from forklat.errors import ConfigInvalid, Unstable
from forklat.simulation import (
    RECORD_HEADER,
    DispatchPolicy,
    SystemConfig,
    mg1_response_sampler,
    run_replication,
    simulate,
    write_job_records,
)

SEXP = ShiftedExponential(2.0, 0.5)


def cfg(n, r_f, r, k, lam, dist=SEXP, policy="uniform", **kw):
    kw.setdefault("num_jobs", 4000)
    kw.setdefault("replications", 4)
    return SystemConfig(n, r_f, r, k, lam, dist, policy, **kw)


SHAPES = [
    (4, 4, 4, 1), (4, 4, 1, 1), (6, 3, 3, 1), (10, 10, 10, 4), (10, 10, 4, 4),
    (10, 8, 3, 1), (7, 5, 4, 2), (6, 6, 6, 6),
]


@pytest.mark.parametrize("shape", SHAPES, ids=str)
@pytest.mark.parametrize("policy", ["uniform", "round-robin"])
def test_job_accounting(shape, policy):
    n, r_f, r, k = shape
    res = run_replication(cfg(n, r_f, r, k, 0.4 * n / 10, Pareto(0.5, 2.5), policy, num_jobs=3000), 0)
    started = ~np.isnan(res.task_start)
    assert np.all(res.finished == k)
    assert np.all((res.started >= k) & (res.started <= r))
    np.testing.assert_array_equal(started.sum(axis=1), res.started)
    durations = np.where(started, res.task_end - res.task_start, 0.0).sum(axis=1)
    np.testing.assert_allclose(res.cost, durations, atol=1e-9, rtol=0)
    np.testing.assert_allclose(res.cost, res.attributed, atol=1e-9, rtol=0)
    # nothing of a departed job survives its departure
    assert np.all(np.where(started, res.task_end, -np.inf) <= res.finish[:, None])
    assert np.all(np.where(started, res.task_start, -np.inf) <= res.finish[:, None])
    assert np.all(res.latency >= 0) and np.all(res.cost >= 0)
    # every server is used by at most one task at a time
    for s in range(n):
        mask = (res.task_server == s) & started
        st_, en = res.task_start[mask], res.task_end[mask]
        order = np.argsort(st_, kind="stable")
        assert np.all(st_[order][1:] >= en[order][:-1] - 1e-12)


def test_group_dispatch_accounting():
    res = run_replication(cfg(12, 3, 3, 1, 1.0, Pareto(1.0, 2.2), "group"), 0)
    groups = res.task_server // 3
    assert np.all(groups == groups[:, :1])
    assert np.all(res.finished == 1)


def test_each_job_forks_to_distinct_servers():
    res = run_replication(cfg(10, 7, 3, 2, 0.5), 0)
    srt = np.sort(res.task_server, axis=1)
    assert np.all(np.diff(srt, axis=1) > 0)


def test_zero_load_single_job_is_min_of_fresh_draws():
    c = cfg(5, 5, 5, 1, 0.0, num_jobs=1, replications=1, warmup_jobs=0)
    res = run_replication(c, 0)
    from forklat.simulation import _streams

    draws = SEXP.sample(_streams(c.seed, 0)[1], 5)
    assert res.latency[0] == pytest.approx(draws.min(), abs=1e-12)
    assert res.cost[0] == pytest.approx(5 * draws.min(), abs=1e-9)


def test_zero_load_runs_jobs_back_to_back():
    res = run_replication(cfg(4, 4, 4, 2, 0.0, num_jobs=500), 0)
    assert np.all(res.arrival[1:] == res.finish[:-1])


@pytest.mark.parametrize("lam", [0.1, 0.25])
def test_full_fork_k1_matches_exact_theory(lam):
    s = simulate(cfg(4, 4, 4, 1, lam, num_jobs=20_000, replications=10, seed=99))
    rep = fork_join_k1(SEXP, 4, lam)
    assert abs(s.mean_latency - rep.latency_exact) <= s.latency_halfwidth * 1.5
    assert abs(s.mean_cost - rep.cost_exact) <= s.cost_halfwidth * 1.5


def test_group_partial_fork_matches_exact_theory():
    d = Pareto(1.0, 2.2)
    s = simulate(cfg(12, 3, 3, 1, 1.5, d, "group", num_jobs=20_000, replications=10, seed=7))
    rep = group_based_partial_fork(d, 12, 3, 1.5)
    assert abs(s.mean_latency - rep.latency_exact) <= s.latency_halfwidth * 1.5
    assert abs(s.mean_cost - rep.cost_exact) <= s.cost_halfwidth * 1.5


def test_early_cancel_cost_is_k_mean():
    s = simulate(cfg(10, 10, 3, 3, 1.0, Exponential(1.0), num_jobs=10_000, replications=8, seed=3))
    assert abs(s.mean_cost - 3.0) <= 3 * s.cost_se


@pytest.mark.parametrize("policy", ["group", "uniform", "round-robin"])
def test_dispatch_is_symmetric(policy):
    s = simulate(cfg(6, 3, 3, 1, 0.5, policy=policy, num_jobs=20_000, replications=2, seed=5))
    counts = s.assigned
    p = stats.chisquare(counts).pvalue
    assert p > 0.01


def test_determinism_and_parallel_equivalence():
    c = cfg(6, 4, 2, 1, 0.6, HyperExponential(0.1, 2.0, 0.2), num_jobs=3000, replications=3, seed=11)
    a = simulate(c)
    b = simulate(c)
    p = simulate(c, jobs=2)
    assert a.mean_latency == b.mean_latency == p.mean_latency
    np.testing.assert_array_equal(a.rep_cost, p.rep_cost)
    d = simulate(c.with_(seed=12))
    assert d.mean_latency != a.mean_latency


def test_summary_fields():
    s = simulate(cfg(4, 4, 2, 1, 0.3, keep_records=True))
    assert s.latency_halfwidth > 0 and s.cost_halfwidth > 0
    assert np.all((s.utilization >= 0) & (s.utilization <= 1))
    assert s.jobs_measured == 4 * (4000 - 400)
    recs = s.records()
    assert len(recs) == 4000
    r0 = recs[0]
    assert r0.latency == pytest.approx(r0.finish_time - r0.arrival_time)
    assert sum(t is not None for t in r0.task_start_times) == r0.num_started


def test_single_replication_uses_batch_means():
    s = simulate(cfg(4, 4, 4, 1, 0.2, replications=1, num_jobs=20_000))
    assert math.isfinite(s.latency_halfwidth) and s.latency_halfwidth > 0


def test_divergence_flag():
    assert simulate(cfg(4, 4, 4, 1, 0.6, num_jobs=20_000, replications=2)).diverging
    assert not simulate(cfg(4, 4, 4, 1, 0.1, num_jobs=20_000, replications=2)).diverging


@pytest.mark.parametrize(
    "args",
    [
        (4, 4, 4, 5, 0.1), (4, 3, 4, 1, 0.1), (4, 5, 5, 1, 0.1), (4, 4, 4, 1, -1.0),
        (4, 4, 4, 0, 0.1), (4, 4, 4, 1, math.inf),
    ],
)
def test_invalid_configs(args):
    with pytest.raises(ConfigInvalid):
        SystemConfig(*args, SEXP)


def test_group_dispatch_invariants():
    with pytest.raises(ConfigInvalid):
        SystemConfig(6, 4, 4, 1, 0.1, SEXP, "group")
    with pytest.raises(ConfigInvalid):
        SystemConfig(6, 3, 2, 1, 0.1, SEXP, "group")
    with pytest.raises(ConfigInvalid):
        SystemConfig(6, 3, 3, 1, 0.1, SEXP, num_jobs=100, warmup_jobs=100)
    assert DispatchPolicy.parse("rr") is DispatchPolicy.ROUND_ROBIN


def test_record_csv(tmp_path):
    res = run_replication(cfg(4, 4, 2, 1, 0.3, num_jobs=50), 0)
    path = tmp_path / "jobs.csv"
    write_job_records(path, res)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == RECORD_HEADER
    assert len(rows) == 51
    assert float(rows[1][2]) == res.latency[0]


def test_mg1_sampler_matches_mm1():
    lam, mu = 0.6, 1.0
    x = mg1_response_sampler(Exponential(mu), lam, 400_000, seed=2)
    # response samples are autocorrelated; use batch means for the error
    b = x.reshape(100, -1).mean(axis=1)
    se = b.std(ddof=1) / math.sqrt(b.size)
    assert abs(x.mean() - 1 / (mu - lam)) < 3 * se


def test_mg1_sampler_matches_pk():
    lam = 0.2
    x = mg1_response_sampler(SEXP, lam, 400_000, seed=4)
    b = x.reshape(100, -1).mean(axis=1)
    se = b.std(ddof=1) / math.sqrt(b.size)
    pk = SEXP.mean + lam * SEXP.second_moment / (2 * (1 - lam * SEXP.mean))
    assert abs(x.mean() - pk) < 3 * se


def test_subnormal_rate_rejected():
    with pytest.raises(ConfigInvalid):
        SystemConfig(2, 2, 2, 1, 5e-324, SEXP).validate()


def test_mg1_sampler_zero_load_and_errors():
    x = mg1_response_sampler(SEXP, 0.0, 1000, seed=1)
    assert x.size == 1000 and x.min() >= 2.0
    with pytest.raises(Unstable):
        mg1_response_sampler(SEXP, 0.25, 10)
    np.testing.assert_array_equal(mg1_response_sampler(SEXP, 0.1, 500, 8), mg1_response_sampler(SEXP, 0.1, 500, 8))


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 8), data=st.data(), lam=st.floats(0.0, 2.0, allow_subnormal=False),
    policy=st.sampled_from(["uniform", "round-robin"]), seed=st.integers(0, 2**32),
)
def test_accounting_property(n, data, lam, policy, seed):
    r_f = data.draw(st.integers(1, n))
    r = data.draw(st.integers(1, r_f))
    k = data.draw(st.integers(1, r))
    c = SystemConfig(n, r_f, r, k, lam, HyperExponential(0.3, 2.0, 0.5), policy,
                     num_jobs=300, replications=1, seed=seed)
    res = run_replication(c, 0)
    started = ~np.isnan(res.task_start)
    assert np.all(res.finished == k)
    assert np.all((res.started >= k) & (res.started <= r))
    durations = np.where(started, res.task_end - res.task_start, 0.0).sum(axis=1)
    np.testing.assert_allclose(res.cost, durations, atol=1e-9, rtol=0)
    assert np.all(res.finish >= res.arrival)
