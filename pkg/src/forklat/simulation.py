"""Discrete-event simulation of the general (n, r_f, r, k) fork-join system.

A job is forked to ``r_f`` of the ``n`` FCFS servers. Once ``r`` of its tasks
are in service, its remaining queued tasks are dropped (if more than the
remaining quota start at the same instant, the survivors are picked uniformly
at random). When ``k`` tasks finish, the job departs and everything else it
owns, queued or running, is cancelled. Special cases:

* ``(n, n, n, k)`` is the (n, k) fork-join system,
* ``(n, n, k, k)`` is (n, k) fork-early-cancel,
* ``(n, r, r, k)`` is the (n, r, k) partial fork.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernel
from .distributions import ServiceDistribution
from .errors import ConfigInvalid, Unstable

__all__ = [
    "DispatchPolicy",
    "SystemConfig",
    "JobRecord",
    "ReplicationResult",
    "RunSummary",
    "simulate",
    "run_replication",
    "mg1_response_sampler",
    "write_job_records",
    "RECORD_HEADER",
]

RECORD_HEADER = ("job_id", "arrival", "latency", "cost", "num_started", "num_finished")


class DispatchPolicy(str, enum.Enum):
    GROUP_RANDOM = "group"
    UNIFORM_RANDOM = "uniform"
    ROUND_ROBIN = "round-robin"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value) -> "DispatchPolicy":
        if isinstance(value, cls):
            return value
        aliases = {"group": cls.GROUP_RANDOM, "group-random": cls.GROUP_RANDOM,
                   "uniform": cls.UNIFORM_RANDOM, "uniform-random": cls.UNIFORM_RANDOM,
                   "round-robin": cls.ROUND_ROBIN, "roundrobin": cls.ROUND_ROBIN, "rr": cls.ROUND_ROBIN}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigInvalid(f"unknown dispatch policy {value!r}") from None

    @property
    def code(self) -> int:
        return {DispatchPolicy.GROUP_RANDOM: _kernel.GROUP_RANDOM,
                DispatchPolicy.UNIFORM_RANDOM: _kernel.UNIFORM_RANDOM,
                DispatchPolicy.ROUND_ROBIN: _kernel.ROUND_ROBIN}[self]


@dataclass(frozen=True)
class SystemConfig:
    """One simulated scenario plus its run controls.

    ``warmup_jobs=None`` discards the first 10% of each replication.
    """

    n: int
    r_f: int
    r: int
    k: int
    lam: float
    dist: ServiceDistribution
    policy: DispatchPolicy = DispatchPolicy.UNIFORM_RANDOM
    num_jobs: int = 10_000
    warmup_jobs: Optional[int] = None
    seed: int = 0
    replications: int = 20
    keep_records: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policy", DispatchPolicy.parse(self.policy))
        self.validate()

    def validate(self) -> None:
        n, r_f, r, k = self.n, self.r_f, self.r, self.k
        for name in ("n", "r_f", "r", "k", "num_jobs", "replications"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigInvalid(f"{name} must be a positive integer, got {v!r}")
        if not (k <= r <= r_f <= n):
            raise ConfigInvalid(f"need k <= r <= r_f <= n, got n={n}, r_f={r_f}, r={r}, k={k}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigInvalid(f"arrival rate must be finite and >= 0, got {self.lam}")
        if self.lam > 0 and not math.isfinite(1.0 / self.lam):
            raise ConfigInvalid(f"arrival rate {self.lam} is too small to represent interarrival times")
        if self.policy is DispatchPolicy.GROUP_RANDOM and (r_f != r or n % r):
            raise ConfigInvalid("group-based dispatch needs r_f == r and r dividing n")
        if self.warmup_jobs is not None and not 0 <= self.warmup_jobs < self.num_jobs:
            raise ConfigInvalid(f"warmup_jobs must be in [0, num_jobs), got {self.warmup_jobs}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigInvalid("seed must fit in 64 unsigned bits")

    @property
    def warmup(self) -> int:
        return self.num_jobs // 10 if self.warmup_jobs is None else self.warmup_jobs

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass
class JobRecord:
    job_id: int
    arrival_time: float
    finish_time: float
    task_start_times: tuple  # one entry per forked server, None if never started
    servers: tuple
    cost: float
    num_started: int
    num_finished: int

    @property
    def latency(self) -> float:
        return self.finish_time - self.arrival_time


@dataclass
class ReplicationResult:
    """Raw per-job and per-task arrays from one replication."""

    arrival: np.ndarray
    finish: np.ndarray
    cost: np.ndarray
    started: np.ndarray
    finished: np.ndarray
    attributed: np.ndarray  # busy time charged to each job from the servers' side
    task_server: np.ndarray  # (num_jobs, r_f)
    task_start: np.ndarray
    task_end: np.ndarray
    busy: np.ndarray
    assigned: np.ndarray
    end_time: float

    @property
    def latency(self) -> np.ndarray:
        return self.finish - self.arrival

    def records(self) -> list[JobRecord]:
        out = []
        for j in range(self.arrival.size):
            starts = tuple(None if math.isnan(t) else float(t) for t in self.task_start[j])
            out.append(JobRecord(j, float(self.arrival[j]), float(self.finish[j]), starts,
                                 tuple(int(s) for s in self.task_server[j]), float(self.cost[j]),
                                 int(self.started[j]), int(self.finished[j])))
        return out


@dataclass
class RunSummary:
    mean_latency: float
    latency_halfwidth: float
    mean_cost: float
    cost_halfwidth: float
    latency_se: float
    cost_se: float
    jobs_measured: int
    utilization: np.ndarray
    assigned: np.ndarray
    rep_latency: np.ndarray
    rep_cost: np.ndarray
    diverging: bool
    config: SystemConfig
    replications: list = field(default_factory=list, repr=False)

    def latency_interval(self) -> tuple[float, float]:
        return self.mean_latency - self.latency_halfwidth, self.mean_latency + self.latency_halfwidth

    def cost_interval(self) -> tuple[float, float]:
        return self.mean_cost - self.cost_halfwidth, self.mean_cost + self.cost_halfwidth

    def records(self) -> list[JobRecord]:
        """Job records of the first replication (needs ``keep_records=True``)."""
        if not self.replications:
            raise ValueError("run with keep_records=True to retain job records")
        return self.replications[0].records()


def _streams(seed: int, replication: int):
    ss = np.random.SeedSequence([int(seed), int(replication)])
    return [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(3)]


def run_replication(config: SystemConfig, replication: int = 0) -> ReplicationResult:
    """Simulate one independent replication; deterministic in (config, replication)."""
    J, n, r_f, r = config.num_jobs, config.n, config.r_f, config.r
    rng_arr, rng_srv, rng_u = _streams(config.seed, replication)
    zero_load = config.lam == 0
    if zero_load:
        arrivals = np.zeros(1)
    else:
        arrivals = np.cumsum(rng_arr.exponential(1.0 / config.lam, J))
    services = np.ascontiguousarray(config.dist.sample(rng_srv, J * r), dtype=float)
    uniforms = rng_u.random(J * (r_f + r) + 8)

    job_arrival = np.zeros(J)
    job_finish = np.full(J, np.nan)
    job_cost = np.zeros(J)
    job_started = np.zeros(J, dtype=np.int64)
    job_finished = np.zeros(J, dtype=np.int64)
    job_attr = np.zeros(J)
    task_server = np.full(J * r_f, -1, dtype=np.int64)
    task_start = np.full(J * r_f, np.nan)
    task_end = np.full(J * r_f, np.nan)
    busy = np.zeros(n)
    assigned = np.zeros(n, dtype=np.int64)
    end = _kernel.simulate_kernel(n, r_f, r, config.k, config.policy.code, arrivals, zero_load,
                                  services, uniforms, job_arrival, job_finish, job_cost,
                                  job_started, job_finished, job_attr, task_server,
                                  task_start, task_end, busy, assigned)
    return ReplicationResult(job_arrival, job_finish, job_cost, job_started, job_finished, job_attr,
                             task_server.reshape(J, r_f), task_start.reshape(J, r_f),
                             task_end.reshape(J, r_f), busy, assigned, float(end))


def _halfwidth(values: np.ndarray) -> tuple[float, float]:
    m = values.size
    if m < 2:
        return math.nan, math.nan
    se = float(values.std(ddof=1) / math.sqrt(m))
    return float(stats.t.ppf(0.975, m - 1) * se), se


def _batch_means(x: np.ndarray, batches: int = 20) -> np.ndarray:
    size = x.size // batches
    if size == 0:
        return x.copy()
    return x[: size * batches].reshape(batches, size).mean(axis=1)


def _replicate_worker(args):
    config, rep = args
    return rep, run_replication(config, rep)


def simulate(config: SystemConfig, jobs: int = 1) -> RunSummary:
    """Run ``config.replications`` independent replications and summarize.

    Confidence half-widths are 95% Student-t intervals across replications
    (across 20 batch means when there is a single replication). ``jobs > 1``
    runs replications in worker processes; results do not depend on it.
    """
    reps = list(range(config.replications))
    if jobs > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_replicate_worker, [(config, i) for i in reps]))
        ordered = [results[i] for i in reps]
    else:
        ordered = [run_replication(config, i) for i in reps]

    w = config.warmup
    lat_means, cost_means = [], []
    util = np.zeros(config.n)
    assigned = np.zeros(config.n, dtype=np.int64)
    first_decile, last_decile = [], []
    for res in ordered:
        lat = res.latency[w:]
        cost = res.cost[w:]
        lat_means.append(lat.mean())
        cost_means.append(cost.mean())
        util += res.busy / res.end_time if res.end_time > 0 else 0.0
        assigned += res.assigned
        d = max(1, lat.size // 10)
        first_decile.append(lat[:d].mean())
        last_decile.append(lat[-d:].mean())
    lat_means = np.asarray(lat_means)
    cost_means = np.asarray(cost_means)
    if lat_means.size >= 2:
        lat_hw, lat_se = _halfwidth(lat_means)
        cost_hw, cost_se = _halfwidth(cost_means)
    else:
        res = ordered[0]
        lat_hw, lat_se = _halfwidth(_batch_means(res.latency[w:]))
        cost_hw, cost_se = _halfwidth(_batch_means(res.cost[w:]))
    diverging = bool(np.mean(last_decile) > 2.0 * np.mean(first_decile))
    return RunSummary(
        mean_latency=float(lat_means.mean()), latency_halfwidth=lat_hw,
        mean_cost=float(cost_means.mean()), cost_halfwidth=cost_hw,
        latency_se=lat_se, cost_se=cost_se,
        jobs_measured=(config.num_jobs - w) * len(ordered),
        utilization=util / len(ordered), assigned=assigned,
        rep_latency=lat_means, rep_cost=cost_means, diverging=diverging,
        config=config, replications=ordered if config.keep_records else [],
    )


def write_job_records(path: str | os.PathLike, result: ReplicationResult) -> None:
    """Dump per-job records as CSV with header ``RECORD_HEADER``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(RECORD_HEADER)
        for j in range(result.arrival.size):
            wr.writerow([j, repr(float(result.arrival[j])), repr(float(result.latency[j])),
                         repr(float(result.cost[j])), int(result.started[j]), int(result.finished[j])])


def mg1_response_sampler(dist: ServiceDistribution, lam: float, num_samples: int, seed: int = 0,
                         warmup: Optional[int] = None) -> np.ndarray:
    """Stationary response times of a FCFS M/G/1 queue (Lindley recursion).

    The waiting time of customer m is U_m - min_{j<=m} U_j where U is the
    random walk of (service - interarrival) increments, so the recursion is
    evaluated with cumulative sums. The first ``warmup`` customers (default
    10%, at least 1000) are discarded.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    mean_x = dist.mean
    if lam * mean_x >= 1:
        raise Unstable(f"M/G/1 load {lam * mean_x:.4g} >= 1")
    if warmup is None:
        warmup = max(1000, num_samples // 10)
    total = warmup + num_samples
    rng_arr, rng_srv = _streams(seed, 0)[:2]
    service = dist.sample(rng_srv, total)
    if lam == 0:
        return service[warmup:]
    inter = rng_arr.exponential(1.0 / lam, total)
    steps = service[:-1] - inter[1:]
    walk = np.concatenate(([0.0], np.cumsum(steps)))
    wait = walk - np.minimum.accumulate(walk)
    return (wait + service)[warmup:]
