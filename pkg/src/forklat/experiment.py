"""Experiment specs, sweep expansion and the long-format result table."""

from __future__ import annotations

import csv
import io
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Any, Optional

import yaml

from . import analytic
from .distributions import ServiceDistribution, parse_dist
from .errors import ConfigInvalid, ForklatError, NonFiniteMoment, Unstable
from .orderstats import expected_order_stat
from .simulation import DispatchPolicy, SystemConfig, mg1_response_sampler, simulate
from .strategy import StrategyQuery, estimate_curves, recommend, validate_recommendation
from .tails import classify_tail

__all__ = [
    "CSV_HEADER",
    "MODES",
    "SWEEP_AXES",
    "Scenario",
    "ExperimentSpec",
    "Row",
    "Cell",
    "load_spec",
    "dump_spec",
    "expand_cells",
    "run_spec",
    "write_csv",
    "format_report",
]

CSV_HEADER = ("mode", "n", "r_f", "r", "k", "lambda", "dist", "policy",
              "metric", "value", "ci_halfwidth", "provenance", "status")
MODES = ("analyze", "simulate", "sweep", "recommend", "validate")
SWEEP_AXES = ("lambda", "r", "k", "n")
SIMULATED = "simulated"
ESTIMATE = "estimate"
RELATIVE_START = "relative start times: E[X] vs r*E[X_1:r] by tail class"
MAX_RESPONSE_SAMPLES = 200_000


@dataclass(frozen=True)
class Scenario:
    """System or strategy parameters as written in a config file.

    ``r_f`` and ``r`` may be integers or the symbols ``"n"``, ``"r"``,
    ``"k"`` (resolved per sweep cell); they default to ``n`` and ``r_f``.
    ``dist`` may contain ``{name}`` or ``{a/b}`` placeholders over the cell
    fields (``n``, ``k``, ``r``, ``r_f``, ``lambda``, ``delta``).
    """

    dist: str
    n: int
    k: int = 1
    lam: float = 0.0
    r_f: Any = "n"
    r: Any = "r_f"
    policy: str = "uniform"
    gamma: Optional[float] = None
    r_max: Optional[int] = None
    delta: Optional[float] = None

    _KEYS = {"lambda": "lam"}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigInvalid("scenario must be a mapping")
        known = {f.name for f in fields(cls)}
        kw = {}
        for key, value in d.items():
            name = cls._KEYS.get(key, key)
            if name not in known:
                raise ConfigInvalid(f"unknown scenario field {key!r}")
            kw[name] = value
        if "dist" not in kw or "n" not in kw:
            raise ConfigInvalid("scenario needs at least 'dist' and 'n'")
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out["lambda" if f.name == "lam" else f.name] = v
        return out

    def override(self, **changes) -> "Scenario":
        d = self.to_dict()
        d.update(changes)
        return Scenario.from_dict(d)


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    scenario: Scenario
    sweep_axis: Optional[str] = None
    sweep_values: tuple = ()
    variants: tuple = ()  # scenario overrides; a variant may carry its own "values"
    simulate: bool = True
    out: Optional[str] = None
    replications: int = 20
    num_jobs: int = 10_000
    seed: int = 0
    name: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigInvalid(f"sweep axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
            for v in self.sweep_values:
                if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                    raise ConfigInvalid(f"sweep value {v!r} must be finite and non-negative")
                if self.sweep_axis != "lambda" and (v != int(v) or v < 1):
                    raise ConfigInvalid(f"sweep over {self.sweep_axis} needs positive integers, got {v!r}")
        if self.mode == "sweep" and self.sweep_axis is None and not self.variants:
            raise ConfigInvalid("sweep mode needs a sweep axis or variants")
        for name in ("replications", "num_jobs"):
            if int(getattr(self, name)) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ConfigInvalid("config must be a mapping")
        d = dict(d)
        sweep = d.pop("sweep", None) or {}
        try:
            spec = cls(
                mode=d.pop("mode", "analyze"),
                scenario=Scenario.from_dict(d.pop("scenario", None)),
                sweep_axis=sweep.get("axis"),
                sweep_values=tuple(sweep.get("values", ())),
                variants=tuple(dict(v) for v in d.pop("variants", ()) or ()),
                simulate=bool(d.pop("simulate", True)),
                out=d.pop("out", None),
                replications=int(d.pop("replications", 20)),
                num_jobs=int(d.pop("num_jobs", 10_000)),
                seed=int(d.pop("seed", 0)),
                name=d.pop("name", None),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from None
        if d:
            raise ConfigInvalid(f"unknown config keys: {sorted(d)}")
        return spec

    def to_dict(self) -> dict:
        out: dict = {"mode": self.mode}
        if self.name is not None:
            out["name"] = self.name
        out["scenario"] = self.scenario.to_dict()
        if self.sweep_axis is not None:
            out["sweep"] = {"axis": self.sweep_axis, "values": list(self.sweep_values)}
        if self.variants:
            out["variants"] = [dict(v) for v in self.variants]
        out["simulate"] = self.simulate
        if self.out is not None:
            out["out"] = self.out
        out.update(replications=self.replications, num_jobs=self.num_jobs, seed=self.seed)
        return out

    def with_(self, **changes) -> "ExperimentSpec":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentSpec(**d)


def load_spec(path: str | os.PathLike) -> ExperimentSpec:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from None
    return ExperimentSpec.from_dict(data)


def dump_spec(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False, default_flow_style=None)


# -- sweep cells ------------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{(\w+)(?:/(\w+))?\}")


@dataclass(frozen=True)
class Cell:
    n: int
    r_f: int
    r: int
    k: int
    lam: float
    dist_spec: str
    policy: DispatchPolicy
    gamma: Optional[float] = None
    r_max: Optional[int] = None


def _fmt(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _resolve(sc: Scenario) -> Cell:
    env = {"n": sc.n, "k": sc.k}

    def width(v):
        if isinstance(v, str):
            if v not in env:
                raise ConfigInvalid(f"width {v!r} must be an integer or one of {sorted(env)}")
            return int(env[v])
        return int(v)

    if sc.r_f == "r":
        r = width(sc.r)
        env["r"] = r
        r_f = env["r_f"] = r
    else:
        r_f = env["r_f"] = width(sc.r_f)
        r = env["r"] = width(sc.r)
    env["lambda"] = sc.lam
    if sc.delta is not None:
        env["delta"] = sc.delta

    def sub(m):
        a, b = m.group(1), m.group(2)
        if a not in env or (b is not None and b not in env):
            raise ConfigInvalid(f"unknown placeholder {m.group(0)} in dist {sc.dist!r}")
        return _fmt(env[a] / env[b] if b else env[a])

    dist = _PLACEHOLDER.sub(sub, sc.dist)
    return Cell(int(sc.n), r_f, r, int(sc.k), float(sc.lam), dist, DispatchPolicy.parse(sc.policy),
                sc.gamma, sc.r_max)


def expand_cells(spec: ExperimentSpec, base_dir: Optional[str] = None) -> list[Cell]:
    """Cells of a sweep in deterministic order: variant by variant, then axis value.

    Raises :class:`ConfigInvalid` if any cell breaks k <= r <= r_f <= n (or the
    group-dispatch divisibility rule), and :class:`DistSpecError` for a bad
    distribution spec, before anything is run.
    """
    variants = spec.variants or ({},)
    cells = []
    parsed: set = set()
    for var in variants:
        var = dict(var)
        values = tuple(var.pop("values", spec.sweep_values))
        base = spec.scenario.override(**var)
        if spec.sweep_axis is None:
            scenarios = [base]
        else:
            key = spec.sweep_axis
            scenarios = [base.override(**{key: (v if key == "lambda" else int(v))}) for v in values]
        for sc in scenarios:
            cell = _resolve(sc)
            if cell.dist_spec not in parsed:
                parse_dist(cell.dist_spec, base_dir)
                parsed.add(cell.dist_spec)
            if spec.mode in ("recommend", "validate"):
                _strategy_query(cell, None)
            else:
                _system_config(cell, spec, _DummyDist())
            cells.append(cell)
    return cells


def _system_config(cell: Cell, spec: ExperimentSpec, dist: ServiceDistribution) -> SystemConfig:
    return SystemConfig(cell.n, cell.r_f, cell.r, cell.k, cell.lam, dist, cell.policy,
                        num_jobs=spec.num_jobs, replications=spec.replications, seed=spec.seed)


class _DummyDist(ServiceDistribution):
    """Stand-in used when only the integer invariants are being checked."""


def _strategy_query(cell: Cell, dist) -> StrategyQuery:
    if cell.gamma is None or cell.r_max is None:
        raise ConfigInvalid("recommend/validate need 'gamma' and 'r_max' in the scenario")
    if dist is None:
        return StrategyQuery(_DummyDist(), cell.n, cell.k, cell.lam, float(cell.gamma), int(cell.r_max))
    return StrategyQuery(dist, cell.n, cell.k, cell.lam, float(cell.gamma), int(cell.r_max))


# -- rows ---------------------------------------------------------------------

@dataclass(frozen=True)
class Row:
    mode: str
    n: int
    r_f: Any
    r: Any
    k: int
    lam: float
    dist: str
    policy: str
    metric: str
    value: Any
    ci_halfwidth: Any = ""
    provenance: str = ""
    status: str = "ok"

    def cells(self) -> list[str]:
        def f(v):
            if isinstance(v, bool):
                return str(v).lower()
            if isinstance(v, float):
                return repr(v)
            return "" if v is None else str(v)
        return [f(self.mode), f(self.n), f(self.r_f), f(self.r), f(self.k), f(self.lam), self.dist,
                self.policy, self.metric, f(self.value), f(self.ci_halfwidth), self.provenance,
                self.status]


def _row(mode: str, cell: Cell, metric: str, value, ci="", prov="", status="ok", r_f=None, r=None,
         policy=None) -> Row:
    if isinstance(value, float) and not math.isfinite(value) and status == "ok":
        status = "unstable"
    return Row(mode, cell.n, cell.r_f if r_f is None else r_f, cell.r if r is None else r, cell.k,
               cell.lam, cell.dist_spec, str(cell.policy) if policy is None else policy,
               metric, value, ci, prov, status)


def _err_status(exc: Exception) -> str:
    return f"error: {type(exc).__name__}: {exc}".replace("\n", " ")


def analytic_rows(cell: Cell, dist: ServiceDistribution, mode: str, seed: int = 0) -> list[Row]:
    """Closed-form values, bounds or estimates that apply to this cell."""
    n, r_f, r, k, lam = cell.n, cell.r_f, cell.r, cell.k, cell.lam
    rows = []

    def add_report(rep):
        for metric, value, prov in rep.rows():
            ci = rep.std_errors.get(metric, "")
            rows.append(_row(mode, cell, metric, float(value), ci, prov))

    if k == 1 and r_f == r == n:
        add_report(analytic.fork_join_k1(dist, n, lam))
    elif k == 1 and r == 1 and r_f == n:
        add_report(analytic.fork_early_cancel_k1(dist, n, lam))
    elif r_f == r == n:
        add_report(analytic.general_k_latency_bounds(dist, n, k, lam))
        if k == n:
            try:
                samples = mg1_response_sampler(dist, lam, MAX_RESPONSE_SAMPLES, seed)
                rep = analytic.full_quorum_max_response_bound(dist, n, lam, samples, seed)
                rows.append(_row(mode, cell, "latency_upper_max_response", rep.latency_upper,
                                 rep.std_errors["latency_upper"], rep.provenance["latency_upper"]))
            except Unstable as exc:
                rows.append(_row(mode, cell, "latency_upper_max_response", math.inf, "",
                                 analytic.MAX_RESPONSE, "unstable: " + str(exc)))
    elif r_f == n and r == k:
        try:
            samples = mg1_response_sampler(dist, lam * k / n, MAX_RESPONSE_SAMPLES, seed)
            add_report(analytic.early_cancel_general_k(dist, n, k, lam, samples, seed))
        except Unstable as exc:
            rows.append(_row(mode, cell, "latency_upper", math.inf, "", analytic.MAX_RESPONSE,
                             "unstable: " + str(exc)))
    elif k == 1 and r_f == r and cell.policy is DispatchPolicy.GROUP_RANDOM:
        add_report(analytic.group_based_partial_fork(dist, n, r, lam))
    if k == 1 and r_f == r < n and cell.policy is not DispatchPolicy.GROUP_RANDOM:
        # Staggered start times push E[C] below r*E[X_1:r] for log-concave
        # tails and above it (up to E[X]) for log-convex ones.
        tc = classify_tail(dist)
        ex = analytic.dist_mean(dist)
        group = r * expected_order_stat(dist, 1, r)
        if tc.log_concave:
            rows.append(_row(mode, cell, "cost_lower", ex, "", RELATIVE_START))
            rows.append(_row(mode, cell, "cost_upper", group, "", RELATIVE_START))
        if tc.log_convex:
            rows.append(_row(mode, cell, "cost_lower", group, "", RELATIVE_START))
            rows.append(_row(mode, cell, "cost_upper", ex, "", RELATIVE_START))
    if not (r_f == r == n) and not (r_f == n and r == k):
        # Policy-agnostic estimates, exact only for group dispatch with k = 1.
        try:
            q = StrategyQuery(dist, n, k, lam, math.inf, r)
            p = estimate_curves(q)[-1]
            rows.append(_row(mode, cell, "latency_estimate", p.latency, "", ESTIMATE))
            rows.append(_row(mode, cell, "cost_estimate", p.cost, "", ESTIMATE))
        except ForklatError as exc:
            rows.append(_row(mode, cell, "latency_estimate", "", "", ESTIMATE, _err_status(exc)))
    return rows


def simulated_rows(summary, cell: Cell, mode: str) -> list[Row]:
    status = "diverging" if summary.diverging else "ok"
    return [
        _row(mode, cell, "latency", summary.mean_latency, summary.latency_halfwidth, SIMULATED, status),
        _row(mode, cell, "cost", summary.mean_cost, summary.cost_halfwidth, SIMULATED, status),
    ]


def _cell_rows(args) -> list[Row]:
    cell, spec, do_analytic, do_sim, base_dir = args
    mode = spec.mode
    rows: list[Row] = []
    try:
        dist = parse_dist(cell.dist_spec, base_dir)
    except ForklatError as exc:
        return [_row(mode, cell, "dist", "", "", "", _err_status(exc))]
    if do_analytic:
        try:
            rows.extend(analytic_rows(cell, dist, mode, spec.seed))
        except ForklatError as exc:
            rows.append(_row(mode, cell, "analytic", "", "", "", _err_status(exc)))
    if do_sim:
        try:
            summary = simulate(_system_config(cell, spec, dist))
            rows.extend(simulated_rows(summary, cell, mode))
        except ForklatError as exc:
            rows.append(_row(mode, cell, "simulation", "", "", SIMULATED, _err_status(exc)))
    return rows


def _strategy_rows(cell: Cell, spec: ExperimentSpec, base_dir, jobs: int) -> list[Row]:
    mode = spec.mode
    dist = parse_dist(cell.dist_spec, base_dir)
    query = _strategy_query(cell, dist)
    result = recommend(query)  # Infeasible / NonFiniteMoment propagate
    rows = []
    for p in result.table:
        rows.append(_row(mode, cell, "latency_estimate", p.latency, "", ESTIMATE,
                         r_f=query.r_max, r=p.r, policy=""))
        rows.append(_row(mode, cell, "cost_estimate", p.cost, "", ESTIMATE, r_f=query.r_max, r=p.r,
                         policy=""))
        rows.append(_row(mode, cell, "feasible", p.feasible, "", ESTIMATE, r_f=query.r_max, r=p.r,
                         policy=""))
    common = dict(r_f=result.r_f_star, r=result.r_star, policy="")
    rows.append(_row(mode, cell, "r_f_star", result.r_f_star, "", "strategy", **common))
    rows.append(_row(mode, cell, "r_star", result.r_star, "", "strategy", **common))
    rows.append(_row(mode, cell, "binding_constraint", result.binding_constraint, "", "strategy",
                     **common))
    if mode == "validate":
        rep = validate_recommendation(query, result, num_jobs=spec.num_jobs,
                                      replications=spec.replications, seed=spec.seed,
                                      policy=cell.policy, jobs=jobs)
        for vr in rep.rows():
            s = vr.summary
            status = "diverging" if s.diverging else "ok"
            kw = dict(r_f=vr.r_f, r=vr.r, policy=str(s.config.policy))
            tag = "recommended" if vr is rep.recommended else "baseline"
            rows.append(_row(mode, cell, f"{tag}_latency", s.mean_latency, s.latency_halfwidth,
                             SIMULATED, status, **kw))
            rows.append(_row(mode, cell, f"{tag}_cost", s.mean_cost, s.cost_halfwidth, SIMULATED,
                             status, **kw))
            rows.append(_row(mode, cell, f"{tag}_latency_gap", vr.latency_gap, "",
                             "simulated minus estimate", status, **kw))
            rows.append(_row(mode, cell, f"{tag}_cost_gap", vr.cost_gap, "",
                             "simulated minus estimate", status, **kw))
        rows.append(_row(mode, cell, "cost_within_budget", rep.within_budget, "", SIMULATED,
                         **common))
    return rows


def run_spec(spec: ExperimentSpec, jobs: int = 1, base_dir: Optional[str] = None) -> tuple[list[Row], bool]:
    """Run every cell; returns ``(rows, all_ok)``.

    Sweep cells that fail at run time are kept as rows whose ``status``
    starts with ``error``. Strategy modes raise on infeasible queries.
    """
    cells = expand_cells(spec, base_dir)
    if spec.mode in ("recommend", "validate"):
        rows = []
        for cell in cells:
            rows.extend(_strategy_rows(cell, spec, base_dir, jobs))
        return rows, True
    do_analytic = spec.mode in ("analyze", "sweep")
    do_sim = spec.mode == "simulate" or (spec.mode == "sweep" and spec.simulate)
    tasks = [(c, spec, do_analytic, do_sim, base_dir) for c in cells]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_cell_rows, tasks))  # map preserves order
    else:
        chunks = [_cell_rows(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    ok = all(not r.status.startswith("error") for r in rows)
    if spec.mode == "analyze":
        for r in rows:
            if r.status.startswith("error: NonFiniteMoment"):
                raise NonFiniteMoment(r.status)
    return rows, ok


def write_csv(rows, fh) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for r in rows:
        wr.writerow(r.cells())


def format_report(spec: ExperimentSpec, rows) -> str:
    """Human-readable summary grouped by cell."""
    buf = io.StringIO()
    title = spec.name or spec.mode
    buf.write(f"# {title}: {len(rows)} rows\n")
    last = None
    for r in rows:
        key = (r.n, r.r_f, r.r, r.k, r.lam, r.dist, r.policy)
        if key != last:
            buf.write(f"\n[n={r.n} r_f={r.r_f} r={r.r} k={r.k} lambda={r.lam:g} dist={r.dist}"
                      f"{' policy=' + r.policy if r.policy else ''}]\n")
            last = key
        value = f"{r.value:.6g}" if isinstance(r.value, float) else str(r.value)
        ci = f" +/- {r.ci_halfwidth:.3g}" if isinstance(r.ci_halfwidth, float) else ""
        status = "" if r.status == "ok" else f"  [{r.status}]"
        prov = f"  ({r.provenance})" if r.provenance else ""
        buf.write(f"  {r.metric:<28} {value}{ci}{prov}{status}\n")
    return buf.getvalue()
