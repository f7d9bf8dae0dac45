"""Built-in named sweeps (fig7 ... fig17) at desk scale.

Where a figure plots against the arrival rate without listing the grid, the
preset uses 12 evenly spaced rates from 5% to 95% of the smallest service
capacity among the compared systems.
"""

from __future__ import annotations

import numpy as np

from .analytic import fork_early_cancel_k1, fork_join_k1, group_based_partial_fork
from .distributions import parse_dist
from .errors import ConfigInvalid
from .experiment import ExperimentSpec, Scenario

__all__ = ["PRESETS", "preset", "lambda_grid"]


def lambda_grid(capacity: float, points: int = 12) -> list[float]:
    return [round(float(x), 10) for x in np.linspace(0.05, 0.95, points) * capacity]


def _early_cancel_pair(dist: str, n: int, name: str) -> ExperimentSpec:
    d = parse_dist(dist)
    cap = min(fork_join_k1(d, n, 0.0).capacity, fork_early_cancel_k1(d, n, 0.0).capacity)
    return ExperimentSpec(
        mode="sweep", name=name,
        scenario=Scenario(dist=dist, n=n, k=1, r_f="n", r="n"),
        sweep_axis="lambda", sweep_values=tuple(lambda_grid(cap)),
        variants=({"r": "n"}, {"r": 1}),
    )


def _fig7():
    return _early_cancel_pair("sexp(2,0.5)", 4, "fig7")


def _fig8():
    return _early_cancel_pair("hyper(0.1,1.5,0.5)", 4, "fig8")


def _fig9():
    return ExperimentSpec(
        mode="sweep", name="fig9",
        scenario=Scenario(dist="pareto(1,2.2)", n=12, k=1, r_f="r", r=1, policy="group"),
        sweep_axis="r", sweep_values=(1, 2, 3, 4, 6, 12),
        variants=tuple({"lambda": lam} for lam in (0.1, 0.5, 1.0, 2.0)),
    )


def _fig10():
    divisors = (1, 2, 3, 6)
    return ExperimentSpec(
        mode="sweep", name="fig10",
        scenario=Scenario(dist="sexp(1,0.25)", n=6, k=1, lam=0.5, r_f="r", r=1),
        sweep_axis="r", sweep_values=(1, 2, 3, 4, 5, 6),
        variants=({"policy": "group", "values": list(divisors)},
                  {"policy": "uniform"}, {"policy": "round-robin"}),
    )


def _general_k(name):
    return ExperimentSpec(
        mode="sweep", name=name,
        scenario=Scenario(dist="pareto(0.5,2.5)", n=10, k=1, lam=0.5, r_f="n", r="n"),
        sweep_axis="k", sweep_values=tuple(range(1, 11)),
    )


def _fig13():
    return ExperimentSpec(
        mode="sweep", name="fig13",
        scenario=Scenario(dist="sexp({delta/k},1)", n=10, k=1, lam=0.5, r_f="n", r="n"),
        sweep_axis="k", sweep_values=tuple(range(1, 11)),
        variants=tuple({"delta": d} for d in (0.5, 1.0, 1.5)),
    )


def _policies(dist: str, name: str) -> ExperimentSpec:
    cap = group_based_partial_fork(parse_dist(dist), 6, 3, 0.0).capacity
    return ExperimentSpec(
        mode="sweep", name=name,
        scenario=Scenario(dist=dist, n=6, k=1, r_f=3, r=3),
        sweep_axis="lambda", sweep_values=tuple(lambda_grid(cap)),
        variants=({"policy": "group"}, {"policy": "uniform"}),
    )


def _fig16():
    return ExperimentSpec(
        mode="validate", name="fig16",
        scenario=Scenario(dist="pareto(1,2.2)", n=10, k=1, lam=0.7, gamma=5.0, r_max=8),
    )


def _fig17():
    return ExperimentSpec(
        mode="validate", name="fig17",
        scenario=Scenario(dist="mix(0.5:exp(2),0.5:sexp(1,1.5))", n=10, k=1, lam=0.3,
                          gamma=2.0, r_max=5),
    )


PRESETS = {
    "fig7": _fig7,
    "fig8": _fig8,
    "fig9": _fig9,
    "fig10": _fig10,
    "fig11": lambda: _general_k("fig11"),
    "fig12": lambda: _general_k("fig12"),
    "fig13": _fig13,
    "fig14": lambda: _policies("sexp(1,0.5)", "fig14"),
    "fig15": lambda: _policies("hyper(0.1,2.0,0.2)", "fig15"),
    "fig16": _fig16,
    "fig17": _fig17,
}


def preset(name: str) -> ExperimentSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigInvalid(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
