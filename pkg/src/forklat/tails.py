"""Log-concavity classification of service-time tails."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

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
)

__all__ = ["TailLabel", "TailClass", "classify_tail", "CLASS_TOL", "CLASS_GRID"]

CLASS_TOL = 1e-6
CLASS_GRID = 512
_MIN_TAIL = 1e-9


class TailLabel(str, enum.Enum):
    LOG_CONCAVE = "log-concave"
    LOG_CONVEX = "log-convex"
    EXPONENTIAL = "exponential"  # both log-concave and log-convex
    NEITHER = "neither"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TailClass:
    label: TailLabel
    evidence: str

    @property
    def log_concave(self) -> bool:
        return self.label in (TailLabel.LOG_CONCAVE, TailLabel.EXPONENTIAL)

    @property
    def log_convex(self) -> bool:
        return self.label in (TailLabel.LOG_CONVEX, TailLabel.EXPONENTIAL)


def _known(dist: ServiceDistribution) -> TailClass | None:
    table = "known-family table"
    if isinstance(dist, Exponential):
        return TailClass(TailLabel.EXPONENTIAL, f"{table}: exponential")
    if isinstance(dist, ShiftedExponential):
        if dist.shift == 0:
            return TailClass(TailLabel.EXPONENTIAL, f"{table}: zero shift is a plain exponential")
        return TailClass(TailLabel.LOG_CONCAVE, f"{table}: shifted exponential")
    if isinstance(dist, Uniform):
        return TailClass(TailLabel.LOG_CONCAVE, f"{table}: uniform")
    if isinstance(dist, Weibull):
        if dist.shape >= 1:
            return TailClass(TailLabel.LOG_CONCAVE, f"{table}: weibull with shape >= 1")
        return TailClass(TailLabel.LOG_CONVEX, f"{table}: weibull with shape < 1")
    if isinstance(dist, HyperExponential):
        if dist.p in (0.0, 1.0) or dist.rate1 == dist.rate2:
            return TailClass(TailLabel.EXPONENTIAL, f"{table}: degenerate hyperexponential")
        return TailClass(TailLabel.LOG_CONVEX, f"{table}: hyperexponential")
    if isinstance(dist, Pareto):
        return TailClass(TailLabel.NEITHER, f"{table}: pareto (flat before the scale, log-convex after)")
    return None


def _numeric(dist: ServiceDistribution, tol: float, grid: int) -> TailClass:
    x_hi = dist.tail_quantile(1e-3)
    xs = np.linspace(0.0, x_hi, grid)
    fbar = np.asarray(dist.tail(xs), dtype=float)
    logt = np.asarray(dist.log_tail(xs), dtype=float)
    ok = fbar >= _MIN_TAIL
    d2 = logt[:-2] - 2 * logt[1:-1] + logt[2:]
    valid = ok[:-2] & ok[1:-1] & ok[2:]
    d2 = d2[valid]
    where = f"numeric second differences of log tail on {grid} points over [0, {x_hi:.6g}], tol {tol:g}"
    if isinstance(dist, Empirical):
        steps = np.diff(fbar[ok])
        if np.any(steps == 0) or len(np.unique(dist.samples)) < dist.samples.size:
            return TailClass(TailLabel.NEITHER, f"{where}; empirical tail has flat steps/atoms")
    if d2.size == 0:
        return TailClass(TailLabel.NEITHER, f"{where}; no usable grid points")
    concave = bool(np.all(d2 <= tol))
    convex = bool(np.all(d2 >= -tol))
    if concave and convex:
        label = TailLabel.EXPONENTIAL
    elif concave:
        label = TailLabel.LOG_CONCAVE
    elif convex:
        label = TailLabel.LOG_CONVEX
    else:
        label = TailLabel.NEITHER
    return TailClass(label, f"{where}; min {d2.min():.3g}, max {d2.max():.3g}")


def classify_tail(dist: ServiceDistribution, tol: float = CLASS_TOL, grid: int = CLASS_GRID) -> TailClass:
    """Classify log Pr(X > x) as concave, convex, both (exponential) or neither.

    Built-in parametric families are looked up in a table. Mixtures and
    empirical traces use a finite second-difference test; mixtures of
    log-concave parts need not be log-concave, so they are never looked up.
    """
    if not isinstance(dist, (Mixture, Empirical)):
        known = _known(dist)
        if known is not None:
            return known
    return _numeric(dist, tol, grid)
