"""Moments of order statistics X_{k:n} of i.i.d. service times.

Moments come from the tail identity

    E[Y^m] = integral_0^inf m x^(m-1) Pr(Y > x) dx,
    Pr(X_{k:n} > x) = sum_{j<k} C(n, j) F(x)^j Fbar(x)^(n-j),

integrated segment by segment with adaptive quadrature. Segment edges are the
distribution's kinks plus a ladder of tail quantiles up to the point where
Pr(X > x) = 1e-10. Pareto tails get the exact analytic remainder past that
point; every other family has its remainder integrated out to infinity
(it matters for subexponential tails such as Weibull with shape < 1). Empirical
distributions are integrated exactly over their steps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .distributions import Empirical, Pareto, ServiceDistribution
from .errors import NonFiniteMoment

__all__ = ["OrderStatMoment", "order_stat_moment", "order_stat_tail", "expected_order_stat"]

TAIL_CUTOFF = 1e-10
_LADDER = (0.999, 0.99, 0.9, 0.5, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, TAIL_CUTOFF)


@dataclass(frozen=True)
class OrderStatMoment:
    k: int
    n: int
    moment: str
    value: float

    def __float__(self) -> float:
        return self.value


def _moment_order(moment) -> int:
    if moment in (1, "first"):
        return 1
    if moment in (2, "second"):
        return 2
    raise ValueError(f"moment must be 'first' or 'second', got {moment!r}")


def _check_kn(k: int, n: int) -> None:
    if not (isinstance(k, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise TypeError("k and n must be integers")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")


def _log_binom(n: int, j: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)


def _binomial_tail(F: np.ndarray, Fbar: np.ndarray, k: int, n: int) -> np.ndarray:
    """sum_{j<k} C(n,j) F^j Fbar^(n-j), summed in the log domain."""
    F = np.atleast_1d(np.asarray(F, dtype=float))
    Fbar = np.atleast_1d(np.asarray(Fbar, dtype=float))
    j = np.arange(k, dtype=float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logF = np.log(F)[None, :]
        logFb = np.log(Fbar)[None, :]
        term_F = np.where(j == 0, 0.0, j * logF)
        terms = _log_binom(n, j) + term_F + (n - j) * logFb
    terms = np.where(np.isnan(terms), -np.inf, terms)
    out = np.exp(logsumexp(terms, axis=0))
    return np.clip(out, 0.0, 1.0)


def order_stat_tail(dist: ServiceDistribution, k: int, n: int, x):
    """Pr(X_{k:n} > x) for the k-th smallest of n i.i.d. draws."""
    _check_kn(k, n)
    xa = np.asarray(x, dtype=float)
    out = _binomial_tail(dist.cdf(np.atleast_1d(xa)), dist.tail(np.atleast_1d(xa)), k, n)
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def _empirical_moment(dist: Empirical, k: int, n: int, m: int) -> float:
    values, counts = np.unique(dist.samples, return_counts=True)
    N = dist.samples.size
    F_right = np.cumsum(counts) / N  # F on [values[i], values[i+1])
    edges = np.concatenate(([0.0], values))
    F_steps = np.concatenate(([0.0], F_right[:-1]))  # F on [edges[i], edges[i+1])
    g = _binomial_tail(F_steps, 1.0 - F_steps, k, n)
    widths = edges[1:] ** m - edges[:-1] ** m
    return float(np.dot(g, widths))


def _pareto_remainder(dist: Pareto, k: int, n: int, m: int, x_hi: float) -> float:
    # Expand sum_{j<k} C(n,j) (1-q)^j q^(n-j) as a polynomial in q = Fbar and
    # integrate each power of the Pareto tail exactly beyond x_hi.
    a = dist.shape
    q = float(dist.tail(x_hi))
    coeffs: dict[int, int] = {}
    for j in range(k):
        cnj = math.comb(n, j)
        for i in range(j + 1):
            p = n - j + i
            coeffs[p] = coeffs.get(p, 0) + cnj * math.comb(j, i) * (-1) ** i
    total = 0.0
    for p, c in sorted(coeffs.items()):
        if c:
            total += c * m * x_hi**m * q**p / (a * p - m)
    return total


def _segments(dist: ServiceDistribution) -> list[float]:
    pts = {0.0}
    pts.update(b for b in dist.breakpoints() if b > 0)
    for p in _LADDER:
        q = dist.tail_quantile(p)
        if math.isfinite(q) and q > 0:
            pts.add(q)
    x_hi = dist.tail_quantile(TAIL_CUTOFF)
    return sorted(p for p in pts if p <= x_hi)


@lru_cache(maxsize=4096)
def _parametric_moment(dist: ServiceDistribution, k: int, n: int, m: int) -> float:
    edges = _segments(dist)

    def integrand(x):
        return m * x ** (m - 1) * float(_binomial_tail(dist.cdf(x), dist.tail(x), k, n)[0])

    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                val, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)
                total += val
        x_hi = edges[-1]
        if isinstance(dist, Pareto):
            total += _pareto_remainder(dist, k, n, m, x_hi)
        else:
            val, _ = integrate.quad(integrand, x_hi, math.inf, epsabs=1e-13, epsrel=1e-10, limit=200)
            total += val
    return total


def order_stat_moment(dist: ServiceDistribution, k: int, n: int, moment="first") -> OrderStatMoment:
    """E[X_{k:n}] (``moment="first"``) or E[X_{k:n}^2] (``moment="second"``).

    Raises :class:`NonFiniteMoment` when the integral diverges, which for a
    power-law tail of index a happens when a * (n - k + 1) <= m.
    """
    _check_kn(k, n)
    m = _moment_order(moment)
    if dist.tail_index * (n - k + 1) <= m:
        raise NonFiniteMoment(
            f"E[X_{{{k}:{n}}}^{m}] diverges for {dist}: tail index {dist.tail_index} "
            f"times {n - k + 1} does not exceed {m}"
        )
    if isinstance(dist, Empirical):
        value = _empirical_moment(dist, int(k), int(n), m)
    else:
        value = _parametric_moment(dist, int(k), int(n), m)
    return OrderStatMoment(int(k), int(n), "first" if m == 1 else "second", value)


def expected_order_stat(dist: ServiceDistribution, k: int, n: int, moment="first") -> float:
    """Shorthand for ``order_stat_moment(...).value``."""
    return order_stat_moment(dist, k, n, moment).value
