"""Service-time distributions.

Every distribution exposes the same small surface: ``tail`` (Pr(X > x)),
``cdf``, ``sample``, closed-form ``mean``/``second_moment`` where they exist,
and ``tail_quantile`` used to size quadrature ranges. Instances are immutable
and can be shared freely between threads and processes.

Distributions are usually built from the text grammar understood by
:func:`parse_dist`::

    exp(mu) | sexp(delta,mu) | hyper(p,mu1,mu2) | pareto(xm,alpha)
    uniform(lo,hi) | weibull(c,s) | mix(w1:spec1, w2:spec2, ...) | trace(path)
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import gamma as gamma_fn

from .errors import DistSpecError

__all__ = [
    "ServiceDistribution",
    "Exponential",
    "ShiftedExponential",
    "HyperExponential",
    "Pareto",
    "Uniform",
    "Weibull",
    "Mixture",
    "Empirical",
    "parse_dist",
    "tail",
    "sample",
]


def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _out(values: np.ndarray, like) -> float | np.ndarray:
    return float(values) if np.ndim(like) == 0 else values


class ServiceDistribution:
    """Base class. Subclasses implement ``_tail``, ``_sample`` and the moments."""

    #: Power-law exponent of the tail; ``inf`` for light (exponential or
    #: bounded) tails. Moments of order ``m`` exist iff ``tail_index > m``.
    tail_index: float = math.inf

    def tail(self, x):
        """Return Pr(X > x), vectorized over ``x``."""
        xa = np.asarray(x, dtype=float)
        return _out(np.clip(self._tail(xa), 0.0, 1.0), x)

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        return _out(np.clip(self._cdf(xa), 0.0, 1.0), x)

    def log_tail(self, x):
        xa = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return _out(np.log(np.clip(self._tail(xa), 0.0, 1.0)), x)

    def _cdf(self, x: np.ndarray) -> np.ndarray:
        return 1.0 - self._tail(x)

    def _tail(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw i.i.d. service times from ``rng``.

        With ``size=None`` a single float is returned. The draw sequence
        depends only on the state of ``rng``.
        """
        if size is None:
            return float(self._sample(rng, 1)[0])
        return self._sample(rng, int(size))

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        raise NotImplementedError

    def tail_quantile(self, p: float) -> float:
        """Smallest ``x`` with Pr(X > x) <= p (found by bracketing + brentq)."""
        if p >= 1.0:
            return 0.0
        hi = 1.0
        while self.tail(hi) > p:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        lo = 0.0
        if self.tail(lo) <= p:
            return 0.0
        lp = math.log(p)
        return optimize.brentq(lambda x: float(self.log_tail(x)) - lp, lo, hi,
                               xtol=1e-14 * hi, rtol=1e-14, maxiter=500)

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the tail is not smooth (integration segment edges)."""
        return ()

    @property
    def spec(self) -> str:
        """Canonical grammar string; ``parse_dist(d.spec)`` rebuilds ``d``."""
        raise NotImplementedError

    def __str__(self) -> str:
        return self.spec


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    rate: float

    def __post_init__(self):
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def _tail(self, x):
        return np.exp(-self.rate * np.maximum(x, 0.0))

    def _cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(x, 0.0))

    def log_tail(self, x):
        return _out(-self.rate * np.maximum(np.asarray(x, dtype=float), 0.0), x)

    def _sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def second_moment(self):
        return 2.0 / self.rate**2

    def tail_quantile(self, p):
        return 0.0 if p >= 1 else -math.log(p) / self.rate

    @property
    def spec(self):
        return f"exp({_num(self.rate)})"


@dataclass(frozen=True)
class ShiftedExponential(ServiceDistribution):
    """A constant ``shift`` plus an exponential with rate ``rate``."""

    shift: float
    rate: float

    def __post_init__(self):
        if not self.shift >= 0 or not math.isfinite(self.shift):
            raise ValueError(f"shift must be >= 0, got {self.shift}")
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ValueError(f"rate must be positive, got {self.rate}")

    def _tail(self, x):
        return np.exp(-self.rate * np.maximum(x - self.shift, 0.0))

    def _cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(x - self.shift, 0.0))

    def log_tail(self, x):
        xa = np.asarray(x, dtype=float)
        return _out(-self.rate * np.maximum(xa - self.shift, 0.0), x)

    def _sample(self, rng, size):
        return self.shift + rng.exponential(1.0 / self.rate, size)

    @property
    def mean(self):
        return self.shift + 1.0 / self.rate

    @property
    def second_moment(self):
        return self.shift**2 + 2 * self.shift / self.rate + 2.0 / self.rate**2

    def tail_quantile(self, p):
        return 0.0 if p >= 1 else self.shift - math.log(p) / self.rate

    def breakpoints(self):
        return (self.shift,) if self.shift > 0 else ()

    @property
    def spec(self):
        return f"sexp({_num(self.shift)},{_num(self.rate)})"


@dataclass(frozen=True)
class HyperExponential(ServiceDistribution):
    """Rate ``rate1`` with probability ``p``, otherwise rate ``rate2``."""

    p: float
    rate1: float
    rate2: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        for r in (self.rate1, self.rate2):
            if not r > 0 or not math.isfinite(r):
                raise ValueError(f"rates must be positive, got {r}")

    def _tail(self, x):
        x = np.maximum(x, 0.0)
        return self.p * np.exp(-self.rate1 * x) + (1 - self.p) * np.exp(-self.rate2 * x)

    def _cdf(self, x):
        x = np.maximum(x, 0.0)
        return -(self.p * np.expm1(-self.rate1 * x) + (1 - self.p) * np.expm1(-self.rate2 * x))

    def log_tail(self, x):
        xa = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            a = np.log(self.p) - self.rate1 * xa
            b = np.log1p(-self.p) - self.rate2 * xa
        return _out(np.logaddexp(a, b), x)

    def _sample(self, rng, size):
        fast = rng.random(size) < self.p
        rates = np.where(fast, self.rate1, self.rate2)
        return rng.exponential(1.0, size) / rates

    @property
    def mean(self):
        return self.p / self.rate1 + (1 - self.p) / self.rate2

    @property
    def second_moment(self):
        return 2 * self.p / self.rate1**2 + 2 * (1 - self.p) / self.rate2**2

    @property
    def spec(self):
        return f"hyper({_num(self.p)},{_num(self.rate1)},{_num(self.rate2)})"


@dataclass(frozen=True)
class Pareto(ServiceDistribution):
    scale: float
    shape: float

    def __post_init__(self):
        if not self.scale > 0 or not math.isfinite(self.scale):
            raise ValueError(f"pareto scale must be positive, got {self.scale}")
        if not self.shape > 0 or not math.isfinite(self.shape):
            raise ValueError(f"pareto shape must be positive, got {self.shape}")

    @property
    def tail_index(self):
        return self.shape

    def _tail(self, x):
        with np.errstate(divide="ignore"):
            return np.where(x >= self.scale, (self.scale / np.maximum(x, self.scale)) ** self.shape, 1.0)

    def log_tail(self, x):
        xa = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            v = np.where(xa >= self.scale, -self.shape * np.log(np.maximum(xa, self.scale) / self.scale), 0.0)
        return _out(v, x)

    def _cdf(self, x):
        with np.errstate(divide="ignore"):
            r = np.log(self.scale / np.maximum(x, self.scale))
        return np.where(x >= self.scale, -np.expm1(self.shape * r), 0.0)

    def _sample(self, rng, size):
        return self.scale * (1.0 + rng.pareto(self.shape, size))

    @property
    def mean(self):
        a = self.shape
        return math.inf if a <= 1 else a * self.scale / (a - 1)

    @property
    def second_moment(self):
        a = self.shape
        return math.inf if a <= 2 else a * self.scale**2 / (a - 2)

    def tail_quantile(self, p):
        return self.scale if p >= 1 else self.scale * p ** (-1.0 / self.shape)

    def breakpoints(self):
        return (self.scale,)

    @property
    def spec(self):
        return f"pareto({_num(self.scale)},{_num(self.shape)})"


@dataclass(frozen=True)
class Uniform(ServiceDistribution):
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi) or not math.isfinite(self.hi):
            raise ValueError(f"uniform needs 0 <= lo < hi, got ({self.lo}, {self.hi})")

    def _tail(self, x):
        return np.clip((self.hi - x) / (self.hi - self.lo), 0.0, 1.0)

    def _cdf(self, x):
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def _sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self):
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    def tail_quantile(self, p):
        return self.lo if p >= 1 else self.hi - p * (self.hi - self.lo)

    def breakpoints(self):
        return (self.lo, self.hi) if self.lo > 0 else (self.hi,)

    @property
    def spec(self):
        return f"uniform({_num(self.lo)},{_num(self.hi)})"


@dataclass(frozen=True)
class Weibull(ServiceDistribution):
    shape: float
    scale: float

    def __post_init__(self):
        if not self.shape > 0 or not self.scale > 0:
            raise ValueError(f"weibull needs positive shape and scale, got ({self.shape}, {self.scale})")

    def log_tail(self, x):
        xa = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _out(-((xa / self.scale) ** self.shape), x)

    def _tail(self, x):
        return np.exp(-((np.maximum(x, 0.0) / self.scale) ** self.shape))

    def _cdf(self, x):
        return -np.expm1(-((np.maximum(x, 0.0) / self.scale) ** self.shape))

    def _sample(self, rng, size):
        return self.scale * rng.weibull(self.shape, size)

    @property
    def mean(self):
        return self.scale * float(gamma_fn(1 + 1 / self.shape))

    @property
    def second_moment(self):
        return self.scale**2 * float(gamma_fn(1 + 2 / self.shape))

    def tail_quantile(self, p):
        return 0.0 if p >= 1 else self.scale * (-math.log(p)) ** (1 / self.shape)

    @property
    def spec(self):
        return f"weibull({_num(self.shape)},{_num(self.scale)})"


@dataclass(frozen=True)
class Mixture(ServiceDistribution):
    weights: tuple[float, ...]
    components: tuple[ServiceDistribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.weights) != len(self.components) or not self.weights:
            raise ValueError("mixture needs one weight per component")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must be >= 0 and sum to 1, got {self.weights}")

    @property
    def tail_index(self):
        return min(c.tail_index for w, c in zip(self.weights, self.components) if w > 0)

    def _tail(self, x):
        return sum(w * c._tail(x) for w, c in zip(self.weights, self.components))

    def _cdf(self, x):
        return sum(w * c._cdf(x) for w, c in zip(self.weights, self.components))

    def _sample(self, rng, size):
        idx = rng.choice(len(self.weights), size=size, p=np.asarray(self.weights))
        out = np.empty(size)
        for i, c in enumerate(self.components):
            mask = idx == i
            m = int(mask.sum())
            if m:
                out[mask] = c._sample(rng, m)
        return out

    @property
    def mean(self):
        return sum(w * c.mean for w, c in zip(self.weights, self.components) if w > 0)

    @property
    def second_moment(self):
        return sum(w * c.second_moment for w, c in zip(self.weights, self.components) if w > 0)

    def breakpoints(self):
        return tuple(sorted({b for c in self.components for b in c.breakpoints()}))

    @property
    def spec(self):
        parts = ",".join(f"{_num(w)}:{c.spec}" for w, c in zip(self.weights, self.components))
        return f"mix({parts})"


class Empirical(ServiceDistribution):
    """Step-function distribution of a trace of observed service times.

    ``tail(x)`` is the fraction of samples strictly greater than ``x``;
    sampling draws uniformly with replacement.
    """

    def __init__(self, samples: Sequence[float], source: str | None = None):
        s = np.sort(np.asarray(samples, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        if not np.all(np.isfinite(s)) or s[0] < 0:
            raise ValueError("empirical samples must be finite and >= 0")
        s.setflags(write=False)
        self.samples = s
        self.source = source

    @classmethod
    def from_trace(cls, path: str | os.PathLike) -> "Empirical":
        values = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    values.append(float(line))
                except ValueError:
                    raise DistSpecError(f"{path}:{lineno}: not a number: {line!r}") from None
        return cls(values, source=os.fspath(path))

    def __eq__(self, other):
        return isinstance(other, Empirical) and np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash(self.samples.tobytes())

    def __repr__(self):
        return f"Empirical(n={self.samples.size}, source={self.source!r})"

    def _tail(self, x):
        n = self.samples.size
        return (n - np.searchsorted(self.samples, x, side="right")) / n

    def _sample(self, rng, size):
        return self.samples[rng.integers(0, self.samples.size, size)]

    @property
    def mean(self):
        return float(self.samples.mean())

    @property
    def second_moment(self):
        return float(np.mean(self.samples**2))

    def tail_quantile(self, p):
        n = self.samples.size
        if p >= 1:
            return 0.0
        i = min(n - 1, max(0, math.ceil((1 - p) * n - 1e-12) - 1))
        return float(self.samples[i])

    @property
    def spec(self):
        if self.source is None:
            raise ValueError("in-memory empirical distribution has no spec string")
        return f"trace({self.source})"


def tail(dist: ServiceDistribution, x):
    """Pr(X > x)."""
    return dist.tail(x)


def sample(dist: ServiceDistribution, rng: np.random.Generator, size: int | None = None):
    return dist.sample(rng, size)


# -- spec grammar ----------------------------------------------------------

_ARITY = {
    "exp": (1, lambda a: Exponential(*a)),
    "sexp": (2, lambda a: ShiftedExponential(*a)),
    "hyper": (3, lambda a: HyperExponential(*a)),
    "pareto": (2, lambda a: Pareto(*a)),
    "uniform": (2, lambda a: Uniform(*a)),
    "weibull": (2, lambda a: Weibull(*a)),
}


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise DistSpecError(f"unbalanced parentheses in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise DistSpecError(f"unbalanced parentheses in {text!r}")
    parts.append("".join(cur))
    return parts


def parse_dist(text: str, base_dir: str | os.PathLike | None = None) -> ServiceDistribution:
    """Parse a distribution spec string (case-sensitive).

    Relative ``trace(...)`` paths are resolved against ``base_dir`` when given.
    """
    s = text.strip()
    if "(" not in s or not s.endswith(")"):
        raise DistSpecError(f"malformed distribution spec {text!r}")
    name, body = s.split("(", 1)
    name, body = name.strip(), body[:-1]
    if name == "trace":
        path = body.strip()
        if not path:
            raise DistSpecError("trace() needs a path")
        if base_dir is not None and not os.path.isabs(path):
            full = os.path.join(base_dir, path)
        else:
            full = path
        emp = Empirical.from_trace(full)
        emp.source = path
        return emp
    if name == "mix":
        weights, comps = [], []
        for part in _split_top(body, ","):
            w, sep, sub = part.partition(":")
            if not sep:
                raise DistSpecError(f"mixture term {part!r} must be weight:spec")
            try:
                weights.append(float(w))
            except ValueError:
                raise DistSpecError(f"bad mixture weight {w!r}") from None
            comps.append(parse_dist(sub, base_dir))
        try:
            return Mixture(tuple(weights), tuple(comps))
        except ValueError as exc:
            raise DistSpecError(str(exc)) from None
    if name not in _ARITY:
        raise DistSpecError(f"unknown distribution {name!r}")
    arity, build = _ARITY[name]
    args = _split_top(body, ",")
    if len(args) != arity:
        raise DistSpecError(f"{name} takes {arity} parameter(s), got {len(args)}")
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise DistSpecError(f"non-numeric parameter in {text!r}") from None
    try:
        return build(values)
    except ValueError as exc:
        raise DistSpecError(str(exc)) from None
