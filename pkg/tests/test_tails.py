import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forklat.distributions import (
    Empirical,
    Exponential,
    HyperExponential,
    Mixture,
    Pareto,
    ShiftedExponential,
    Uniform,
    Weibull,
)
from forklat.orderstats import expected_order_stat
from forklat.tails import TailLabel, classify_tail

LOG_CONCAVE = [ShiftedExponential(1.0, 0.25), ShiftedExponential(2.0, 0.5), Uniform(0.0, 2.0), Weibull(2.0, 1.0)]
LOG_CONVEX = [HyperExponential(0.4, 0.5, 2.0), HyperExponential(0.1, 2.0, 0.2), Weibull(0.5, 1.0)]

GRID = np.linspace(0.0, 20.0, 64)
THETAS = np.linspace(0.01, 0.99, 64)


@pytest.mark.parametrize(
    "dist, label",
    [
        (Exponential(1.0), TailLabel.EXPONENTIAL),
        (ShiftedExponential(2.0, 0.5), TailLabel.LOG_CONCAVE),
        (ShiftedExponential(0.0, 0.5), TailLabel.EXPONENTIAL),
        (Uniform(0.0, 1.0), TailLabel.LOG_CONCAVE),
        (Weibull(1.5, 1.0), TailLabel.LOG_CONCAVE),
        (Weibull(0.5, 1.0), TailLabel.LOG_CONVEX),
        (HyperExponential(0.1, 1.5, 0.5), TailLabel.LOG_CONVEX),
        (Pareto(1.0, 2.2), TailLabel.NEITHER),
    ],
)
def test_known_family_table(dist, label):
    tc = classify_tail(dist)
    assert tc.label is label
    assert "table" in tc.evidence


def test_exponential_is_both():
    tc = classify_tail(Exponential(3.0))
    assert tc.log_concave and tc.log_convex


def test_mixtures_are_classified_numerically():
    hyper_like = Mixture((0.4, 0.6), (Exponential(0.5), Exponential(2.0)))
    tc = classify_tail(hyper_like)
    assert tc.label is TailLabel.LOG_CONVEX and "numeric" in tc.evidence
    mixed = Mixture((0.5, 0.5), (Exponential(2.0), ShiftedExponential(1.0, 1.5)))
    assert classify_tail(mixed).label is TailLabel.NEITHER
    concave = Mixture((1.0,), (ShiftedExponential(1.0, 1.0),))
    assert classify_tail(concave).label is TailLabel.LOG_CONCAVE


def test_empirical_with_atoms_is_neither():
    tc = classify_tail(Empirical([1.0, 1.0, 2.0, 3.0]))
    assert tc.label is TailLabel.NEITHER
    assert "empirical" in tc.evidence


@pytest.mark.parametrize("dist", LOG_CONCAVE, ids=lambda d: d.spec)
def test_sub_multiplicative_log_concave(dist):
    x, t = np.meshgrid(GRID, GRID)
    assert np.all(dist.tail(x + t) <= dist.tail(x) * dist.tail(t) + 1e-12)


@pytest.mark.parametrize("dist", LOG_CONVEX, ids=lambda d: d.spec)
def test_super_multiplicative_log_convex(dist):
    x, t = np.meshgrid(GRID, GRID)
    assert np.all(dist.tail(x + t) >= dist.tail(x) * dist.tail(t) - 1e-12)


@pytest.mark.parametrize("dist", LOG_CONCAVE, ids=lambda d: d.spec)
def test_scaling_log_concave(dist):
    x, th = np.meshgrid(GRID, THETAS)
    assert np.all(dist.tail(x) <= dist.tail(th * x) ** (1 / th) + 1e-12)


@pytest.mark.parametrize("dist", LOG_CONVEX, ids=lambda d: d.spec)
def test_scaling_log_convex(dist):
    x, th = np.meshgrid(GRID, THETAS)
    assert np.all(dist.tail(x) >= dist.tail(th * x) ** (1 / th) - 1e-12)


def _r_min_cost(dist):
    return np.array([r * expected_order_stat(dist, 1, r) for r in range(1, 11)])


@pytest.mark.parametrize("dist", LOG_CONCAVE, ids=lambda d: d.spec)
def test_redundant_cost_nondecreasing_log_concave(dist):
    c = _r_min_cost(dist)
    assert np.all(np.diff(c) >= -1e-9 * c[1:])


@pytest.mark.parametrize("dist", LOG_CONVEX, ids=lambda d: d.spec)
def test_redundant_cost_nonincreasing_log_convex(dist):
    c = _r_min_cost(dist)
    assert np.all(np.diff(c) <= 1e-9 * c[1:])


@settings(max_examples=30, deadline=None)
@given(
    shift=st.floats(0.01, 4), rate=st.floats(0.1, 4),
    x=st.floats(0, 30), t=st.floats(0, 30), theta=st.floats(0.01, 0.99),
)
def test_shifted_exponential_properties(shift, rate, x, t, theta):
    d = ShiftedExponential(shift, rate)
    assert d.tail(x + t) <= d.tail(x) * d.tail(t) + 1e-12
    assert d.tail(x) <= d.tail(theta * x) ** (1 / theta) + 1e-12


@settings(max_examples=30, deadline=None)
@given(
    p=st.floats(0.01, 0.99), r1=st.floats(0.1, 5), r2=st.floats(0.1, 5),
    x=st.floats(0, 30), t=st.floats(0, 30), theta=st.floats(0.01, 0.99),
)
def test_hyperexponential_properties(p, r1, r2, x, t, theta):
    d = HyperExponential(p, r1, r2)
    assert d.tail(x + t) >= d.tail(x) * d.tail(t) * (1 - 1e-12) - 1e-300
    assert d.tail(x) >= d.tail(theta * x) ** (1 / theta) * (1 - 1e-12) - 1e-300
