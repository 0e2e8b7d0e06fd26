import numpy as np
import pytest
from hypothesis import given, strategies as st

from healthinvest.health import (
    HealthPhase, Phase, health_post, health_pre, integrated_mortality_post, integrated_mortality_post_gl,
    integrated_mortality_pre, mortality,
)
from healthinvest.numerics import QuadratureSpec, integrate
from healthinvest.params import ModelParams

P = ModelParams()
positive_h = st.floats(1e-3, 1e4)
times = st.floats(0.0, 50.0)


def test_health_pre_examples():
    assert health_pre(P, 1000.0, 0.0) == 1000.0
    assert health_pre(P, 1000.0, 20.0) == pytest.approx(1000.0 * np.exp(-0.11), rel=1e-14)
    assert health_pre(P, 1000.0, 20.0) == pytest.approx(895.834, abs=1e-3)


def test_health_post_examples():
    assert health_post(P, 123.0, 0.0) == 123.0
    level = 2.0 ** 0.19 / 0.0055
    assert level == pytest.approx(207.41, abs=0.01)
    assert health_post(P, 1000.0, 1e4) == pytest.approx(level, rel=1e-6)
    assert health_post(P, 100.0, 20.0) == pytest.approx(111.19, abs=0.01)


def test_mortality_examples():
    assert mortality(P, 1e12) == pytest.approx(P.m0, abs=1e-9)
    assert mortality(P, 2.0) == pytest.approx(0.0237 + 0.0017 * 2.0 ** -1.8, rel=1e-14)
    with pytest.raises(ValueError):
        mortality(P, 0.0)


def test_mortality_tiny_health_not_clamped():
    h = 1e-8
    assert mortality(P, h) == pytest.approx(P.m0 + P.m1 * h ** -P.kappa, rel=1e-14)


@given(positive_h, times, st.floats(1e-3, 10.0))
def test_health_pre_decreasing(h0, s, ds):
    assert health_pre(P, h0, s + ds) < health_pre(P, h0, s)


@given(positive_h, times)
def test_investment_never_lowers_health(h0, s):
    assert health_post(P, h0, s) >= health_pre(P, h0, s) * (1 - 1e-15)


@given(positive_h, positive_h)
def test_mortality_decreasing(h1, h2):
    if h1 < h2:
        assert mortality(P, h1) > mortality(P, h2) or np.isclose(h1, h2)


@pytest.mark.parametrize("h0", [2.0, 1000.0])
@pytest.mark.parametrize("s", [1.0, 10.0, 20.0])
def test_integrated_pre_matches_quadrature(h0, s):
    q = integrate(lambda u: mortality(P, health_pre(P, h0, u)), 0.0, s, QuadratureSpec(abs_tol=1e-13))
    assert integrated_mortality_pre(P, h0, s) == pytest.approx(q, rel=1e-10)


@given(positive_h, times)
def test_integrated_pre_lower_bound(h0, s):
    assert integrated_mortality_pre(P, h0, s) >= P.m0 * s * (1 - 1e-12)


def test_integrated_pre_convex_in_s():
    s = np.linspace(0, 20, 201)
    for h0 in (2.0, 100.0, 1000.0):
        v = integrated_mortality_pre(P, h0, s)
        assert np.all(np.diff(v, 2) >= -1e-9)


def test_integrated_post_examples():
    assert integrated_mortality_post(P, 100.0, 0.0) == 0.0
    # Richardson-extrapolated trapezoid on a fine mesh as oracle
    f = lambda u: mortality(P, health_post(P, 100.0, u))  # noqa: E731

    def trap(n):
        u = np.linspace(0, 5.0, n + 1)
        y = f(u)
        return (5.0 / n) * (y.sum() - 0.5 * (y[0] + y[-1]))

    oracle = (4 * trap(20000) - trap(10000)) / 3
    assert integrated_mortality_post(P, 100.0, 5.0) == pytest.approx(oracle, rel=1e-8)
    assert integrated_mortality_post_gl(P, 100.0, 5.0) == pytest.approx(oracle, rel=1e-10)


@given(positive_h, st.floats(0.0, 40.0))
def test_integrated_post_below_pre(h, s):
    assert integrated_mortality_post_gl(P, h, s) <= integrated_mortality_pre(P, h, s) * (1 + 1e-12) + 1e-15


def test_integrated_post_rejects_negative_time():
    with pytest.raises(ValueError):
        integrated_mortality_post(P, 10.0, -1.0)


def test_mortality_shapes():
    s = np.linspace(0, 200, 2001)
    healthy = mortality(P, health_post(P, 1000.0, s))
    pre = mortality(P, health_pre(P, 1000.0, s))
    assert np.all(np.diff(healthy[:200]) > 0) and np.all(healthy <= pre + 1e-15)
    sick = mortality(P, health_post(P, 100.0, s))
    assert np.all(np.diff(sick) < 0) and np.all(sick > P.m0)


def test_health_phase():
    assert HealthPhase(Phase.PRE_INVESTMENT, 10.0).health(P, 1.0) == health_pre(P, 10.0, 1.0)
    assert HealthPhase(Phase.POST_INVESTMENT, 10.0).health(P, 1.0) == health_post(P, 10.0, 1.0)
    with pytest.raises(ValueError):
        HealthPhase(Phase.PRE_INVESTMENT, 0.0)
