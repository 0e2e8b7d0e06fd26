import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from healthinvest.numerics import (
    BracketError, BracketSpec, QuadratureMethod, QuadratureSpec, composite_gauss_legendre, find_root,
    find_root_brent, gauss_legendre, integrate, minimize_scalar, monotone_interpolator, normal_cdf, normal_pdf,
)


def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(-np.inf) == 0.0 and normal_cdf(np.inf) == 1.0
    assert normal_cdf(1.96) == pytest.approx(0.9750021, abs=1e-6)
    assert normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))


@given(st.floats(-40, 40))
def test_normal_cdf_symmetry(x):
    assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) <= 1e-12


def test_integrate_examples():
    assert integrate(lambda x: 1.0, 0.0, 1.0) == 1.0
    assert integrate(lambda x: x * x, 0.0, 1.0) == pytest.approx(1 / 3, abs=1e-10)
    assert integrate(lambda s: math.exp(-0.048 * s), 0.0, 20.0) == pytest.approx((1 - math.exp(-0.96)) / 0.048,
                                                                                  abs=1e-10)
    spec = QuadratureSpec(method=QuadratureMethod.TRAPEZOID, abs_tol=1e-8)
    assert integrate(math.sin, 0.0, math.pi, spec) == pytest.approx(2.0, abs=1e-6)


@given(st.floats(-3, 0), st.floats(0, 2), st.floats(2, 4))
def test_integrate_additive(a, b, c):
    f = lambda x: math.exp(-x * x) * math.cos(3 * x)  # noqa: E731
    spec = QuadratureSpec()
    assert abs(integrate(f, a, b, spec) + integrate(f, b, c, spec) - integrate(f, a, c, spec)) <= 2 * spec.abs_tol


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_depth=0)
    with pytest.raises(ValueError):
        BracketSpec(1.0, 1.0)
    with pytest.raises(ValueError):
        BracketSpec(0.0, 1.0, tol=0.0)


def test_gauss_legendre_exactness():
    x, w = gauss_legendre(0.0, 2.0, 8)
    assert np.sum(w * x ** 15) == pytest.approx(2.0 ** 16 / 16, rel=1e-13)
    x, w = composite_gauss_legendre(0.0, 1.0, 4, 6)
    assert np.sum(w * np.exp(x)) == pytest.approx(math.e - 1, rel=1e-14)


def test_find_root_examples():
    assert find_root(lambda x: x - 2.0, BracketSpec(0.0, 10.0)) == pytest.approx(2.0, abs=1e-10)
    root = 1.5213797068045676  # real root of x^3 - x - 2 (Newton to 1e-14)
    assert find_root(lambda x: x ** 3 - x - 2, BracketSpec(1.0, 2.0)) == pytest.approx(root, abs=1e-10)
    assert find_root_brent(lambda x: x ** 3 - x - 2, BracketSpec(1.0, 2.0)) == pytest.approx(root, abs=1e-10)
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1, BracketSpec(-1.0, 1.0))
    with pytest.raises(BracketError):
        find_root_brent(lambda x: x * x + 1, BracketSpec(-1.0, 1.0))


def test_find_root_smallest_of_flat_stretch():
    f = lambda x: min(max(x - 1.0, 0.0), 0.0) + max(x - 2.0, 0.0) - (x < 1.0) * 1.0  # noqa: E731
    r = find_root(f, BracketSpec(0.0, 3.0, tol=1e-12))
    assert r == pytest.approx(1.0, abs=1e-9)


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(0.1, 5))
def test_root_within_bracket(c, left, right):
    spec = BracketSpec(c - left, c + right)
    r = find_root(lambda x: math.tanh(x - c), spec)
    assert spec.lo <= r <= spec.hi and abs(r - c) <= 1e-9


def test_minimize_scalar_examples(params):
    x, fx = minimize_scalar(lambda x: (x - 3) ** 2, 0.0, 10.0)
    assert x == pytest.approx(3.0, abs=1e-8) and fx == pytest.approx(0.0, abs=1e-15)
    x, _ = minimize_scalar(lambda x: x + 1 / x, 0.1, 10.0)
    assert x == pytest.approx(1.0, abs=1e-5)


def test_minimize_matches_grid_scan(params):
    from healthinvest.closed_forms import W_value
    from healthinvest.params import g_value
    gap = 50.0 - g_value(params, 0.0)
    f = lambda z: W_value(params, 0.0, z, 1000.0) + z * gap  # noqa: E731
    zs = np.linspace(1.0, 400.0, 100_000)
    vals = W_value(params, 0.0, zs, 1000.0) + zs * gap
    z_grid = zs[np.argmin(vals)]
    x, _ = minimize_scalar(f, 1.0, 400.0, tol=1e-8)
    assert abs(x - z_grid) <= 10 * (zs[1] - zs[0])


def test_monotone_interpolator():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    f = monotone_interpolator(x, y)
    v = f(np.linspace(0, 3, 301))
    assert np.all(np.diff(v) >= -1e-15) and v.min() >= 0 and v.max() <= 1
