import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from healthinvest.closed_forms import (
    DualPoint, W_partials, W_value, W_z, W_zz, boundary_upper_bound, gamma_fn, lemma_bound_w_h, post_integrals,
    u_hat, w_bundle,
)
from healthinvest.numerics import QuadratureSpec, integrate
from healthinvest.params import ModelParams
from healthinvest.primal import inverse_marginal_utility, utility
from healthinvest.verification import FD_H, FD_T, FD_Z, fd_derivative_errors

P = ModelParams()
pts = st.tuples(st.floats(0.0, 19.5), st.floats(0.05, 20.0), st.floats(0.5, 5000.0))


def test_u_hat_examples():
    assert u_hat(P, P.alpha, 7.0) == pytest.approx((1 - P.alpha) * 7.0, rel=1e-14)
    z = np.linspace(0.1, 5, 50)
    assert np.all(np.diff(u_hat(P, z, 3.0)) < 0)
    assert u_hat(P, 0.7, 6.0) == pytest.approx(2 * u_hat(P, 0.7, 3.0), rel=1e-14)


def test_u_hat_is_conjugate(rng):
    z = rng.uniform(0.05, 10, 100)
    h = rng.uniform(0.5, 2000, 100)
    c = inverse_marginal_utility(P, z, h)
    np.testing.assert_allclose(utility(P, c, h) - z * c, u_hat(P, z, h), rtol=1e-8)


def test_W_terminal_and_scaling():
    assert W_value(P, P.horizon, 1.0, 1000.0) == 0.0
    for c in (0.3, 2.0, 17.0):
        assert W_value(P, 3.0, c * 0.8, 50.0) == pytest.approx(c ** P.p * W_value(P, 3.0, 0.8, 50.0), rel=1e-12)


def test_K_matches_adaptive_quadrature():
    """K from nested Gauss-Legendre against adaptive Simpson of the defining integrand."""
    from healthinvest.health import health_post, integrated_mortality_post
    a, th = P.alpha, P.theta
    e = a / (1 - a) * (P.r + th * th / 2) + th * th * a * a / (2 * (a - 1) ** 2)
    for t, h in ((0.0, 1000.0), (10.0, 2.0)):
        def f(s):
            q = P.rho * s + integrated_mortality_post(P, h, s)
            return np.exp(e * s + q / (a - 1)) * health_post(P, h, s)
        ref = integrate(f, 0.0, P.horizon - t, QuadratureSpec(abs_tol=1e-9))
        assert post_integrals(P, t, h).k == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("t", FD_T)
@pytest.mark.parametrize("z", FD_Z)
@pytest.mark.parametrize("h", FD_H)
def test_partials_match_finite_differences(t, z, h):
    errs = fd_derivative_errors(P, t, z, h)
    assert max(errs.values()) <= 1e-4, errs


@settings(max_examples=40, deadline=None)
@given(pts)
def test_signs(pt):
    t, z, h = pt
    d = W_partials(P, DualPoint(t, z, h))
    assert d.w > 0 and d.w_z < 0 and d.w_h > 0 and d.w_zz > 0 and d.w_hz < 0
    assert d.w_h <= lemma_bound_w_h(P, z, h)


def test_vectorized_matches_scalar(rng):
    t = rng.uniform(0, 20, 600)
    z = rng.uniform(0.1, 5, 600)
    h = rng.uniform(1, 1000, 600)
    b = w_bundle(P, t, z, h)
    for i in (0, 255, 256, 599):
        d = W_partials(P, DualPoint(t[i], z[i], h[i]))
        assert b.w[i] == pytest.approx(d.w, rel=1e-14) and b.w_ht[i] == pytest.approx(d.w_ht, rel=1e-14)
    assert W_z(P, 2.0, 1.3, 5.0) == pytest.approx(W_partials(P, DualPoint(2.0, 1.3, 5.0)).w_z, rel=1e-14)
    assert W_zz(P, 2.0, 1.3, 5.0) == pytest.approx(W_partials(P, DualPoint(2.0, 1.3, 5.0)).w_zz, rel=1e-14)


def test_gamma(rng):
    assert gamma_fn(P, P.horizon, 100.0) == 0.0
    t = rng.uniform(0, 19.9, 20)
    z = rng.uniform(0.1, 5, 20)
    h = rng.uniform(1, 1000, 20)
    for i in range(20):
        assert gamma_fn(P, t[i], h[i]) > 0
        assert z[i] ** P.p * gamma_fn(P, t[i], h[i]) == pytest.approx(
            W_partials(P, DualPoint(t[i], z[i], h[i])).w_h, rel=1e-8)


def test_upper_bound():
    ub = boundary_upper_bound(P, 10.0, 1000.0)
    fine = (P.invest_amount / P.f_of_I) ** (P.alpha - 1) * (P.u_hat_coef * post_integrals(P, 10.0, 1000.0, 256).k_h) ** (1 - P.alpha)
    assert 0 < ub < np.inf and ub == pytest.approx(fine, rel=1e-6)
    assert boundary_upper_bound(P, P.horizon, 1000.0) == 0.0
    ts = np.linspace(0, 19.9, 400)
    g = boundary_upper_bound(P, ts, 1000.0)
    assert np.max(np.abs(np.diff(g))) <= 10 * (ts[1] - ts[0]) * np.max(g)


def test_point_validation():
    with pytest.raises(ValueError):
        DualPoint(-1.0, 1.0, 1.0).check(P)
    with pytest.raises(ValueError):
        DualPoint(0.0, 0.0, 1.0).check(P)
    with pytest.raises(ValueError):
        DualPoint(0.0, 1.0, -1.0).check(P)
