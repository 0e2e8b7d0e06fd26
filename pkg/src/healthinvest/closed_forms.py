"""Closed-form dual quantities of the problem after the health investment.

After investing, the dual value is

    W(t, z, h) = C z**p K(T - t, h),    C = (1 - a) a**(a / (1 - a)),  p = a / (a - 1),

with the time integral

    K(tau, h) = int_0^tau exp(e s) exp(Q(s, h) / (a - 1)) H2(s, h) ds,
    Q(s, h)   = int_0^s (rho + M(H2(u, h))) du,
    e         = a / (1 - a) (r + theta**2 / 2) + theta**2 a**2 / (2 (a - 1)**2).

All h-derivatives differentiate under the integral; nested integrals are
evaluated with fixed-order Gauss-Legendre rules so that every quantity is a
smooth function of (t, h).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .health import health_post
from .numerics import gauss_legendre
from .params import ModelParams

GL_ORDER = 64
_CHUNK = 256


@dataclass(frozen=True)
class DualPoint:
    t: float
    z: float
    h: float

    def check(self, params: ModelParams) -> "DualPoint":
        if not (0.0 <= self.t <= params.horizon):
            raise ValueError(f"t={self.t} outside [0, {params.horizon}]")
        if not self.z > 0:
            raise ValueError("z must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        return self


@dataclass(frozen=True)
class WDerivBundle:
    w: float
    w_z: float
    w_h: float
    w_t: float
    w_zz: float
    w_hh: float
    w_hz: float
    w_ht: float


@dataclass(frozen=True)
class PostIntegrals:
    """K and its h-derivatives, plus the integrands at the upper limit."""

    k: np.ndarray
    k_h: np.ndarray
    k_hh: np.ndarray
    phi_end: np.ndarray
    phi_h_end: np.ndarray


def _growth(params: ModelParams) -> float:
    a, th = params.alpha, params.theta
    return a / (1.0 - a) * (params.r + 0.5 * th * th) + th * th * a * a / (2.0 * (a - 1.0) ** 2)


def _inner(params: ModelParams, h, s, n):
    """Q, A, A2 on [0, s]; h broadcasts against s."""
    u, wu = gauss_legendre(np.zeros_like(s), s, n)
    hh = np.asarray(h, float)[..., None]
    hu = health_post(params, hh, u)
    du = np.exp(-params.delta * u)
    q = np.sum(wu * (params.rho + params.m0 + params.m1 * hu ** (-params.kappa)), axis=-1)
    a1 = np.sum(wu * hu ** (-params.kappa - 1.0) * du, axis=-1)
    a2 = np.sum(wu * hu ** (-params.kappa - 2.0) * du * du, axis=-1)
    return q, a1, a2


def _integrands(params: ModelParams, h, s, q, a1, a2, hessian: bool = True):
    a = params.alpha
    c = params.m1 * params.kappa / (1.0 - a)
    base = np.exp(_growth(params) * s + q / (a - 1.0))
    hs = health_post(params, h, s)
    ds = np.exp(-params.delta * s)
    phi = base * hs
    phi_h = base * (c * a1 * hs + ds)
    if not hessian:
        return phi, phi_h, None
    phi_hh = base * (c * c * a1 * a1 * hs + 2.0 * c * a1 * ds - c * (params.kappa + 1.0) * a2 * hs)
    return phi, phi_h, phi_hh


def _post_integrals_chunk(params, tau, h, n):
    s, ws = gauss_legendre(np.zeros_like(tau), tau, n)
    hb = h[..., None]
    q, a1, a2 = _inner(params, hb, s, n)
    phi, phi_h, phi_hh = _integrands(params, hb, s, q, a1, a2)
    qe, a1e, a2e = _inner(params, h, tau, n)
    pe, phe, _ = _integrands(params, h, tau, qe, a1e, a2e, hessian=False)
    return (np.sum(ws * phi, -1), np.sum(ws * phi_h, -1), np.sum(ws * phi_hh, -1), pe, phe)


def post_integrals(params: ModelParams, t, h, n: int = GL_ORDER) -> PostIntegrals:
    """Evaluate K(T - t, h), K_h, K_hh and the end integrands, vectorized."""
    t, h = np.broadcast_arrays(np.asarray(t, float), np.asarray(h, float))
    shape = t.shape
    tau = np.clip(params.horizon - t.ravel(), 0.0, None)
    hf = h.ravel()
    if np.any(hf <= 0):
        raise ValueError("health must be positive")
    parts = [_post_integrals_chunk(params, tau[i:i + _CHUNK], hf[i:i + _CHUNK], n)
             for i in range(0, tau.size, _CHUNK)]
    cols = [np.concatenate([p[j] for p in parts]).reshape(shape) if parts else np.zeros(shape)
            for j in range(5)]
    return PostIntegrals(*cols)


def u_hat(params: ModelParams, z, h):
    """Convex conjugate sup_c [c**a h**(1-a) - c z] = (1 - a)(z / a)**p h."""
    a = params.alpha
    out = (1.0 - a) * (np.asarray(z, float) / a) ** params.p * np.asarray(h, float)
    return float(out) if np.ndim(out) == 0 else out


def W_value(params: ModelParams, t, z, h):
    """Post-investment dual value W(t, z, h); zero at the horizon."""
    k = post_integrals(params, t, h).k
    out = params.u_hat_coef * np.asarray(z, float) ** params.p * k
    return float(out) if np.ndim(out) == 0 else out


def W_z(params: ModelParams, t, z, h):
    k = post_integrals(params, t, h).k
    out = params.p * params.u_hat_coef * np.asarray(z, float) ** (params.p - 1.0) * k
    return float(out) if np.ndim(out) == 0 else out


def W_zz(params: ModelParams, t, z, h):
    k = post_integrals(params, t, h).k
    p = params.p
    out = p * (p - 1.0) * params.u_hat_coef * np.asarray(z, float) ** (p - 2.0) * k
    return float(out) if np.ndim(out) == 0 else out


def w_bundle(params: ModelParams, t, z, h) -> WDerivBundle:
    """Unchecked, vectorized form of :func:`W_partials`.

    The integrals depend on t only through T - t, so t slightly below 0 is
    accepted; finite-difference oracles rely on that.
    """
    ints = post_integrals(params, t, h)
    C, p = params.u_hat_coef, params.p
    z = np.asarray(z, float)
    zp, zp1 = z ** p, z ** (p - 1.0)
    return WDerivBundle(
        w=C * zp * ints.k,
        w_z=p * C * zp1 * ints.k,
        w_h=C * zp * ints.k_h,
        w_t=-C * zp * ints.phi_end,
        w_zz=p * (p - 1.0) * C * z ** (p - 2.0) * ints.k,
        w_hh=C * zp * ints.k_hh,
        w_hz=p * C * zp1 * ints.k_h,
        w_ht=-C * zp * ints.phi_h_end,
    )


def W_partials(params: ModelParams, point: DualPoint) -> WDerivBundle:
    """Value and partial derivatives of W at one point."""
    point.check(params)
    b = w_bundle(params, point.t, point.z, point.h)
    return WDerivBundle(*(float(getattr(b, k)) for k in WDerivBundle.__dataclass_fields__))


def gamma_fn(params: ModelParams, t, h):
    """Gamma(t, h) with W_h(t, z, h) = z**p Gamma(t, h); zero at the horizon."""
    out = params.u_hat_coef * post_integrals(params, t, h).k_h
    return float(out) if np.ndim(out) == 0 else out


def boundary_upper_bound(params: ModelParams, t, h, gamma=None):
    """Upper bound (I / f(I))**(a - 1) Gamma**(1 - a) for the dual boundary.

    Below it the running reward ``z I - f(I) W_h`` of waiting is negative.
    The bound vanishes at the horizon, where Gamma does.
    """
    a = params.alpha
    gam = gamma_fn(params, t, h) if gamma is None else np.asarray(gamma, float)
    out = (params.invest_amount / params.f_of_I) ** (a - 1.0) * np.maximum(gam, 0.0) ** (1.0 - a)
    return float(out) if np.ndim(out) == 0 else out


def lemma_bound_w_h(params: ModelParams, z, h):
    """Uniform bound z**p C C0(h) exp(c1 T) / c1 on W_h."""
    a, th = params.alpha, params.theta
    c0 = (params.m1 * h ** (-params.kappa - 1.0) * (h + params.f_of_I / params.delta)
          / ((1.0 - a) * params.delta) * np.exp(params.delta * params.kappa * params.horizon) + 1.0)
    c1 = 0.5 * (a * th / (1.0 - a)) ** 2 + a / (1.0 - a) * (params.r + 0.5 * th * th)
    return np.asarray(z, float) ** params.p * params.u_hat_coef * c0 * np.exp(c1 * params.horizon) / c1


def pde_residual_terms(params: ModelParams, point: DualPoint) -> dict[str, float]:
    """Terms of the post-investment pricing equation; their sum vanishes."""
    d = W_partials(params, point)
    th, z, h = params.theta, point.z, point.h
    m = params.m0 + params.m1 * h ** (-params.kappa)
    return {
        "w_t": d.w_t,
        "diffusion": 0.5 * th * th * z * z * d.w_zz,
        "drift_z": (params.rho - params.r + m) * z * d.w_z,
        "drift_h": (-params.delta * h + params.f_of_I) * d.w_h,
        "discount": -(params.rho + m) * d.w,
        "u_hat": u_hat(params, z, h),
    }
