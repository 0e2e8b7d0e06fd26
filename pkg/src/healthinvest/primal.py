"""Primal quantities recovered from the dual: z*, V, the wealth boundary and feedback maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import BoundarySurface
from .closed_forms import W_value, post_integrals, w_bundle
from .numerics import BracketError, BracketSpec, find_root_brent
from .params import ModelParams, g_value
from .value import value_context


class InfeasibleWealthError(ValueError):
    """Post-investment wealth does not cover the remaining investment payments."""


@dataclass(frozen=True)
class PrimalPoint:
    t: float
    x: float
    h: float

    def check(self, params: ModelParams) -> "PrimalPoint":
        if not (0.0 <= self.t <= params.horizon):
            raise ValueError(f"t={self.t} outside [0, {params.horizon}]")
        if not self.x > 0:
            raise ValueError("x must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        return self


@dataclass(frozen=True)
class PolicyEval:
    z_star: float
    v: float
    c_star: float
    pi_star: float
    invest_now: bool
    b_hat: float


def inverse_marginal_utility(params: ModelParams, z, h):
    """Consumption ``h (z / alpha)**(1 / (alpha - 1))`` at which u_c(c, h) = z."""
    a = params.alpha
    return np.asarray(h, float) * (np.asarray(z, float) / a) ** (1.0 / (a - 1.0))


def allocation(params: ModelParams, z, j_zz):
    """Risky allocation ``theta / sigma * z * J_zz`` in the dual variables."""
    return params.theta / params.sigma * np.asarray(z, float) * np.asarray(j_zz, float)


def utility(params: ModelParams, c, h):
    """Cobb-Douglas felicity ``c**alpha h**(1 - alpha)``."""
    a = params.alpha
    return np.asarray(c, float) ** a * np.asarray(h, float) ** (1.0 - a)


def z_star(params: ModelParams, surface_b: BoundarySurface, p: PrimalPoint, tol: float = 1e-13) -> float:
    """Dual multiplier solving ``J_z(t, z, h) = -x``.

    The bracket ``[b 1e-3, g 1e3]`` (``g`` the boundary upper bound) is widened
    by a further factor 1e3 on each side up to three times.
    """
    p.check(params)
    if p.t >= params.horizon:
        raise ValueError("z_star needs t < T")
    ctx = value_context(params, surface_b, p.t, p.h)

    def f(z):
        return float(ctx.j(z, 1)[1][0]) + p.x

    ub = max(ctx.b0, 1e-8)
    lo, hi = ub * 1e-3, ub * 1e3
    for _ in range(4):
        f_lo, f_hi = f(lo), f(hi)
        if f_lo <= 0.0 <= f_hi:
            return find_root_brent(f, BracketSpec(lo, hi, tol=tol * hi))
        lo, hi = lo * 1e-3, hi * 1e3
    raise BracketError(lo, hi, f_lo, f_hi, context=f"z_star at (t={p.t}, x={p.x}, h={p.h}); J_z + x")


def primal_boundary(params: ModelParams, surface_b: BoundarySurface, t: float, h: float) -> float:
    """Wealth boundary ``-W_z(t, b(t, h), h) + g_t``; investing is optimal at or above it."""
    if not t < params.horizon:
        raise ValueError("primal boundary needs t < T")
    b = surface_b.b(t, h)
    return float(-w_bundle(params, t, b, h).w_z + g_value(params, t))


def policy(params: ModelParams, surface_b: BoundarySurface, p: PrimalPoint) -> PolicyEval:
    """Feedback consumption and risky allocation before investing, plus the value."""
    z = z_star(params, surface_b, p)
    ctx = value_context(params, surface_b, p.t, p.h)
    j, _, jzz = (float(v[0]) for v in ctx.j(z, 2))
    b_hat = primal_boundary(params, surface_b, p.t, p.h)
    return PolicyEval(
        z_star=z,
        v=j + p.x * z,
        c_star=float(inverse_marginal_utility(params, z, p.h)),
        pi_star=float(allocation(params, z, jzz)),
        invest_now=bool(p.x >= b_hat),
        b_hat=b_hat,
    )


def value_primal(params: ModelParams, surface_b: BoundarySurface, p: PrimalPoint) -> float:
    z = z_star(params, surface_b, p)
    return float(value_context(params, surface_b, p.t, p.h).j(z)[0][0]) + p.x * z


# ---- after the investment -------------------------------------------------------


def post_investment_z(params: ModelParams, t, x, h):
    """Minimizer of ``W(t, z, h) + z (x - g_t)``, explicit from the first-order condition."""
    t = np.asarray(t, float)
    surplus = np.asarray(x, float) - g_value(params, t)
    if np.any(surplus <= 0):
        raise InfeasibleWealthError("wealth must exceed the present value of remaining payments")
    k = post_integrals(params, t, h).k
    a = params.alpha
    # x - g = a**(1/(1-a)) z**(1/(a-1)) K
    out = (surplus / (a ** (1.0 / (1.0 - a)) * k)) ** (a - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def post_investment_value(params: ModelParams, p: PrimalPoint) -> float:
    """``inf_z [W(t, z, h) + z (x - g_t)]`` after investing."""
    p.check(params)
    if p.t >= params.horizon:
        return 0.0
    z = post_investment_z(params, p.t, p.x, p.h)
    return float(W_value(params, p.t, z, p.h) + z * (p.x - g_value(params, p.t)))


def post_investment_policy(params: ModelParams, t, x, h, k=None):
    """Consumption ``h (x - g) / K`` and allocation ``theta (x - g) / (sigma (1 - alpha))``.

    ``k`` may carry precomputed values of the time integral K(T - t, h).
    """
    surplus = np.asarray(x, float) - g_value(params, t)
    if k is None:
        k = post_integrals(params, t, h).k
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(k > 0, np.asarray(h, float) * surplus / k, 0.0)
    pi = params.theta * surplus / (params.sigma * (1.0 - params.alpha))
    return c, pi


def wealth_from_dual(params: ModelParams, surface_b: BoundarySurface, t: float, z, h: float):
    """``-J_z(t, z, h)``: the optimal wealth associated with dual state z."""
    return -value_context(params, surface_b, t, h).j(z, 1)[1]


def policy_table(params: ModelParams, surface_b: BoundarySurface, t: float, h: float, n_z: int = 160,
                 span: float = 1e3):
    """Tabulate (x, z, c, pi) on a log-spaced z grid around the boundary.

    Returned arrays are ordered by increasing wealth.
    """
    ctx = value_context(params, surface_b, t, h)
    ub = max(ctx.b0, 1e-6)
    z = np.geomspace(ub / span, ub * span, n_z)[::-1]
    _, jz, jzz = ctx.j(z, 2)
    x = -jz
    c = inverse_marginal_utility(params, z, h)
    pi = allocation(params, z, jzz)
    return x, z, c, pi


def math_log_interp(x_query, x_tab, y_tab):
    """Interpolate ``log y`` linearly in ``log x``; clamps to the table ends."""
    lx = np.log(np.maximum(x_query, 1e-300))
    return np.exp(np.interp(lx, np.log(x_tab), np.log(y_tab)))


__all__ = [
    "PrimalPoint", "PolicyEval", "InfeasibleWealthError", "z_star", "primal_boundary", "policy",
    "post_investment_value", "post_investment_policy", "post_investment_z", "inverse_marginal_utility",
    "utility", "allocation", "value_primal", "wealth_from_dual", "policy_table", "math_log_interp",
]
