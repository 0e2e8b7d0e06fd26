"""Dual stopping value J-hat, the dual value J and its z-derivatives.

J-hat at ``(t, z, h)`` is a one-dimensional integral over elapsed time of the
same two-term kernel the boundary solver uses, now started from ``z`` and
compared against the solved boundary along the health characteristic. The
substitution ``s = u**2`` removes the ``1/sqrt(s)`` behaviour of the
z-derivatives at ``s = 0`` so that a composite Gauss-Legendre rule converges
quickly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .boundary import (QUAD_ORDER, QUAD_PANELS, BoundarySurface, _stage_data, _standardize, gamma_spline,  # noqa: F401
                       graded_nodes, graded_rule)
from .closed_forms import DualPoint, w_bundle
from .health import integrated_mortality_pre
from .numerics import normal_cdf, normal_pdf
from .params import ModelParams, g_value

BLOCK = 1024


class ValueContext:
    """Quadrature data for all z at one fixed ``(t, h)``.

    Building the context evaluates the boundary, Gamma and discount factors at
    the quadrature nodes once; :meth:`evaluate` is then cheap and vectorized
    in z.
    """

    def __init__(self, params: ModelParams, surface: BoundarySurface, t: float, h: float,
                 panels: int = QUAD_PANELS, order: int = QUAD_ORDER):
        T = params.horizon
        if not (0.0 <= t <= T):
            raise ValueError(f"t={t} outside [0, {T}]")
        if not h > 0:
            raise ValueError("h must be positive")
        self.params, self.t, self.h = params, float(t), float(h)
        self.tau = T - t
        bfn = surface.boundary_fn(t, h)
        self.b0 = float(max(bfn(t), 0.0)) if t < T else 0.0
        self.g_t = g_value(params, t)
        if self.tau <= 0.0:
            self.empty = True
            return
        self.empty = False
        s, self.w = graded_rule(self.tau, panels, order)
        self.s = s
        self.bs = np.maximum(bfn(np.minimum(t + s, T)), 0.0)
        h_ref = h * math.exp(params.delta * t)
        gam = np.maximum(gamma_spline(params, h_ref)(t + s), 0.0)
        self.d = _stage_data(params, s, h, gam)
        w = w_bundle(params, t, 1.0, h)
        self._w_coef = (float(w.w), float(w.w_z), float(w.w_zz))

    # -- J-hat ----------------------------------------------------------------

    def j_hat_raw(self, z, deriv: int = 0):
        """Quadrature of the representation, without projecting onto the stopping region.

        Returns a tuple with the value and the first ``deriv`` z-derivatives.
        """
        z = np.atleast_1d(np.asarray(z, float))
        if self.empty:
            return tuple(np.zeros_like(z) for _ in range(deriv + 1))
        d, p = self.d, self.params.p
        zc = z[:, None]
        lr = np.log(zc) - np.log(np.where(self.bs > 0, self.bs, 1.0))
        inf = self.bs <= 0
        x1 = np.where(inf, np.inf, _standardize(lr, d.m1, d.v, d.s))
        x2 = np.where(inf, np.inf, _standardize(lr, d.m2, d.v, d.s))
        P1, P2 = normal_cdf(x1), normal_cdf(x2)
        zp = zc ** p
        out = [(d.a * zc * P1 - d.c * zp * P2) @ self.w]
        if deriv >= 1:
            # density terms vanish with the volatility (a step has no smooth slope)
            live = ~inf & (d.v > 0)
            iv = np.where(d.v > 0, 1.0 / np.where(d.v > 0, d.v, 1.0), 0.0)
            x1f = np.where(live, x1, 0.0)
            x2f = np.where(live, x2, 0.0)
            f1 = np.where(live, normal_pdf(x1f), 0.0)
            f2 = np.where(live, normal_pdf(x2f), 0.0)
            out.append((d.a * (P1 + f1 * iv) - d.c * zp / zc * (p * P2 + f2 * iv)) @ self.w)
            if deriv >= 2:
                t1 = d.a * f1 * iv / zc * (1.0 - x1f * iv)
                t2 = d.c * zp / (zc * zc) * (p * (p - 1.0) * P2 + (2.0 * p - 1.0) * f2 * iv - x2f * f2 * iv * iv)
                out.append((t1 - t2) @ self.w)
        return tuple(out)

    def j_hat(self, z, deriv: int = 0):
        """J-hat and z-derivatives; exactly zero on the stopping region ``z < b``.

        Should the quadrature dip below zero just above ``b`` (it does for
        trapezoid boundaries near the horizon) the value is projected onto
        zero, since stopping at once is always admissible.
        """
        z = np.atleast_1d(np.asarray(z, float))
        vals = self.j_hat_raw(z, deriv)
        stop = (z < self.b0) | (vals[0] < 0.0)
        return tuple(np.where(stop, 0.0, v) for v in vals)

    # -- J = J-hat + W - z g ----------------------------------------------------

    def w_hat(self, z, deriv: int = 0):
        z = np.atleast_1d(np.asarray(z, float))
        w, wz, wzz = self._w_coef if not self.empty else (0.0, 0.0, 0.0)
        p = self.params.p
        out = [w * z ** p - z * self.g_t]
        if deriv >= 1:
            out.append(wz * z ** (p - 1.0) - self.g_t)
        if deriv >= 2:
            out.append(wzz * z ** (p - 2.0))
        return tuple(out)

    def j(self, z, deriv: int = 0):
        a = self.j_hat(z, deriv)
        b = self.w_hat(z, deriv)
        return tuple(x + y for x, y in zip(a, b))


@lru_cache(maxsize=512)
def _cached_context(params: ModelParams, surface: BoundarySurface, t: float, h: float) -> ValueContext:
    return ValueContext(params, surface, t, h)


def value_context(params: ModelParams, surface: BoundarySurface, t: float, h: float) -> ValueContext:
    return _cached_context(params, surface, float(t), float(h))


def _scalar(x):
    return float(np.asarray(x).ravel()[0])


def j_hat(params: ModelParams, surface_b: BoundarySurface, p: DualPoint) -> float:
    """J-hat(t, z, h) by quadrature of its integral representation."""
    p.check(params)
    return _scalar(value_context(params, surface_b, p.t, p.h).j_hat(p.z)[0])


def j_value(params: ModelParams, surface_b: BoundarySurface, p: DualPoint) -> float:
    p.check(params)
    return _scalar(value_context(params, surface_b, p.t, p.h).j(p.z)[0])


def j_z(params: ModelParams, surface_b: BoundarySurface, p: DualPoint) -> float:
    """z-derivative of J; analytic in z under the integral sign."""
    p.check(params)
    return _scalar(value_context(params, surface_b, p.t, p.h).j(p.z, 1)[1])


def j_zz(params: ModelParams, surface_b: BoundarySurface, p: DualPoint) -> float:
    p.check(params)
    return _scalar(value_context(params, surface_b, p.t, p.h).j(p.z, 2)[2])


# ---- value surface ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ValueSurface:
    """J-hat, J, J_z and J_zz on a (t, z, h) lattice; arrays have shape (nt, nz, nh)."""

    t_grid: np.ndarray
    z_grid: np.ndarray
    h_grid: np.ndarray
    j_hat: np.ndarray
    j: np.ndarray
    j_z: np.ndarray
    j_zz: np.ndarray
    b: np.ndarray          # boundary at (t, h), shape (nt, nh)

    def rows(self):
        for i, t in enumerate(self.t_grid):
            for k, h in enumerate(self.h_grid):
                for j, z in enumerate(self.z_grid):
                    yield (t, z, h, self.j_hat[i, j, k], self.j[i, j, k], self.j_z[i, j, k], self.j_zz[i, j, k])


VALUE_COLUMNS = ("t", "z", "h", "j_hat", "j", "j_z", "j_zz")


def build_value_surface(params: ModelParams, surface_b: BoundarySurface, t_grid, z_grid, h_grid,
                        threads: int | None = 1) -> ValueSurface:
    t_grid = np.asarray(t_grid, float)
    z_grid = np.asarray(z_grid, float)
    h_grid = np.asarray(h_grid, float)
    nt, nz, nh = len(t_grid), len(z_grid), len(h_grid)
    out = {k: np.zeros((nt, nz, nh)) for k in ("jh", "j", "jz", "jzz")}
    bb = np.zeros((nt, nh))

    def cell(ik):
        i, k = ik
        ctx = ValueContext(params, surface_b, float(t_grid[i]), float(h_grid[k]))
        return ik, ctx.b0, ctx.j_hat(z_grid, 2), ctx.w_hat(z_grid, 2)

    jobs = [(i, k) for i in range(nt) for k in range(nh)]
    if threads == 1:
        results = map(cell, jobs)
    else:
        ex = ThreadPoolExecutor(max_workers=threads)
        results = ex.map(cell, jobs)
    for (i, k), b0, jh, wh in results:
        bb[i, k] = b0
        out["jh"][i, :, k] = jh[0]
        out["j"][i, :, k] = jh[0] + wh[0]
        out["jz"][i, :, k] = jh[1] + wh[1]
        out["jzz"][i, :, k] = jh[2] + wh[2]
    if threads != 1:
        ex.shutdown()
    return ValueSurface(t_grid, z_grid, h_grid, out["jh"], out["j"], out["jz"], out["jzz"], bb)


# ---- Monte Carlo oracle ---------------------------------------------------------


@dataclass(frozen=True)
class StoppedPayoffSample:
    """Per-path stopping times and payoffs of one Monte Carlo run (arrays over paths)."""

    path_id: np.ndarray
    tau: np.ndarray
    payoff: np.ndarray
    payoff_z: np.ndarray


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    std_error: float
    n_paths: int
    seed: int


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for a fixed-size block of paths; independent of thread layout."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def brownian_increments(seed: int, n_paths: int, n_steps: int, dt: float) -> np.ndarray:
    """Increments of shape (n_paths, n_steps), drawn in blocks of 1024 paths.

    A run with more paths extends, and never changes, the paths of a smaller run.
    """
    blocks = []
    for blk in range(-(-n_paths // BLOCK)):
        m = min(BLOCK, n_paths - blk * BLOCK)
        blocks.append(block_rng(seed, blk).standard_normal((BLOCK, n_steps))[:m])
    return np.concatenate(blocks, axis=0) * math.sqrt(dt)


def stopped_payoffs(params: ModelParams, surface_b: BoundarySurface, p: DualPoint, n_paths: int,
                    n_steps: int, seed: int, boundary_scale: float = 1.0) -> StoppedPayoffSample:
    """Simulate the dual process exactly on a grid and stop at the first node with Z <= b.

    The payoff is the trapezoid integral, up to the stopping time, of the
    discounted running reward ``I Z - f(I) W_h``; ``payoff_z`` is the
    corresponding integral of the z-derivative representation.
    """
    p.check(params)
    if n_paths < 1 or n_steps < 1:
        raise ValueError("n_paths and n_steps must be positive")
    t, z, h = p.t, p.z, p.h
    tau_max = params.horizon - t
    ids = np.arange(n_paths)
    if tau_max <= 0:
        zero = np.zeros(n_paths)
        return StoppedPayoffSample(ids, zero, zero, zero)
    dt = tau_max / n_steps
    s = np.linspace(0.0, tau_max, n_steps + 1)
    bfn = surface_b.boundary_fn(t, h)
    bs = boundary_scale * np.maximum(bfn(np.minimum(t + s, params.horizon)), 0.0)
    gam = np.maximum(gamma_spline(params, h * math.exp(params.delta * t))(t + s), 0.0)
    th, pp = params.theta, params.p
    int_m = integrated_mortality_pre(params, h, s)
    drift = (params.rho - params.r - 0.5 * th * th) * s + int_m
    disc = np.exp(-(params.rho * s + int_m))
    dB = brownian_increments(seed, n_paths, n_steps, dt)
    B = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dB, axis=1)], axis=1)
    Z = z * np.exp(drift - th * B)
    y = disc * (params.invest_amount * Z - params.f_of_I * Z ** pp * gam)
    yz = np.exp(-params.r * s - th * B - 0.5 * th * th * s) * (params.invest_amount - params.f_of_I * pp * Z ** (pp - 1.0) * gam)
    hit = Z <= bs
    hit[:, -1] = True
    k_stop = np.argmax(hit, axis=1)
    cols = np.arange(n_steps)
    alive = cols[None, :] < k_stop[:, None]
    payoff = 0.5 * dt * np.sum(alive * (y[:, :-1] + y[:, 1:]), axis=1)
    payoff_z = 0.5 * dt * np.sum(alive * (yz[:, :-1] + yz[:, 1:]), axis=1)
    return StoppedPayoffSample(ids, s[k_stop], payoff, payoff_z)


def _summary(x: np.ndarray, n_paths: int, seed: int) -> MCEstimate:
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return MCEstimate(float(np.mean(x)), se, n_paths, seed)


def mc_j_hat(params: ModelParams, surface_b: BoundarySurface, p: DualPoint, n_paths: int = 10_000,
             n_steps: int = 500, seed: int = 0, boundary_scale: float = 1.0) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of J-hat under the grid stopping rule."""
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    smp = stopped_payoffs(params, surface_b, p, n_paths, n_steps, seed, boundary_scale)
    r = _summary(smp.payoff, n_paths, seed)
    return r.estimate, r.std_error


def mc_j_z(params: ModelParams, surface_b: BoundarySurface, p: DualPoint, n_paths: int = 10_000,
           n_steps: int = 500, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of the z-derivative of J-hat from its probabilistic representation."""
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    smp = stopped_payoffs(params, surface_b, p, n_paths, n_steps, seed)
    r = _summary(smp.payoff_z, n_paths, seed)
    return r.estimate, r.std_error


MC_COLUMNS = ("point_id", "estimate", "se", "n_paths", "seed")


def mc_w_value(params: ModelParams, t: float, z: float, h: float, n_paths: int = 100_000,
               n_steps: int = 400, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of the defining expectation of W.

    The post-investment dual process is lognormal at each time, so it is
    sampled exactly on the grid and the time integral uses the trapezoid rule.
    """
    from .closed_forms import u_hat
    from .health import health_post, integrated_mortality_post_gl

    tau = params.horizon - t
    if tau <= 0:
        return 0.0, 0.0
    dt = tau / n_steps
    s = np.linspace(0.0, tau, n_steps + 1)
    th = params.theta
    int_m = integrated_mortality_post_gl(params, np.full_like(s, h), s)
    drift = (params.rho - params.r - 0.5 * th * th) * s + int_m
    disc = np.exp(-(params.rho * s + int_m))
    hs = health_post(params, h, s)
    w = np.full(n_steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    acc = []
    for blk in range(-(-n_paths // BLOCK)):
        m = min(BLOCK, n_paths - blk * BLOCK)
        dB = block_rng(seed, blk).standard_normal((BLOCK, n_steps))[:m] * math.sqrt(dt)
        B = np.concatenate([np.zeros((m, 1)), np.cumsum(dB, axis=1)], axis=1)
        Z = z * np.exp(drift - th * B)
        acc.append((disc * u_hat(params, Z, hs)) @ w)
    x = np.concatenate(acc)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_paths))
