"""Free boundary of the dual stopping problem by recursive integration.

Before investing, health decays deterministically, so the boundary
integral equation posed at ``(t, h)`` only involves boundary values at
``(t + s, h exp(-delta s))``. Each curve is therefore solved along a health
characteristic ``h_j = h_ref exp(-delta t_j)`` on the uniform time grid
``t_j = j T / n``; ``h_ref`` is the health at ``t = 0``.

At a node ``t_i`` the boundary ``b_i`` is the root of a quadrature of

    F(z) = int_0^{T - t_i} [I exp(-r s) z P1(s, z) - f(I) Gamma(s) D(s) z**p P2(s, z)] ds,

where ``P1``, ``P2`` are the probabilities, under the two relevant
measures, that the lognormal dual process started at ``z`` is at or above
the boundary ``s`` years later. Two rules are available:

``"graded"`` (default)
    Gauss-Legendre in ``u = sqrt(s)`` on panels graded toward ``s = 0``,
    the same rule the value function uses. Between nodes the boundary is
    ``q(t) g(t)``, with ``g`` the analytic upper bound and ``q`` a piecewise
    quadratic through the node ratios ``b_j / g_j`` that uses nodes
    ``i, i+1, i+2`` on ``[t_i, t_{i+1}]``. The ratio stays smooth up to the
    horizon, where ``b`` and ``g`` both vanish. The solver and every later
    evaluation use this same path, so node residuals are at round-off.
``"trapezoid"``
    Trapezoid sum on the solver grid itself, ``s_j = t_j - t_i``. Its error
    near ``s = 0`` decays only like ``sqrt(dt)``, so the last few stages
    before the horizon are inaccurate.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .closed_forms import boundary_upper_bound, gamma_fn
from .health import health_pre, integrated_mortality_pre
from .numerics import BracketError, BracketSpec, find_root, gauss_legendre, monotone_interpolator, normal_cdf
from .params import ModelParams, ParameterError

logger = logging.getLogger(__name__)

EPS_LO = 1e-12
QUADRATURES = ("graded", "trapezoid")
QUAD_PANELS = 24
QUAD_ORDER = 12
GAMMA_NODES = 201


class BoundarySolverError(RuntimeError):
    """A stage of the recursion could not bracket its root."""

    def __init__(self, stage: int, lo: float, hi: float, f_lo: float, f_hi: float, h: float | None = None):
        where = f"stage {stage}" + (f" (h={h})" if h is not None else "")
        super().__init__(f"{where}: no sign change on [{lo:.6g}, {hi:.6g}], F(lo)={f_lo:.6g}, F(hi)={f_hi:.6g}")
        self.stage, self.lo, self.hi, self.f_lo, self.f_hi, self.h = stage, lo, hi, f_lo, f_hi, h


class CoverageError(ValueError):
    """A requested point lies outside the health range of a solved surface."""


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Boundary along one health characteristic, indexed by time to maturity.

    ``values[j]`` is the dual boundary at ``t = T - xi_grid[j]`` and health
    ``h_path[j]``; ``values[0] = 0``.
    """

    h_ref: float
    xi_grid: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    horizon: float
    delta: float
    upper_bound: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    quadrature: str = "trapezoid"

    @property
    def n_steps(self) -> int:
        return len(self.xi_grid) - 1

    @property
    def t_grid(self) -> np.ndarray:
        return self.horizon - self.xi_grid

    @property
    def h_path(self) -> np.ndarray:
        return self.h_ref * np.exp(-self.delta * self.t_grid)

    def by_time(self) -> tuple[np.ndarray, np.ndarray]:
        """(t, b) with t increasing."""
        return self.t_grid[::-1].copy(), self.values[::-1].copy()

    @property
    def ratio(self) -> np.ndarray:
        """``values / upper_bound`` (xi order); the horizon takes the next node's ratio."""
        return _node_ratio(self.values, self.upper_bound)

    def interpolator(self, params: ModelParams | None = None):
        """t -> b along the characteristic, as used by the stage equations.

        Graded curves need ``params`` to rebuild the upper bound between nodes.
        """
        t, b = self.by_time()
        if self.quadrature == "graded":
            if params is None:
                raise ValueError("graded curves need params to interpolate")
            return RatioPath(t, self.ratio[::-1], upper_bound_fn(params, self.h_ref))
        return monotone_interpolator(t, b)


@dataclass(frozen=True, eq=False)
class BoundarySurface:
    h_grid: np.ndarray
    curves: tuple[BoundaryCurve, ...]
    solver_meta: dict
    params: ModelParams | None = None

    def __post_init__(self):
        xi0 = self.curves[0].xi_grid
        if any(c.xi_grid.shape != xi0.shape or not np.array_equal(c.xi_grid, xi0) for c in self.curves):
            raise ValueError("all curves must share xi_grid")
        if len({c.quadrature for c in self.curves}) != 1:
            raise ValueError("all curves must share the quadrature rule")
        if self.quadrature == "graded" and self.params is None:
            raise ValueError("graded surfaces need params")

    @property
    def quadrature(self) -> str:
        return self.curves[0].quadrature

    @property
    def horizon(self) -> float:
        return self.curves[0].horizon

    @property
    def delta(self) -> float:
        return self.curves[0].delta

    def curve(self, h_ref: float) -> BoundaryCurve:
        for c in self.curves:
            if math.isclose(c.h_ref, h_ref, rel_tol=1e-9):
                return c
        raise KeyError(h_ref)

    def _across(self, h_ref: float, attr: str) -> np.ndarray:
        """Node array ``attr`` along the characteristic through ``h_ref``.

        Exact for a solved curve; otherwise monotone interpolation in
        ``log h_ref`` node by node.
        """
        try:
            return getattr(self.curve(h_ref), attr)
        except KeyError:
            pass
        hs = np.array([c.h_ref for c in self.curves])
        lo, hi = hs.min(), hs.max()
        if not (lo * (1 - 1e-9) <= h_ref <= hi * (1 + 1e-9)) or len(hs) < 2:
            raise CoverageError(f"h_ref={h_ref:.6g} outside solved range [{lo:.6g}, {hi:.6g}]")
        order = np.argsort(hs)
        vals = np.array([getattr(self.curves[i], attr) for i in order])
        return np.maximum(monotone_interpolator(np.log(hs[order]), vals, extrapolate=True)(math.log(h_ref)), 0.0)

    def characteristic_values(self, h_ref: float) -> np.ndarray:
        """Boundary values (xi order) along the characteristic through ``h_ref`` at t = 0."""
        if self.quadrature == "graded":
            try:
                return self.curve(h_ref).values
            except KeyError:
                tg = self.horizon - self.curves[0].xi_grid
                return self._across(h_ref, "ratio") * upper_bound_fn(self.params, h_ref)(tg)
        out = self._across(h_ref, "values").copy()
        out[0] = 0.0
        return out

    def boundary_fn(self, t: float, h: float):
        """Callable absolute-time -> b along the pre-investment path through (t, h)."""
        h_ref = h * math.exp(self.delta * t)
        tg = (self.horizon - self.curves[0].xi_grid)[::-1]
        if self.quadrature == "graded":
            return RatioPath(tg, self._across(h_ref, "ratio")[::-1], upper_bound_fn(self.params, h_ref))
        return monotone_interpolator(tg, self.characteristic_values(h_ref)[::-1])

    def b(self, t: float, h: float) -> float:
        """Boundary at fixed health; exactly zero at the horizon."""
        if t >= self.horizon:
            return 0.0
        return max(float(self.boundary_fn(t, h)(t)), 0.0)


# ---- kernel -----------------------------------------------------------------


@dataclass(frozen=True)
class _StageData:
    """Coefficients of the stage function at one node, vectorized over s."""

    s: np.ndarray
    a: np.ndarray       # I exp(-r s)
    c: np.ndarray       # f(I) Gamma exp(...) for the power term
    m1: np.ndarray      # log-drift shift of the first probability
    m2: np.ndarray      # log-drift shift of the second probability
    v: np.ndarray       # theta sqrt(s)


def _stage_data(params: ModelParams, s, h, gamma) -> _StageData:
    s = np.asarray(s, float)
    th, p, r, rho = params.theta, params.p, params.r, params.rho
    int_m = integrated_mortality_pre(params, h, s)
    log_disc = -(rho * s + int_m) + p * ((rho - r - 0.5 * th * th) * s + int_m) + 0.5 * p * p * th * th * s
    return _StageData(
        s=s,
        a=params.invest_amount * np.exp(-r * s),
        c=params.f_of_I * np.asarray(gamma, float) * np.exp(log_disc),
        m1=(rho - r + 0.5 * th * th) * s + int_m,
        m2=(rho - r - 0.5 * th * th + p * th * th) * s + int_m,
        v=th * np.sqrt(s),
    )


def _standardize(lr, m, v, s):
    """``(lr + m) / v``; a zero-volatility step (s > 0, v = 0) gives +-inf by sign, s = 0 gives 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(v > 0, (lr + m) / np.where(v > 0, v, 1.0), np.sign(lr + m) * np.inf)
    return np.where(s == 0.0, 0.0, np.nan_to_num(x, nan=0.0, posinf=np.inf, neginf=-np.inf))


def _probabilities(z, b, d: _StageData):
    """P1, P2 with the conventions: s = 0 gives 1/2, b = 0 gives 1."""
    z = np.asarray(z, float)
    b = np.asarray(b, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(z) - np.log(b)
    x1 = np.where(b <= 0.0, np.inf, _standardize(lr, d.m1, d.v, d.s))
    x2 = np.where(b <= 0.0, np.inf, _standardize(lr, d.m2, d.v, d.s))
    return normal_cdf(x1), normal_cdf(x2)


def _kernel(z, b, d: _StageData, p: float):
    p1, p2 = _probabilities(z, b, d)
    return d.a * z * p1 - d.c * np.asarray(z, float) ** p * p2


def kernel_G(params: ModelParams, xi: float, s: float, b_xi: float, b_xi_minus_s: float, h: float,
             gamma: float | None = None) -> float:
    """Integrand of the boundary equation at time to maturity ``xi``.

    Parameters
    ----------
    xi, s : float
        Time to maturity of the node and elapsed time, ``0 <= s <= xi``.
    b_xi : float
        Candidate boundary at the node (the starting dual value).
    b_xi_minus_s : float
        Boundary ``s`` years later; zero at the horizon.
    h : float
        Health at the node.
    gamma : float, optional
        Gamma at ``(T - xi + s, h exp(-delta s))``; computed if omitted.
    """
    if not b_xi > 0:
        raise ValueError("b_xi must be positive")
    if not 0.0 <= s <= xi + 1e-12:
        raise ValueError("require 0 <= s <= xi")
    if gamma is None:
        gamma = gamma_fn(params, params.horizon - xi + s, health_pre(params, h, s))
    d = _stage_data(params, np.array([s]), h, np.array([gamma]))
    return float(_kernel(b_xi, np.array([b_xi_minus_s]), d, params.p)[0])


def _trap_weights(m: int, dt: float) -> np.ndarray:
    w = np.full(m, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def stage_function(params: ModelParams, t_nodes, b_nodes, h, gamma_nodes):
    """Return ``F(z)`` for the node ``t_nodes[0]`` given later boundary values.

    ``t_nodes`` is a uniform grid from the node to the horizon; ``b_nodes[0]``
    is ignored (the candidate ``z`` takes its place).
    """
    t_nodes = np.asarray(t_nodes, float)
    s = t_nodes - t_nodes[0]
    d = _stage_data(params, s, h, gamma_nodes)
    w = _trap_weights(len(s), s[1] - s[0]) if len(s) > 1 else np.zeros(1)
    b = np.array(b_nodes, float)

    def F(z: float) -> float:
        b[0] = z
        return float(np.dot(w, _kernel(z, b, d, params.p)))

    return F


@lru_cache(maxsize=64)
def gamma_spline(params: ModelParams, h_ref: float) -> CubicSpline:
    """Gamma along the characteristic through ``h_ref``, as a spline in t."""
    t = np.linspace(0.0, params.horizon, GAMMA_NODES)
    return CubicSpline(t, _gamma_along(params, h_ref, t))


def upper_bound_fn(params: ModelParams, h_ref: float):
    """Callable t -> g(t) along the characteristic through ``h_ref``."""
    spline = gamma_spline(params, float(h_ref))

    def g(t):
        return boundary_upper_bound(params, t, None, gamma=np.maximum(spline(t), 0.0))

    return g


def graded_nodes(u_max: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on ``[0, u_max]`` with panels graded geometrically toward 0.

    Just above the boundary the z-derivatives have a layer of width
    ``log(z / b)**2`` in s; geometric grading resolves it at every scale.
    """
    geo = np.geomspace(1e-6 * u_max, u_max, panels)
    edges = np.unique(np.concatenate([[0.0], geo, np.linspace(0.0, u_max, 9)]))
    x, w = gauss_legendre(edges[:-1], edges[1:], order)
    return x.ravel(), w.ravel()


def graded_rule(tau: float, panels: int = QUAD_PANELS, order: int = QUAD_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``s`` and weights of the graded rule for integrals over ``[0, tau]`` in s."""
    u, wu = graded_nodes(math.sqrt(tau), panels, order)
    return u * u, 2.0 * u * wu


def _node_ratio(values, bound) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(bound > 0, values / np.where(bound > 0, bound, 1.0), 0.0)
    q[0] = q[1]
    return q


def forward_quadratic(t, y, x) -> np.ndarray:
    """Piecewise quadratic through ``y``; on ``[t_i, t_i+1]`` it uses nodes i, i+1, i+2.

    Each piece only looks forward in t, so a boundary solved backward node by
    node is interpolated during the solve exactly as afterwards. The last
    interval is linear. Continuous, with slope jumps at the nodes.
    """
    t, y = np.asarray(t, float), np.asarray(y, float)
    x = np.asarray(x, float)
    n = len(t) - 1
    i = np.clip(np.searchsorted(t, x, side="right") - 1, 0, n - 1)
    t0, t1, y0, y1 = t[i], t[i + 1], y[i], y[i + 1]
    lin = y0 + (y1 - y0) * (x - t0) / (t1 - t0)
    j = np.minimum(i + 2, n)
    t2, y2 = t[j], y[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        quad_ = (y0 * (x - t1) * (x - t2) / ((t0 - t1) * (t0 - t2))
                 + y1 * (x - t0) * (x - t2) / ((t1 - t0) * (t1 - t2))
                 + y2 * (x - t0) * (x - t1) / ((t2 - t0) * (t2 - t1)))
    return np.where(j > i + 1, quad_, lin)


class RatioPath:
    """Boundary ``q(t) g(t)`` with ``q`` the forward quadratic through node ratios."""

    def __init__(self, t, ratio, g):
        self.t = np.asarray(t, float)
        self.ratio = np.asarray(ratio, float)
        self.g = g

    def __call__(self, t):
        return forward_quadratic(self.t, self.ratio, t) * self.g(t)


def _graded_stage(params: ModelParams, t, q, i: int, h, gfn, panels: int = QUAD_PANELS,
                  order: int = QUAD_ORDER, bfn=None):
    """``F(z)`` at node ``t[i]`` under the graded rule.

    ``q[i+1:]`` holds the known ratios. Only the first interval depends on
    the candidate. ``bfn`` replaces the interpolant by a fixed path (for
    residuals).
    """
    n = len(t) - 1
    s, w = graded_rule(t[n] - t[i], panels, order)
    ts = np.minimum(t[i] + s, t[n])
    gam = np.maximum(gamma_spline(params, float(h * math.exp(params.delta * t[i])))(ts), 0.0)
    d = _stage_data(params, s, h, gam)
    if bfn is not None:
        bs = np.maximum(bfn(ts), 0.0)
        return lambda z: float(w @ _kernel(z, bs, d, params.p))
    g_s = gfn(ts)
    g_i = float(gfn(t[i]))
    near = ts < t[i + 1]
    bs = np.zeros_like(ts)
    if i + 1 < n:
        bs[~near] = forward_quadratic(t[i + 1:], q[i + 1:], ts[~near]) * g_s[~near]
    x, gn = ts[near], g_s[near]
    if i + 2 <= n:
        t0, t1, t2, q1, q2 = t[i], t[i + 1], t[i + 2], q[i + 1], q[i + 2]
        l0 = (x - t1) * (x - t2) / ((t0 - t1) * (t0 - t2))
        rest = q1 * (x - t0) * (x - t2) / ((t1 - t0) * (t1 - t2)) + q2 * (x - t0) * (x - t1) / ((t2 - t0) * (t2 - t1))
    last = i + 1 == n

    def F(z: float) -> float:
        q0 = z / g_i
        if last:
            bs[near] = q0 * gn       # the horizon carries the last ratio
        else:
            bs[near] = (q0 * l0 + rest) * gn
        return float(w @ _kernel(z, bs, d, params.p))

    return F


# ---- solver -----------------------------------------------------------------


def _gamma_along(params: ModelParams, h_ref: float, t) -> np.ndarray:
    t = np.asarray(t, float)
    g = gamma_fn(params, t, health_pre(params, h_ref, t))
    g = np.atleast_1d(np.asarray(g, float)).copy()
    g[t >= params.horizon] = 0.0
    return g


def solve_curve(params: ModelParams, h: float, n_steps: int, refine: int = 4,
                tol: float = 1e-10, quadrature: str = "graded") -> BoundaryCurve:
    """Solve the boundary along the characteristic with health ``h`` at t = 0.

    Stages run backward from the horizon. Stage ``k`` brackets its root in
    ``[1e-12, g(t, h)]``, extending the upper end once by a factor two if the
    stage function is still negative there, and bisects to ``tol``.

    ``refine`` sets the refinement factor of the residual re-evaluation stored
    in ``residuals`` (mesh factor for the trapezoid rule, panel factor for the
    graded rule); ``refine=0`` skips it.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    if not h > 0:
        raise ValueError("h must be positive")
    if quadrature not in QUADRATURES:
        raise ValueError(f"quadrature must be one of {QUADRATURES}")
    if params.theta == 0.0:
        # the dual process is deterministic and every stage function is a step in z
        raise ParameterError("the boundary equation needs a nonzero market price of risk (mu != r)")
    T = params.horizon
    t = np.linspace(0.0, T, n_steps + 1)
    hp = health_pre(params, h, t)
    graded = quadrature == "graded"
    if graded:
        gfn = upper_bound_fn(params, h)
        bound = gfn(t)
        gam = np.maximum(gamma_spline(params, float(h))(t), 0.0)
    else:
        gam = _gamma_along(params, h, t)
        bound = boundary_upper_bound(params, t, hp, gamma=gam)
    b = np.zeros(n_steps + 1)
    q = np.zeros(n_steps + 1)
    for i in range(n_steps - 1, -1, -1):
        k = n_steps - i
        if graded:
            F = _graded_stage(params, t, q, i, hp[i], gfn)
        else:
            F = stage_function(params, t[i:], b[i:], hp[i], gam[i:])
        lo, hi = EPS_LO, float(bound[i])
        f_lo, f_hi = F(lo), F(hi)
        if f_hi < 0:
            hi *= 2.0
            f_hi = F(hi)
            logger.debug("stage %d: bracket extended to %.6g", k, hi)
        if f_lo > 0 or f_hi < 0:
            raise BoundarySolverError(k, lo, hi, f_lo, f_hi, h)
        try:
            b[i] = find_root(F, BracketSpec(lo, hi, tol=tol))
        except BracketError as exc:  # pragma: no cover - guarded above
            raise BoundarySolverError(k, lo, hi, exc.f_lo, exc.f_hi, h) from exc
        q[i] = b[i] / bound[i] if bound[i] > 0 else 0.0
        if i == n_steps - 1:
            q[n_steps] = q[i]
    xi = T - t[::-1]
    values = b[::-1].copy()
    curve = BoundaryCurve(h_ref=float(h), xi_grid=xi, values=values, residuals=np.zeros_like(values),
                          horizon=T, delta=params.delta, upper_bound=bound[::-1].copy(), gamma=gam[::-1].copy(),
                          quadrature=quadrature)
    if refine:
        res = all_residuals(params, curve, refine)
        curve = BoundaryCurve(curve.h_ref, xi, values, res, T, params.delta, curve.upper_bound, curve.gamma,
                              quadrature)
    return curve


def _fine_grid(params: ModelParams, curve: BoundaryCurve, refine: int):
    n = curve.n_steps * refine
    tf = np.linspace(0.0, params.horizon, n + 1)
    bf = curve.interpolator()(tf)
    bf[-1] = 0.0
    # the stored nodes are kept exactly, only new points are interpolated
    bf[::refine] = curve.values[::-1]
    gf = _gamma_along(params, curve.h_ref, tf)
    return tf, np.maximum(bf, 0.0), gf


def residual(params: ModelParams, curve: BoundaryCurve, k: int, refine: int = 4, z: float | None = None,
             _fine=None) -> float:
    """Signed stage-``k`` residual under a ``refine``-times finer rule.

    ``k`` counts from the horizon (``xi_grid[k]``). Trapezoid curves are
    re-evaluated on a mesh ``refine`` times finer with the boundary
    interpolated by a monotone cubic; graded curves with ``refine`` times as
    many panels and the full-curve interpolant. ``z`` overrides the node value.
    """
    if not 1 <= k <= curve.n_steps:
        raise ValueError("k must lie in [1, n]")
    if refine < 1:
        raise ValueError("refine must be at least 1")
    if curve.quadrature == "graded":
        bfn = _fine if _fine is not None else curve.interpolator(params)
        t = curve.t_grid[::-1]
        i = curve.n_steps - k
        F = _graded_stage(params, t, None, i, curve.h_path[k], None, QUAD_PANELS * refine, QUAD_ORDER, bfn=bfn)
        return F(float(curve.values[k]) if z is None else float(z))
    tf, bf, gf = _fine if _fine is not None else _fine_grid(params, curve, refine)
    i = (curve.n_steps - k) * refine
    h_node = curve.h_ref * math.exp(-params.delta * tf[i])
    F = stage_function(params, tf[i:], bf[i:], h_node, gf[i:])
    return F(float(curve.values[k]) if z is None else float(z))


def all_residuals(params: ModelParams, curve: BoundaryCurve, refine: int = 4) -> np.ndarray:
    fine = curve.interpolator(params) if curve.quadrature == "graded" else _fine_grid(params, curve, refine)
    out = np.zeros(curve.n_steps + 1)
    for k in range(1, curve.n_steps + 1):
        out[k] = residual(params, curve, k, refine, _fine=fine)
    return out


def residual_tolerance(params: ModelParams, b) -> np.ndarray:
    """Residual tolerance ``1e-4 * I * b / r`` used by the validity checks."""
    return 1e-4 * params.invest_amount * np.asarray(b, float) / params.r


def covering_h_grid(params: ModelParams, hs, per_value: int = 4) -> np.ndarray:
    """Initial healths whose characteristics cover ``[h, h exp(delta T)]`` for each h.

    A surface solved on this grid can evaluate b(t, h) at fixed h for every t.
    """
    steps = np.exp(params.delta * params.horizon * np.linspace(0.0, 1.0, per_value + 1))
    grid = np.unique(np.concatenate([float(h) * steps for h in np.atleast_1d(hs)]))
    keep = np.concatenate([[True], np.diff(np.log(grid)) > 1e-9])
    return grid[keep]


def solve_surface(params: ModelParams, h_grid, n_steps: int, refine: int = 4, threads: int | None = 1,
                  tol: float = 1e-10, quadrature: str = "graded") -> BoundarySurface:
    """One independent curve per health value in ``h_grid``.

    ``threads`` caps the worker count (``None`` means all cores). Results do
    not depend on the thread count.
    """
    h_grid = np.asarray(h_grid, float)
    if h_grid.ndim != 1 or h_grid.size == 0:
        raise ValueError("h_grid must be a nonempty 1-D array")
    if np.any(h_grid <= 0) or np.any(np.diff(h_grid) <= 0):
        raise ValueError("h_grid must be positive and strictly increasing")
    start = time.perf_counter()

    def one(h):
        try:
            return solve_curve(params, float(h), n_steps, refine=refine, tol=tol, quadrature=quadrature)
        except BoundarySolverError as exc:
            exc.h = float(h)
            raise

    if threads == 1 or h_grid.size == 1:
        curves = [one(h) for h in h_grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            curves = list(ex.map(one, h_grid))
    meta = {"n_steps": n_steps, "refine": refine, "bisection_tol": tol, "eps_lo": EPS_LO,
            "quadrature": quadrature, "wall_time": time.perf_counter() - start}
    return BoundarySurface(h_grid=h_grid, curves=tuple(curves), solver_meta=meta, params=params)


BOUNDARY_COLUMNS = ("h", "t", "xi", "b_dual", "residual", "h_path")


def boundary_rows(surface: BoundarySurface):
    """Rows in h-major, xi-minor order."""
    for c in surface.curves:
        for xi, t, b, res, hp in zip(c.xi_grid, c.t_grid, c.values, c.residuals, c.h_path):
            yield (c.h_ref, t, xi, b, res, hp)
