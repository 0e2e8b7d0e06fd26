"""Monte Carlo paths of wealth, dual state and health under feedback policies.

The dual process is sampled exactly (lognormal); wealth follows an
Euler scheme with a Milstein correction, driven by the same Brownian
increments. Before the
investment the feedback maps come from per-time-node tables of
``x -> (z*, pi*)``; afterwards the closed-form post-investment policy applies.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import PchipInterpolator, RectBivariateSpline

from .boundary import BoundarySurface
from .closed_forms import post_integrals
from .health import health_post, health_pre, integrated_mortality_pre, mortality
from .params import ModelParams, g_value
from .primal import PrimalPoint, inverse_marginal_utility, policy_table, primal_boundary, utility, z_star
from .value import BLOCK, block_rng, value_context

logger = logging.getLogger(__name__)


class PolicyKind(Enum):
    OPTIMAL_BOUNDARY = "optimal"
    INVEST_IMMEDIATELY = "immediate"
    NEVER_INVEST = "never"
    FIXED_THRESHOLD = "threshold"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``threshold_scale`` is used by ``FIXED_THRESHOLD``: invest once wealth
    reaches that multiple of the optimal wealth boundary. With
    ``initial_dual`` set, the initial wealth is ``-J_z(t0, initial_dual, h0)``
    and ``initial_wealth`` is ignored. ``consumption="zero"`` switches off
    both consumption and risky investment.
    """

    n_paths: int = 1000
    n_steps: int = 500
    seed: int = 0
    initial_wealth: float = 100.0
    initial_health: float = 1000.0
    policy: PolicyKind = PolicyKind.OPTIMAL_BOUNDARY
    threshold_scale: float = 2.0
    t0: float = 0.0
    initial_dual: float | None = None
    consumption: str = "optimal"
    exact_policy: bool = False
    record_paths: int = 1000
    record_every: int | None = None
    threads: int | None = 1
    table_size: int = 200
    substeps: int = 1
    scheme: str = "milstein"

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if self.scheme not in ("euler", "milstein"):
            raise ValueError("scheme must be 'euler' or 'milstein'")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        if self.consumption not in ("optimal", "zero"):
            raise ValueError("consumption must be 'optimal' or 'zero'")
        if not self.initial_health > 0:
            raise ValueError("initial_health must be positive")


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated paths. Series have shape (recorded paths, recorded times)."""

    times: np.ndarray
    brownian: np.ndarray
    health: np.ndarray
    mortality: np.ndarray
    wealth: np.ndarray
    dual: np.ndarray
    consumption: np.ndarray
    allocation: np.ndarray
    invest_time: np.ndarray          # NaN when the path never invests
    terminal_wealth: np.ndarray
    discounted_utility: np.ndarray   # per-path trapezoid of the welfare integrand
    absorbed: np.ndarray             # path hit the admissibility floor
    identity_gap: np.ndarray         # max |X + J_z(s, Z, H)| before investing (NaN if not tracked)
    config: SimConfig = field(repr=False)

    @property
    def n_paths(self) -> int:
        return len(self.terminal_wealth)


# ---- deterministic health -------------------------------------------------------


@dataclass(frozen=True)
class HealthSeries:
    times: np.ndarray
    health: np.ndarray
    mortality: np.ndarray


def simulate_health_mortality(params: ModelParams, h0: float, invest_time: float, n_steps: int = 1000) -> HealthSeries:
    """Health and mortality on ``[0, T]`` when investing at ``invest_time``."""
    if not 0.0 <= invest_time <= params.horizon:
        raise ValueError("invest_time must lie in [0, T]")
    t = np.linspace(0.0, params.horizon, n_steps + 1)
    h_tau = health_pre(params, h0, invest_time)
    h = np.where(t < invest_time, health_pre(params, h0, t),
                 health_post(params, h_tau, np.maximum(t - invest_time, 0.0)))
    if invest_time >= params.horizon:
        h = health_pre(params, h0, t)
    return HealthSeries(t, np.asarray(h, float), np.asarray(mortality(params, h), float))


# ---- policy tables --------------------------------------------------------------


class _PreTables:
    """Per-node feedback tables along the deterministic pre-investment health path.

    Log z and pi are monotone cubics in log wealth; outside the table the end
    values are held.
    """

    def __init__(self, params, surface, t, h, size):
        self.lo, self.hi, self.lz, self.pi = [], [], [], []
        for tk, hk in zip(t, h):
            x, z, _, pi = policy_table(params, surface, float(tk), float(hk), n_z=size)
            lx = np.log(x)
            self.lo.append(lx[0])
            self.hi.append(lx[-1])
            self.lz.append(PchipInterpolator(lx, np.log(z)))
            self.pi.append(PchipInterpolator(lx, pi))

    def _lx(self, k, x):
        return np.clip(np.log(np.maximum(x, 1e-300)), self.lo[k], self.hi[k])

    def lookup(self, k, x):
        lx = self._lx(k, x)
        return np.exp(self.lz[k](lx)), self.pi[k](lx)

    def slope(self, k, x):
        """d pi / d x."""
        return self.pi[k](self._lx(k, x), 1) / np.maximum(x, 1e-300)


def table_wealth_error(params: ModelParams, surface_b: BoundarySurface, t: float, h: float,
                       size: int = 200) -> float:
    """Largest wealth error of the interpolated x -> z* map between table nodes.

    At each midpoint (in log wealth) the interpolated z is mapped back to
    wealth with the exact ``-J_z``; the gap is the lookup error in wealth units.
    """
    tab = _PreTables(params, surface_b, [t], [h], size)
    lx = np.linspace(tab.lo[0], tab.hi[0], 2 * size + 1)[1::2]
    x = np.exp(lx)
    z, _ = tab.lookup(0, x)
    back = -value_context(params, surface_b, t, h).j(z, 1)[1]
    return float(np.max(np.abs(back - x)))


class _KTable:
    """K(T - t, h) on a (t, log h) grid for the post-investment consumption rule."""

    def __init__(self, params: ModelParams, t0: float, h_lo: float, h_hi: float, nt: int = 81, nh: int = 25):
        self.T = params.horizon
        self.t = np.linspace(t0, params.horizon, nt)
        self.lh = np.linspace(math.log(h_lo), math.log(h_hi), nh)
        tt, hh = np.meshgrid(self.t, np.exp(self.lh), indexing="ij")
        k = post_integrals(params, tt, hh).k
        self.spline = RectBivariateSpline(self.t, self.lh, k, kx=3, ky=3)

    def __call__(self, t, h):
        return np.maximum(self.spline.ev(np.full_like(h, t), np.log(h)), 0.0)


# ---- closed loop ----------------------------------------------------------------


def _should_invest(cfg: SimConfig, k: int, x, b_hat_k):
    if cfg.policy is PolicyKind.OPTIMAL_BOUNDARY:
        return x >= b_hat_k
    if cfg.policy is PolicyKind.FIXED_THRESHOLD:
        return x >= cfg.threshold_scale * b_hat_k
    if cfg.policy is PolicyKind.INVEST_IMMEDIATELY:
        return np.full(x.shape, k == 0)
    return np.zeros(x.shape, bool)


def _simulate_block(params, surface, cfg, ctxs, blk, m, t, z0, x0, track_identity):
    n = cfg.n_steps
    dt = t[1] - t[0]
    th, sig = params.theta, params.sigma
    q = cfg.substeps
    dB = block_rng(cfg.seed, blk).standard_normal((BLOCK, n * q))[:m] * math.sqrt(dt / q)
    if q > 1:
        dB = dB.reshape(m, n, q).sum(axis=2)
    h1 = ctxs["h1"]
    int_m = ctxs["int_m"]
    X = np.full(m, x0)
    logZ = np.full(m, math.log(z0))
    B = np.zeros(m)
    invested = np.zeros(m, bool)
    absorbed = np.zeros(m, bool)
    tau = np.full(m, np.nan)
    h_inv = np.zeros(m)
    gap = np.full(m, np.nan if not track_identity else 0.0)
    util = np.zeros(m)
    cum_m = np.zeros(m)
    rec = {k: np.zeros((m, n + 1)) for k in ("B", "H", "M", "X", "Z", "c", "pi")}
    prev_integrand = None
    zero = cfg.consumption == "zero"
    for k in range(n + 1):
        tk = t[k]
        # trigger at the current node
        if k < n:
            go = ~invested & ~absorbed & _should_invest(cfg, k, X, ctxs["b_hat"][k])
            if np.any(go):
                invested |= go
                tau[go] = tk
                h_inv[go] = h1[k]
        H = np.where(invested, health_post(params, h_inv, np.nan_to_num(tk - tau)), h1[k])
        M = mortality(params, H)
        Z = np.exp(logZ)
        if track_identity and k < n:
            pre = ~invested & ~absorbed
            if np.any(pre):
                xz = -value_context(params, surface, float(tk), float(h1[k])).j(Z[pre], 1)[1]
                gap[pre] = np.maximum(gap[pre], np.abs(X[pre] - xz))
        # feedback maps
        c = np.zeros(m)
        pi = np.zeros(m)
        if not zero:
            live = ~absorbed
            pre = live & ~invested
            post = live & invested
            kk = min(k, n - 1)
            if np.any(pre):
                if cfg.exact_policy:
                    zs = np.array([z_star(params, surface, PrimalPoint(float(t[kk]), float(x), float(h1[kk])))
                                   for x in X[pre]])
                    pis = th / sig * zs * value_context(params, surface, float(t[kk]), float(h1[kk])).j(zs, 2)[2]
                else:
                    zs, pis = ctxs["tables"].lookup(kk, X[pre])
                c[pre] = inverse_marginal_utility(params, zs, H[pre])
                pi[pre] = pis
            if np.any(post):
                surplus = X[post] - g_value(params, tk)
                if k < n:
                    kv = ctxs["ktable"](tk, H[post])
                    c[post] = np.where(kv > 0, H[post] * surplus / np.maximum(kv, 1e-300), 0.0)
                else:
                    c[post] = rec["c"][post, k - 1]
                pi[post] = th * surplus / (sig * (1.0 - params.alpha))
        if k == n and not zero:
            # consumption at the horizon is the left limit
            c = np.where(absorbed, 0.0, rec["c"][:, k - 1])
        # welfare integrand with mortality discount (trapezoid in time)
        if k > 0:
            cum_m = cum_m + 0.5 * dt * (rec["M"][:, k - 1] + M)
        integrand = np.exp(-(params.rho * (tk - t[0]) + cum_m)) * utility(params, c, H)
        if prev_integrand is not None:
            util += 0.5 * dt * (prev_integrand + integrand)
        prev_integrand = integrand
        for key, val in (("B", B), ("H", H), ("M", M), ("X", X), ("Z", Z), ("c", c), ("pi", pi)):
            rec[key][:, k] = val
        if k == n:
            break
        # step
        drift = params.r * X + pi * (params.mu - params.r) - c - params.invest_amount * invested
        X_new = X + drift * dt + pi * sig * dB[:, k]
        if cfg.scheme == "milstein" and not zero:
            # 0.5 b b' (dB^2 - dt) with b = sigma pi(x)
            slope = np.zeros(m)
            pre = ~invested & ~absorbed
            if np.any(pre) and ctxs["tables"] is not None:
                slope[pre] = ctxs["tables"].slope(k, X[pre])
            post = invested & ~absorbed
            slope[post] = th / (sig * (1.0 - params.alpha))
            X_new = X_new + 0.5 * sig * sig * pi * slope * (dB[:, k] ** 2 - dt)
        X = np.where(absorbed, X, X_new)
        logZ = logZ + (params.rho - params.r - 0.5 * th * th) * dt + (int_m[k + 1] - int_m[k]) - th * dB[:, k]
        B = B + dB[:, k]
        floor = np.where(invested, g_value(params, t[k + 1]), 0.0)
        hit = ~absorbed & (X <= floor) & (t[k + 1] < params.horizon)
        if np.any(hit):
            absorbed |= hit
            X = np.where(hit, floor, X)
    return rec, tau, X, util, absorbed, gap


def simulate_closed_loop(params: ModelParams, surface_b: BoundarySurface, cfg: SimConfig,
                         track_identity: bool = False) -> PathBundle:
    """Simulate ``cfg.n_paths`` paths from ``(cfg.t0, x0, cfg.initial_health)``.

    Paths are generated in blocks of 1024 with block-seeded generators, so the
    result is identical for any thread count. With ``track_identity`` the
    largest pre-investment gap ``|X_s + J_z(s, Z_s, H_s)|`` is recorded per path.
    """
    T = params.horizon
    if not 0.0 <= cfg.t0 < T:
        raise ValueError("t0 must lie in [0, T)")
    n = cfg.n_steps
    t = np.linspace(cfg.t0, T, n + 1)
    h0 = cfg.initial_health
    h1 = health_pre(params, h0, t - cfg.t0)
    int_m = integrated_mortality_pre(params, h0, t - cfg.t0)
    if cfg.initial_dual is not None:
        z0 = float(cfg.initial_dual)
        x0 = float(-value_context(params, surface_b, cfg.t0, h0).j(z0, 1)[1][0])
    else:
        x0 = float(cfg.initial_wealth)
        z0 = z_star(params, surface_b, PrimalPoint(cfg.t0, x0, h0))
    needs_pre = cfg.policy is not PolicyKind.INVEST_IMMEDIATELY or track_identity
    ctxs = {
        "h1": h1,
        "int_m": int_m,
        "b_hat": np.array([primal_boundary(params, surface_b, float(tk), float(hk)) for tk, hk in zip(t[:-1], h1[:-1])]),
        "tables": _PreTables(params, surface_b, t[:-1], h1[:-1], cfg.table_size) if needs_pre and not cfg.exact_policy else None,
    }
    h_floor = min(float(h1[-1]), params.f_of_I / params.delta)
    h_ceil = max(h0, params.f_of_I / params.delta)
    ctxs["ktable"] = _KTable(params, cfg.t0, 0.98 * h_floor, 1.02 * h_ceil)
    n_blocks = -(-cfg.n_paths // BLOCK)
    sizes = [min(BLOCK, cfg.n_paths - b * BLOCK) for b in range(n_blocks)]

    def run(b):
        return _simulate_block(params, surface_b, cfg, ctxs, b, sizes[b], t, z0, x0, track_identity)

    if cfg.threads == 1 or n_blocks == 1:
        parts = [run(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            parts = list(ex.map(run, range(n_blocks)))
    every = cfg.record_every or max(1, -(-n // 1000))
    cols = np.arange(0, n + 1, every)
    if cols[-1] != n:
        cols = np.append(cols, n)
    keep = min(cfg.n_paths, cfg.record_paths)

    def series(key):
        return np.concatenate([p[0][key] for p in parts], axis=0)[:keep][:, cols]

    cat = lambda i: np.concatenate([p[i] for p in parts])  # noqa: E731
    absorbed = cat(4)
    if absorbed.any():
        logger.info("%d of %d paths absorbed at the admissibility floor", int(absorbed.sum()), cfg.n_paths)
    return PathBundle(
        times=t[cols], brownian=series("B"), health=series("H"), mortality=series("M"), wealth=series("X"),
        dual=series("Z"), consumption=series("c"), allocation=series("pi"), invest_time=cat(1),
        terminal_wealth=cat(2), discounted_utility=cat(3), absorbed=absorbed, identity_gap=cat(5), config=cfg,
    )


def welfare_estimate(params: ModelParams, bundle: PathBundle) -> tuple[float, float]:
    """Mean and standard error of the discounted utility over paths."""
    x = bundle.discounted_utility
    if np.all(x == 0):
        return 0.0, 0.0
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(np.mean(x)), se


SUMMARY_COLUMNS = ("path_id", "invest_time", "terminal_wealth", "welfare")
TRAJECTORY_COLUMNS = ("path_id", "t", "wealth", "dual", "health", "mortality", "consumption", "allocation")


def summary_rows(bundle: PathBundle):
    for i in range(bundle.n_paths):
        yield (i, bundle.invest_time[i], bundle.terminal_wealth[i], bundle.discounted_utility[i])


def trajectory_rows(bundle: PathBundle):
    for i in range(bundle.wealth.shape[0]):
        for j, t in enumerate(bundle.times):
            yield (i, t, bundle.wealth[i, j], bundle.dual[i, j], bundle.health[i, j], bundle.mortality[i, j],
                   bundle.consumption[i, j], bundle.allocation[i, j])
