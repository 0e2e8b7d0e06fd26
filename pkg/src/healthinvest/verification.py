"""Numerical checks shared by ``healthinvest verify`` and the acceptance tests.

Every check returns :class:`CheckResult` records carrying the measured
quantity next to the tolerance it is judged against. Two size profiles are
provided: ``FULL`` for acceptance runs and ``COARSE`` for quick smoke runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .boundary import (
    BoundarySurface, all_residuals, boundary_upper_bound, covering_h_grid, residual_tolerance, solve_curve,
    solve_surface,
)
from .closed_forms import DualPoint, W_partials, W_value, pde_residual_terms, w_bundle
from .params import ModelParams
from .primal import PrimalPoint, policy, primal_boundary, value_primal, z_star
from .simulate import SimConfig, simulate_closed_loop, table_wealth_error
from .value import ValueContext, mc_j_hat, mc_w_value


@dataclass
class CheckResult:
    name: str
    criterion: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.criterion:>4} {self.name}: measured={self.measured:.6g} "
                f"tolerance={self.tolerance:.6g} {self.detail}").rstrip()


REPORT_COLUMNS = ("criterion", "name", "passed", "measured", "tolerance", "seconds", "detail")


@dataclass(frozen=True)
class Profile:
    name: str
    n_boundary: int = 200
    n_convergence: tuple[int, int, int] = (100, 200, 400)
    n_sweep: int = 100
    w_mc_paths: int = 100_000
    w_mc_steps: int = 400
    stop_paths: int = 10_000
    stop_steps: int = 500
    sim_paths: int = 100
    sim_steps: int = 1000
    lattice: tuple[int, int] = (10, 20)
    seed: int = 20240601


FULL = Profile("full")
COARSE = Profile("coarse", n_boundary=50, n_convergence=(50, 100, 200), n_sweep=50, w_mc_paths=20_000,
                 w_mc_steps=200, stop_paths=2000, stop_steps=250, sim_paths=50, sim_steps=400, lattice=(5, 10))
PROFILES = {"full": FULL, "coarse": COARSE}

HS = (2.0, 1000.0)
SWEEPS = {
    "delta": (0.0055, 0.011, 0.022),
    "alpha": (0.2, 0.2258, 0.25),
    "rho": (0.03, 0.05, 0.07),
}
# expected sign of d b_hat / d parameter, per health level
EXPECTED_DIRECTION = {
    ("delta", 1000.0): -1, ("delta", 2.0): +1,
    ("alpha", 1000.0): +1, ("alpha", 2.0): +1,
    ("rho", 1000.0): +1, ("rho", 2.0): -1,
}


@dataclass
class Bench:
    """Caches boundary surfaces so that checks can share solves."""

    params: ModelParams = field(default_factory=ModelParams)
    profile: Profile = FULL
    threads: int | None = 1
    _cache: dict = field(default_factory=dict, repr=False)

    def surface(self, hs, n: int | None = None, params: ModelParams | None = None, cover: bool = True,
                refine: int = 0) -> BoundarySurface:
        p = params or self.params
        n = n or self.profile.n_boundary
        grid = covering_h_grid(p, hs) if cover else np.asarray(sorted(hs), float)
        key = (p, tuple(np.round(grid, 12)), n, refine)
        if key not in self._cache:
            self._cache[key] = solve_surface(p, grid, n, refine=refine, threads=self.threads)
        return self._cache[key]


def _timed(fn: Callable[..., list[CheckResult]]):
    def wrapper(*a, **k):
        t0 = time.perf_counter()
        out = fn(*a, **k)
        dt = (time.perf_counter() - t0) / max(len(out), 1)
        for r in out:
            r.seconds = dt
        return out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---- closed forms ---------------------------------------------------------------


@_timed
def check_w_vs_mc(bench: Bench) -> list[CheckResult]:
    """W against an exact-lognormal Monte Carlo of its defining expectation."""
    p, prof = bench.params, bench.profile
    worst, where = 0.0, ""
    for z in (0.5, 1.0, 2.0):
        for h in HS:
            est, se = mc_w_value(p, 0.0, z, h, prof.w_mc_paths, prof.w_mc_steps, prof.seed)
            dev = abs(W_value(p, 0.0, z, h) - est) / se
            if dev > worst:
                worst, where = dev, f"z={z} h={h}"
    return [CheckResult("w_vs_mc", "1", worst <= 3.0, worst, 3.0, f"max |W-MC|/SE at {where}")]


FD_T = (0.0, 10.0, 19.0)
FD_Z = (0.5, 1.0, 2.0)
FD_H = (2.0, 100.0, 1000.0)


def fd_derivative_errors(params: ModelParams, t: float, z: float, h: float) -> dict[str, float]:
    """Relative errors of the analytic partials against centered differences.

    First partials difference W and mixed partials difference the analytic
    W_h, with step ``1e-5 (1 + |coordinate|)``. W_hh uses ``1e-3 (1 + |h|)``:
    for healthy agents W_hh / W_h is of order 1e-11, and the smaller step
    leaves the difference dominated by rounding.
    """
    def w(tt, zz, hh):
        return float(w_bundle(params, tt, zz, hh).w)

    def wh(tt, zz, hh):
        return float(w_bundle(params, tt, zz, hh).w_h)

    d = W_partials(params, DualPoint(t, z, h))
    et, ez, eh = (1e-5 * (1.0 + abs(c)) for c in (t, z, h))
    ehh = 1e-3 * (1.0 + abs(h))
    fd = {
        "w_z": (w(t, z + ez, h) - w(t, z - ez, h)) / (2 * ez),
        "w_h": (w(t, z, h + eh) - w(t, z, h - eh)) / (2 * eh),
        "w_t": (w(t + et, z, h) - w(t - et, z, h)) / (2 * et),
        "w_hh": (wh(t, z, h + ehh) - wh(t, z, h - ehh)) / (2 * ehh),
        "w_hz": (wh(t, z + ez, h) - wh(t, z - ez, h)) / (2 * ez),
        "w_ht": (wh(t + et, z, h) - wh(t - et, z, h)) / (2 * et),
    }
    return {k: abs(getattr(d, k) - v) / max(abs(v), abs(getattr(d, k)), 1e-300) for k, v in fd.items()}


@_timed
def check_w_derivatives(bench: Bench) -> list[CheckResult]:
    worst, where = 0.0, ""
    for t in FD_T:
        for z in FD_Z:
            for h in FD_H:
                for k, e in fd_derivative_errors(bench.params, t, z, h).items():
                    if e > worst:
                        worst, where = e, f"{k} at t={t} z={z} h={h}"
    return [CheckResult("w_derivatives", "2", worst <= 1e-4, worst, 1e-4, f"worst {where}")]


@_timed
def check_w_pde(bench: Bench) -> list[CheckResult]:
    worst = 0.0
    for t in FD_T:
        for z in FD_Z:
            for h in FD_H:
                terms = pde_residual_terms(bench.params, DualPoint(t, z, h))
                scale = max(abs(v) for v in terms.values())
                worst = max(worst, abs(sum(terms.values())) / scale)
    return [CheckResult("w_pde_residual", "3", worst <= 1e-6, worst, 1e-6, "relative to dominant term")]


# ---- boundary ---------------------------------------------------------------------


@_timed
def check_boundary_validity(bench: Bench) -> list[CheckResult]:
    p, n = bench.params, bench.profile.n_boundary
    out = []
    for h in HS:
        curve = solve_curve(p, h, n, refine=0)
        res = all_residuals(p, curve, refine=4)[1:]
        b = curve.values[1:]
        tol = residual_tolerance(p, b)
        ratio = np.abs(res) / tol
        ub = boundary_upper_bound(p, curve.t_grid, curve.h_path)
        below = bool(np.all(curve.values <= ub + 1e-12))
        zero_end = curve.values[0] == 0.0
        bad = int(np.sum(ratio > 1.0))
        worst_t = float(curve.t_grid[1:][np.argmax(ratio)])
        out.append(CheckResult(
            f"boundary_validity_h{h:g}", "4", bool(zero_end and below and bad == 0), float(ratio.max()), 1.0,
            f"max |residual|/tol at t={worst_t:.3g}; {bad}/{n} nodes above tol; b<=g: {below}; b(T)=0: {zero_end}"))
    return out


@_timed
def check_grid_convergence(bench: Bench) -> list[CheckResult]:
    p = bench.params
    n1, n2, n3 = bench.profile.n_convergence
    out = []
    for h in HS:
        v = [solve_curve(p, h, n, refine=0).values for n in (n1, n2, n3)]
        d12 = float(np.max(np.abs(v[0] - v[1][:: n2 // n1])))
        d23 = float(np.max(np.abs(v[1] - v[2][:: n3 // n2])))
        out.append(CheckResult(f"grid_convergence_h{h:g}", "5", d12 > d23, d23 / d12, 1.0,
                               f"sup diff n{n1}/n{n2}={d12:.3g}, n{n2}/n{n3}={d23:.3g}"))
    return out


# ---- value function ------------------------------------------------------------------


def value_lattice(params: ModelParams, profile: Profile):
    nt, nz = profile.lattice
    return np.linspace(0.0, params.horizon, nt), np.geomspace(0.2, 20.0, nz)


@_timed
def check_value_envelope(bench: Bench) -> list[CheckResult]:
    p = bench.params
    surf = bench.surface(HS)
    ts, zs = value_lattice(p, bench.profile)
    neg = over = mono = at_b = at_T = 0.0
    for h in HS:
        for t in ts:
            ctx = ValueContext(p, surf, float(t), h)
            jh = ctx.j_hat(zs)[0]
            env = params_envelope(p, t, zs)
            scale = max(float(np.max(env)), 1.0)
            neg = max(neg, float(np.max(-jh)) / scale)
            over = max(over, float(np.max(jh - env)) / scale)
            mono = max(mono, float(np.max(-np.diff(jh), initial=0.0)) / scale)
            if t < p.horizon:
                at_b = max(at_b, abs(float(ctx.j_hat_raw(ctx.b0)[0][0])) / (10.0 * residual_tolerance(p, ctx.b0)))
            else:
                at_T = max(at_T, float(np.max(np.abs(jh))))
    slack = 1e-8
    return [
        CheckResult("j_hat_nonnegative", "6", neg <= slack, neg, slack, "max(-J_hat)/scale"),
        CheckResult("j_hat_envelope", "6", over <= slack, over, slack, "max(J_hat - Iz(1-e^{-r(T-t)})/r)/scale"),
        CheckResult("j_hat_monotone", "6", mono <= slack, mono, slack, "max decrease in z / scale"),
        CheckResult("j_hat_at_boundary", "6", at_b <= 1.0, at_b, 1.0, "max |raw J_hat(t,b,h)| / (10 tol)"),
        CheckResult("j_hat_terminal", "6", at_T == 0.0, at_T, 0.0, "max |J_hat(T,z,h)|"),
    ]


def params_envelope(params: ModelParams, t, z):
    """Upper envelope ``I z (1 - exp(-r (T - t))) / r``."""
    r = params.r
    return params.invest_amount * np.asarray(z, float) * (1.0 - math.exp(-r * (params.horizon - t))) / r


def duality_points(params: ModelParams, surf: BoundarySurface):
    """Five (t, x, h) points placed relative to the wealth boundary."""
    out = []
    for t, h, frac in ((0.0, 1000.0, 0.5), (5.0, 1000.0, 0.8), (10.0, 1000.0, 0.3), (0.0, 2.0, 0.6),
                       (15.0, 2.0, 0.9)):
        out.append((t, frac * primal_boundary(params, surf, t, h), h))
    return out


@_timed
def check_convexity_duality(bench: Bench) -> list[CheckResult]:
    p = bench.params
    surf = bench.surface(HS)
    ts, zs = value_lattice(p, bench.profile)
    conv = 0.0
    for h in HS:
        for t in ts[:-1]:
            jzz = ValueContext(p, surf, float(t), h).j(zs, 2)[2]
            conv = max(conv, float(np.max(-jzz)) / max(float(np.max(np.abs(jzz))), 1e-300))
    trip = gap = 0.0
    for t, x, h in duality_points(p, surf):
        ctx = ValueContext(p, surf, t, h)
        z = z_star(p, surf, PrimalPoint(t, x, h))
        trip = max(trip, abs(float(ctx.j(z, 1)[1][0]) + x) / (1.0 + x))
        v = value_primal(p, surf, PrimalPoint(t, x, h))
        grid = np.geomspace(z / 50.0, z * 50.0, 20001)
        dense = float(np.min(ctx.j(grid)[0] + grid * x))
        gap = max(gap, abs(v - dense) / abs(dense))
    return [
        CheckResult("j_convex", "7", conv <= 1e-6, conv, 1e-6, "max(-J_zz)/max|J_zz| per (t,h)"),
        CheckResult("z_star_round_trip", "7", trip <= 1e-6, trip, 1e-6, "|J_z(z*)+x|/(1+x)"),
        CheckResult("duality_dense_inf", "7", gap <= 1e-4, gap, 1e-4, "|V - min_z(J+zx)|/|V|"),
    ]


@_timed
def check_stopping_optimality(bench: Bench) -> list[CheckResult]:
    p, prof = bench.params, bench.profile
    surf = bench.surface(HS)
    worst, where = math.inf, ""
    for t, mult, h in ((0.0, 1.5, 1000.0), (0.0, 2.0, 1000.0), (0.0, 3.0, 1000.0), (5.0, 2.0, 2.0),
                       (10.0, 1.5, 1000.0)):
        ctx = ValueContext(p, surf, t, h)
        z = mult * ctx.b0
        jq = float(ctx.j_hat(z)[0][0])
        for scale in (0.9, 1.1):
            est, se = mc_j_hat(p, surf, DualPoint(t, z, h), prof.stop_paths, prof.stop_steps, prof.seed, scale)
            margin = jq - (est - 2.0 * se)
            if margin < worst:
                worst, where = margin, f"t={t} z={mult}b h={h} rule={scale}b"
    return [CheckResult("stopping_optimality", "8", worst >= 0.0, worst, 0.0,
                        f"min J_hat - (MC - 2SE) at {where}")]


# ---- wealth-dual identity -------------------------------------------------------------


@_timed
def check_wealth_dual_identity(bench: Bench) -> list[CheckResult]:
    p, prof = bench.params, bench.profile
    h = 1000.0
    surf = bench.surface([h], cover=False)
    n = prof.sim_steps
    gaps = []
    for steps, sub in ((n // 2, 2), (n, 1)):
        cfg = SimConfig(n_paths=prof.sim_paths, n_steps=steps, substeps=sub, seed=prof.seed, initial_health=h,
                        initial_dual=3.0, record_paths=0)
        gaps.append(float(np.nanmax(simulate_closed_loop(p, surf, cfg, track_identity=True).identity_gap)))
    e1, e2 = gaps
    table_tol = table_wealth_error(p, surf, 0.0, h)
    tol = 2.0 * abs(e1 - e2) + 3.0 * table_tol
    return [CheckResult("wealth_dual_identity", "9", e2 <= tol, e2, tol,
                        f"max gap dt={e1:.4g}, dt/2={e2:.4g}; table error {table_tol:.3g}")]


# ---- qualitative study --------------------------------------------------------------------


def primal_curve(params: ModelParams, surf: BoundarySurface, h: float, n_nodes: int = 20):
    """b_hat(t, h) on ``n_nodes`` equally spaced times in [0, T)."""
    ts = np.linspace(0.0, params.horizon, n_nodes + 1)[:-1]
    return ts, np.array([primal_boundary(params, surf, float(t), h) for t in ts])


def sweep_curves(bench: Bench, name: str, values, h: float, n_nodes: int = 20):
    """Primal boundary curves at fixed h, one per parameter value; shape (len(values), n_nodes)."""
    rows = []
    for v in values:
        p = bench.params.replace(**{name: float(v)})
        ts, b = primal_curve(p, bench.surface([h], n=bench.profile.n_sweep, params=p), h, n_nodes)
        rows.append(b)
    return ts, np.array(rows)


def direction_summary(curves: np.ndarray, sign: int) -> tuple[bool, float]:
    """(direction holds at t=0, fraction of nodes where it holds strictly)."""
    d = np.diff(curves, axis=0) * sign
    ok = np.all(d > 0, axis=0)
    return bool(ok[0]), float(ok.mean())


@_timed
def check_dual_nonmonotone(bench: Bench) -> list[CheckResult]:
    p = bench.params
    surf = bench.surface(HS)
    out = []
    for h in HS:
        ts = np.linspace(0.0, p.horizon, 4 * bench.profile.n_boundary + 1)[:-1]
        b = surf.boundary_fn(0.0, h)(ts)
        d = np.diff(b)
        d = d[np.abs(d) > 1e-9 * np.max(np.abs(b))]
        changes = int(np.sum(np.diff(np.sign(d)) != 0))
        out.append(CheckResult(f"dual_nonmonotone_h{h:g}", "10a", changes >= 1, changes, 1.0,
                               "sign changes of d b/dt at fixed h"))
    return out


@_timed
def check_primal_decreasing(bench: Bench) -> list[CheckResult]:
    p = bench.params
    surf = bench.surface(HS)
    out = []
    for h in HS:
        ts = np.linspace(0.0, p.horizon, bench.profile.n_boundary + 1)[:-1]
        b = np.array([primal_boundary(p, surf, float(t), h) for t in ts])
        up = np.flatnonzero(np.diff(b) >= 0)
        first = f"; first increase after t={ts[up[0]]:.3g}" if up.size else ""
        out.append(CheckResult(f"primal_decreasing_h{h:g}", "10b", up.size == 0, float(up.size), 0.0,
                               f"increasing steps out of {ts.size - 1}{first}"))
    return out


@_timed
def check_primal_increasing_in_h(bench: Bench) -> list[CheckResult]:
    p = bench.params
    out = []
    for group in ((1000.0, 1200.0, 1500.0), (2.0, 3.0, 4.0)):
        curves = []
        for h in group:
            ts, b = primal_curve(p, bench.surface([h], n=bench.profile.n_sweep), h)
            curves.append(b)
        at0, frac = direction_summary(np.array(curves), +1)
        out.append(CheckResult(f"primal_increasing_in_h_{int(group[0])}", "10c", at0 and frac == 1.0, frac, 1.0,
                               "fraction of time nodes ordered by h"))
    return out


def _sweep_check(bench: Bench, name: str, crit: str, hs) -> list[CheckResult]:
    out = []
    for h in hs:
        sign = EXPECTED_DIRECTION[(name, h)]
        _, curves = sweep_curves(bench, name, SWEEPS[name], h)
        at0, frac = direction_summary(curves, sign)
        word = "up" if sign > 0 else "down"
        out.append(CheckResult(f"{name}_sweep_{word}_h{h:g}", crit, at0 and frac > 0.5, frac, 0.5,
                               f"direction at t=0: {at0}; fraction of nodes agreeing (must exceed tolerance)"))
    return out


@_timed
def check_delta_sweep(bench: Bench) -> list[CheckResult]:
    return _sweep_check(bench, "delta", "10d", (1000.0, 2.0))


@_timed
def check_alpha_sweep(bench: Bench) -> list[CheckResult]:
    return _sweep_check(bench, "alpha", "10e", (1000.0,))


@_timed
def check_rho_sweep(bench: Bench) -> list[CheckResult]:
    return _sweep_check(bench, "rho", "10f", (1000.0, 2.0))


def consumption_grid(params: ModelParams, surf: BoundarySurface, t: float, xs, hs):
    return np.array([[policy(params, surf, PrimalPoint(t, float(x), float(h))).c_star for x in xs] for h in hs])


@_timed
def check_consumption_order(bench: Bench) -> list[CheckResult]:
    p = bench.params
    hs = (2.0, 3.0, 4.0)
    surf = bench.surface(hs, n=bench.profile.n_sweep)
    xs = np.geomspace(5.0, 200.0, 12)
    ok = []
    for t in (0.0, 5.0, 10.0, 15.0):
        c = consumption_grid(p, surf, t, xs, hs)
        ok.append(np.all(np.diff(c, axis=0) > 0, axis=0))
    frac = float(np.mean(ok))
    return [CheckResult("sick_consumption_ordered", "10g", frac == 1.0, frac, 1.0,
                        "fraction of (t, x) points with c*(h=2) < c*(h=3) < c*(h=4)")]


# ---- determinism ------------------------------------------------------------------------


@_timed
def check_determinism(bench: Bench) -> list[CheckResult]:
    p = bench.params
    n = min(bench.profile.n_boundary, 50)
    a = solve_surface(p, [2.0, 1000.0], n, threads=1)
    b = solve_surface(p, [2.0, 1000.0], n, threads=1)
    c = solve_surface(p, [2.0, 1000.0], n, threads=2)
    same = all(np.array_equal(x.values, y.values) for x, y in zip(a.curves, b.curves))
    close = all(np.allclose(x.values, y.values, rtol=1e-12, atol=0) for x, y in zip(a.curves, c.curves))
    surf = bench.surface([1000.0], cover=False)
    cfg = SimConfig(n_paths=1500, n_steps=100, seed=7, initial_wealth=300.0, record_paths=5)
    s1 = simulate_closed_loop(p, surf, cfg)
    s2 = simulate_closed_loop(p, surf, cfg)
    s3 = simulate_closed_loop(p, surf, replace(cfg, threads=2))
    sim_same = np.array_equal(s1.terminal_wealth, s2.terminal_wealth) and np.array_equal(s1.wealth, s2.wealth)
    sim_close = np.allclose(s1.terminal_wealth, s3.terminal_wealth, rtol=1e-12, atol=0)
    ok = same and close and sim_same and sim_close
    return [CheckResult("determinism", "11", ok, float(ok), 1.0,
                        f"solver identical={same} threaded close={close}; "
                        f"simulator identical={sim_same} threaded close={sim_close}")]


CHECKS: dict[str, Callable[[Bench], list[CheckResult]]] = {
    "w_vs_mc": check_w_vs_mc,
    "w_derivatives": check_w_derivatives,
    "w_pde": check_w_pde,
    "boundary_validity": check_boundary_validity,
    "grid_convergence": check_grid_convergence,
    "value_envelope": check_value_envelope,
    "convexity_duality": check_convexity_duality,
    "stopping_optimality": check_stopping_optimality,
    "wealth_dual_identity": check_wealth_dual_identity,
    "dual_nonmonotone": check_dual_nonmonotone,
    "primal_decreasing": check_primal_decreasing,
    "primal_increasing_in_h": check_primal_increasing_in_h,
    "delta_sweep": check_delta_sweep,
    "alpha_sweep": check_alpha_sweep,
    "rho_sweep": check_rho_sweep,
    "consumption_order": check_consumption_order,
    "determinism": check_determinism,
}


def run_checks(bench: Bench, names=None, log: Callable[[str], None] | None = None) -> list[CheckResult]:
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    out = []
    for name in names:
        for r in CHECKS[name](bench):
            out.append(r)
            if log:
                log(r.line())
    return out


def report_rows(results: list[CheckResult]):
    for r in results:
        yield (r.criterion, r.name, int(r.passed), r.measured, r.tolerance, round(r.seconds, 3), r.detail)
