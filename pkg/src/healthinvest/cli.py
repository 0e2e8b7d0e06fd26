"""Command-line front end: ``healthinvest {boundary,sweep,value,policy,simulate,verify}``.

Configuration is a JSON object with the flat model parameters plus optional
``grid``, ``sim`` and ``verify`` sections; flags override the file. Every CSV
starts with '#' manifest rows followed by the header.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 failed checks.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import (BOUNDARY_COLUMNS, QUADRATURES, BoundarySolverError, CoverageError, covering_h_grid,
                       solve_surface)
from .csvio import RunManifest, write_csv
from .numerics import BracketError, QuadratureError
from .params import ModelParams, ParameterError, g_value, params_from_mapping
from .primal import InfeasibleWealthError, PrimalPoint, policy, primal_boundary
from .simulate import (
    SUMMARY_COLUMNS, TRAJECTORY_COLUMNS, PolicyKind, SimConfig, simulate_closed_loop, summary_rows,
    trajectory_rows, welfare_estimate,
)
from .value import VALUE_COLUMNS, build_value_surface
from .verification import (
    EXPECTED_DIRECTION, PROFILES, REPORT_COLUMNS, Bench, CheckResult, direction_summary, report_rows, run_checks,
)

logger = logging.getLogger("healthinvest")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
SOLVER_ERRORS = (BoundarySolverError, CoverageError, BracketError, QuadratureError, InfeasibleWealthError)
SWEEPABLE = ("h", "delta", "alpha", "rho", "beta", "kappa", "m0", "m1", "r", "mu", "sigma", "invest_amount")

PRIMAL_COLUMNS = ("h", "t", "b_dual", "b_primal", "g")
POLICY_COLUMNS = ("t", "h", "x", "z_star", "c_star", "pi_star", "value", "invest_now", "b_hat")
DIRECTION_COLUMNS = ("parameter", "h", "values", "expected", "observed_at_t0", "fraction_agreeing", "passed")
WELFARE_COLUMNS = ("estimate", "std_error", "n_paths", "invested_fraction", "absorbed")


class ConfigError(ValueError):
    """Malformed configuration file or flag."""


@dataclass
class GridSpec:
    h: list[float] = field(default_factory=lambda: [2.0, 1000.0])
    n_steps: int = 200
    refine: int = 4
    quadrature: str = "graded"
    nt: int = 11
    z_min: float = 0.2
    z_max: float = 20.0
    nz: int = 40
    policy_t: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0])
    x_min: float = 1.0
    x_max: float = 3000.0
    nx: int = 60


@dataclass
class RunConfig:
    params: ModelParams
    grid: GridSpec
    sim: dict
    verify: dict
    path: str | None = None


def _section(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    return cls(**data)


def load_config(path: str | None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data = dict(data)
    grid = data.pop("grid", {})
    sim = data.pop("sim", {})
    verify = data.pop("verify", {})
    for name, sec in (("grid", grid), ("sim", sim), ("verify", verify)):
        if not isinstance(sec, dict):
            raise ConfigError(f"'{name}' must be an object")
    try:
        params = params_from_mapping(data)
        gspec = _section(GridSpec, grid, "grid")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(params, gspec, sim, verify, path)


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    g = cfg.grid
    if args.steps is not None:
        g.n_steps = args.steps
    if args.h is not None:
        g.h = args.h
    if args.refine is not None:
        g.refine = args.refine
    if args.quadrature is not None:
        g.quadrature = args.quadrature
    if g.quadrature not in QUADRATURES:
        raise ConfigError(f"quadrature must be one of {', '.join(QUADRATURES)}")
    if args.seed is not None:
        cfg.sim["seed"] = args.seed
        cfg.verify["seed"] = args.seed
    if g.n_steps < 1:
        raise ConfigError("n_steps must be positive")
    if not g.h or any(h <= 0 for h in g.h):
        raise ConfigError("health values must be positive")
    g.h = sorted(float(h) for h in g.h)
    return cfg


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _manifest(cfg: RunConfig, args, extra_grid: dict | None = None) -> RunManifest:
    grid = {"h": cfg.grid.h, "n_steps": cfg.grid.n_steps, "refine": cfg.grid.refine,
            "quadrature": cfg.grid.quadrature}
    grid.update(extra_grid or {})
    return RunManifest(
        subcommand=args.command,
        config_path=cfg.path,
        output_dir=str(args.out),
        grid=grid,
        seed=cfg.sim.get("seed"),
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds") if args.timestamps else None,
        code_version=__version__,
    )


# ---- boundary -----------------------------------------------------------------


def _boundary_tables(params: ModelParams, grid: GridSpec, threads):
    """Dual rows along characteristics and primal rows at fixed health."""
    surf = solve_surface(params, covering_h_grid(params, grid.h), grid.n_steps, refine=grid.refine, threads=threads,
                         quadrature=grid.quadrature)
    wanted = {round(h, 12) for h in grid.h}
    dual = [row for c in surf.curves if round(c.h_ref, 12) in wanted
            for row in zip([c.h_ref] * len(c.values), c.t_grid, c.xi_grid, c.values, c.residuals, c.h_path)]
    ts = np.linspace(0.0, params.horizon, grid.n_steps + 1)[:-1]
    primal = []
    for h in grid.h:
        for t in ts:
            t = float(t)
            primal.append((h, t, surf.b(t, h), primal_boundary(params, surf, t, h), g_value(params, t)))
    return dual, primal


def cmd_boundary(cfg: RunConfig, args) -> int:
    dual, primal = _boundary_tables(cfg.params, cfg.grid, args.threads)
    man = _manifest(cfg, args)
    write_csv(args.out / "boundary_dual.csv", BOUNDARY_COLUMNS, dual, man)
    write_csv(args.out / "boundary_primal.csv", PRIMAL_COLUMNS, primal, man)
    logger.info("wrote boundary_dual.csv (%d rows) and boundary_primal.csv (%d rows)", len(dual), len(primal))
    return EXIT_OK


# ---- sweep ----------------------------------------------------------------------------


def _directions(name: str, values, primal_by_value: dict, hs) -> list[tuple]:
    rows = []
    ok_vals = [v for v in values if v in primal_by_value]
    if len(ok_vals) < 2:
        return rows
    order = np.argsort(ok_vals)
    for h in hs:
        curves = np.array([[r[3] for r in primal_by_value[ok_vals[i]] if r[0] == h] for i in order])
        expected = EXPECTED_DIRECTION.get((name, float(h)), 0)
        up0, frac_up = direction_summary(curves, +1)
        down0, frac_down = direction_summary(curves, -1)
        observed = "up" if up0 else "down" if down0 else "mixed"
        if expected:
            frac = frac_up if expected > 0 else frac_down
            at0 = up0 if expected > 0 else down0
            passed = int(at0 and frac > 0.5)
            exp_word = "up" if expected > 0 else "down"
        else:
            frac, passed, exp_word = max(frac_up, frac_down), "", ""
        rows.append((name, h, ";".join(repr(float(ok_vals[i])) for i in order), exp_word, observed, frac, passed))
    return rows


def _h_sweep_directions(values, primal_rows) -> list[tuple]:
    hs = sorted(values)
    curves = np.array([[r[3] for r in primal_rows if r[0] == h] for h in hs])
    at0, frac = direction_summary(curves, +1)
    observed = "up" if at0 else "down" if direction_summary(curves, -1)[0] else "mixed"
    return [("h", "", ";".join(repr(float(h)) for h in hs), "up", observed, frac, int(at0 and frac == 1.0))]


def cmd_sweep(cfg: RunConfig, args) -> int:
    name = args.param
    if name not in SWEEPABLE:
        raise ConfigError(f"cannot sweep '{name}'; choose from {', '.join(SWEEPABLE)}")
    if not args.values:
        raise ConfigError("--values is required for sweep")
    values = list(dict.fromkeys(float(v) for v in args.values))
    man = _manifest(cfg, args, {"parameter": name, "values": values})
    dual_rows, primal_rows, failures = [], [], []

    if name == "h":
        grid = GridSpec(**{**cfg.grid.__dict__, "h": sorted(values)})
        dual, primal = _boundary_tables(cfg.params, grid, args.threads)
        dual_rows = [(r[0],) + r for r in dual]
        primal_rows = [(r[0],) + r for r in primal]
        directions = _h_sweep_directions(values, primal)
    else:
        def one(v):
            try:
                return v, _boundary_tables(cfg.params.replace(**{name: v}), cfg.grid, 1), None
            except (ParameterError, *SOLVER_ERRORS) as exc:
                return v, None, exc

        threads = args.threads or os.cpu_count() or 1
        with ThreadPoolExecutor(max_workers=max(1, min(threads, len(values)))) as ex:
            results = list(ex.map(one, values))
        primal_by_value = {}
        for v, tables, exc in results:
            if exc is not None:
                logger.error("%s=%g failed: %s", name, v, exc)
                failures.append((name, v, type(exc).__name__, str(exc)))
                continue
            dual_rows += [(v,) + r for r in tables[0]]
            primal_rows += [(v,) + r for r in tables[1]]
            primal_by_value[v] = tables[1]
        directions = _directions(name, values, primal_by_value, cfg.grid.h)

    write_csv(args.out / f"sweep_{name}_dual.csv", (name,) + BOUNDARY_COLUMNS, dual_rows, man)
    write_csv(args.out / f"sweep_{name}_primal.csv", (name,) + PRIMAL_COLUMNS, primal_rows, man)
    write_csv(args.out / f"sweep_{name}_directions.csv", DIRECTION_COLUMNS, directions, man)
    for row in directions:
        status = "PASS" if row[6] == 1 else "FAIL" if row[6] == 0 else "INFO"
        where = f"at h={row[1]}" if row[1] != "" else "across values"
        print(f"[{status}] boundary {row[4]} in {name} {where} (expected {row[3] or 'n/a'}, "
              f"fraction of nodes {row[5]:.2f})")
    if failures:
        write_csv(args.out / f"sweep_{name}_failures.csv", ("parameter", "value", "error", "message"), failures, man)
        return EXIT_SOLVER
    return EXIT_OK


# ---- value / policy ----------------------------------------------------------------------


def cmd_value(cfg: RunConfig, args) -> int:
    g, p = cfg.grid, cfg.params
    surf = solve_surface(p, covering_h_grid(p, g.h), g.n_steps, refine=0, threads=args.threads,
                         quadrature=g.quadrature)
    ts = np.linspace(0.0, p.horizon, g.nt)
    zs = np.geomspace(g.z_min, g.z_max, g.nz)
    vs = build_value_surface(p, surf, ts, zs, g.h, threads=args.threads)
    man = _manifest(cfg, args, {"nt": g.nt, "z": [g.z_min, g.z_max, g.nz]})
    write_csv(args.out / "value_surface.csv", VALUE_COLUMNS, vs.rows(), man)
    return EXIT_OK


def cmd_policy(cfg: RunConfig, args) -> int:
    g, p = cfg.grid, cfg.params
    surf = solve_surface(p, covering_h_grid(p, g.h), g.n_steps, refine=0, threads=args.threads,
                         quadrature=g.quadrature)
    xs = np.geomspace(g.x_min, g.x_max, g.nx)
    rows = []
    cons = {}
    for t in g.policy_t:
        for h in g.h:
            for x in xs:
                e = policy(p, surf, PrimalPoint(float(t), float(x), h))
                rows.append((t, h, x, e.z_star, e.c_star, e.pi_star, e.v, int(e.invest_now), e.b_hat))
                cons[(t, h, x)] = e.c_star
    man = _manifest(cfg, args, {"policy_t": g.policy_t, "x": [g.x_min, g.x_max, g.nx]})
    write_csv(args.out / "policy.csv", POLICY_COLUMNS, rows, man)
    report = []
    if len(g.h) > 1:
        c = np.array([[[cons[(t, h, x)] for x in xs] for h in g.h] for t in g.policy_t])
        ordered = np.all(np.diff(c, axis=1) > 0, axis=1)
        frac = float(ordered.mean())
        report.append(CheckResult("consumption_ordered_by_h", "10g", frac == 1.0, frac, 1.0,
                                  f"h={g.h}; fraction of (t, x) points with consumption increasing in h"))
    write_csv(args.out / "policy_report.csv", REPORT_COLUMNS, report_rows(report), man)
    for r in report:
        print(r.line())
    return EXIT_OK


# ---- simulate ----------------------------------------------------------------------------


def sim_config(sim: dict, threads) -> SimConfig:
    data = dict(sim)
    if "policy" in data:
        try:
            data["policy"] = PolicyKind(data["policy"])
        except ValueError as exc:
            raise ConfigError(f"unknown policy {data['policy']!r}; choose from "
                              f"{', '.join(k.value for k in PolicyKind)}") from exc
    data.setdefault("threads", threads)
    data.setdefault("record_paths", 20)
    try:
        return _section(SimConfig, data, "sim")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(cfg: RunConfig, args) -> int:
    sc = sim_config(cfg.sim, args.threads)
    p = cfg.params
    h0 = sc.initial_health
    lo = h0 * np.exp(-p.delta * p.horizon)
    surf = solve_surface(p, covering_h_grid(p, [lo]), cfg.grid.n_steps, refine=0, threads=args.threads,
                         quadrature=cfg.grid.quadrature)
    bundle = simulate_closed_loop(p, surf, sc)
    est, se = welfare_estimate(p, bundle)
    man = _manifest(cfg, args, {"sim": {k: (v.value if isinstance(v, PolicyKind) else v)
                                        for k, v in sc.__dict__.items() if k != "threads"}})
    write_csv(args.out / "simulation_summary.csv", SUMMARY_COLUMNS, summary_rows(bundle), man)
    write_csv(args.out / "simulation_paths.csv", TRAJECTORY_COLUMNS, trajectory_rows(bundle), man)
    invested = float(np.mean(np.isfinite(bundle.invest_time)))
    write_csv(args.out / "simulation_welfare.csv", WELFARE_COLUMNS,
              [(est, se, bundle.n_paths, invested, int(bundle.absorbed.sum()))], man)
    return EXIT_OK


# ---- verify --------------------------------------------------------------------------------


def cmd_verify(cfg: RunConfig, args) -> int:
    ver = dict(cfg.verify)
    prof_name = ver.pop("profile", "coarse")
    names = ver.pop("checks", None)
    seed = ver.pop("seed", None)
    if ver:
        raise ConfigError(f"unknown keys in 'verify': {', '.join(sorted(ver))}")
    if prof_name not in PROFILES:
        raise ConfigError(f"unknown profile {prof_name!r}")
    prof = PROFILES[prof_name]
    if seed is not None:
        from dataclasses import replace
        prof = replace(prof, seed=int(seed))
    bench = Bench(params=cfg.params, profile=prof, threads=args.threads)
    try:
        results = run_checks(bench, names, log=print)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    man = _manifest(cfg, args, {"profile": prof.name})
    rows = [r[:5] + r[6:] for r in report_rows(results)]
    write_csv(args.out / "verification_report.csv", REPORT_COLUMNS[:5] + REPORT_COLUMNS[6:], rows, man)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: " + ", ".join(r.name for r in failed))
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


COMMANDS = {
    "boundary": cmd_boundary,
    "sweep": cmd_sweep,
    "value": cmd_value,
    "policy": cmd_policy,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="healthinvest", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--steps", type=int, help="time steps of the boundary grid")
    common.add_argument("--h", type=_float_list, help="comma-separated health levels")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available parallelism)")
    common.add_argument("--refine", type=int, help="refinement factor of the residual check (0 skips it)")
    common.add_argument("--quadrature", choices=QUADRATURES,
                        help="stage rule of the boundary solver (default: graded)")
    common.add_argument("--timestamps", action="store_true", help="record a timestamp in CSV headers")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=(COMMANDS[name].__doc__ or name).strip().split("\n")[0])
        if name == "sweep":
            sp.add_argument("--param", required=True, help=f"parameter to vary ({', '.join(SWEEPABLE)})")
            sp.add_argument("--values", type=_float_list, required=True, help="comma-separated values")
    return ap


cmd_boundary.__doc__ = "solve the investment boundary; writes dual and primal boundary CSVs"
cmd_sweep.__doc__ = "one boundary solve per parameter value plus a directions report"
cmd_value.__doc__ = "tabulate J-hat, J and z-derivatives on a (t, z, h) lattice"
cmd_policy.__doc__ = "feedback consumption and allocation on a wealth grid"
cmd_simulate.__doc__ = "Monte Carlo paths under a feedback policy"
cmd_verify.__doc__ = "run the numerical checks and write a pass/fail report"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    pkg_logger = logging.getLogger("healthinvest")
    saved_level = pkg_logger.level
    pkg_logger.setLevel(logging.WARNING if args.quiet else logging.INFO)
    if args.threads is None:
        args.threads = os.cpu_count() or 1
    try:
        cfg = _apply_flags(load_config(args.config), args)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ParameterError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        logger.error("solver error: %s", exc)
        return EXIT_SOLVER
    finally:
        # callers embedding main keep their own logging configuration
        pkg_logger.setLevel(saved_level)


if __name__ == "__main__":
    sys.exit(main())
