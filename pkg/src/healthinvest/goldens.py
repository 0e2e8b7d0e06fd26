"""Golden-file corpus of solved boundaries, value slices and policy grids.

Each case holds a small configuration, a stored CSV and per-column
tolerances. :func:`regenerate_goldens` recomputes every case and reports
columns that drift beyond tolerance; comparisons are never bit-exact, since
transcendental functions differ slightly across platforms.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary import BOUNDARY_COLUMNS, boundary_rows, covering_h_grid, solve_surface
from .csvio import RunManifest, csv_body, read_csv, write_csv
from .params import params_from_mapping
from .primal import PrimalPoint, policy
from .value import VALUE_COLUMNS, build_value_surface

CORPUS_VERSION = "v1"
CORPUS_DIR = Path(__file__).parent / "corpus" / CORPUS_VERSION
MANIFEST = "manifest.json"

POLICY_COLUMNS = ("t", "h", "x", "z_star", "c_star", "pi_star", "value")


@dataclass
class GoldenCase:
    name: str
    kind: str                     # boundary | value | policy
    config: dict
    digest: str = ""
    tolerance: dict = field(default_factory=dict)   # column -> [rtol, atol]

    @property
    def filename(self) -> str:
        return f"{self.name}.csv"


@dataclass
class Drift:
    case: str
    column: str
    max_abs: float
    allowed: float


@dataclass
class GoldenReport:
    checked: list[str]
    drifts: list[Drift]
    digest_changed: list[str]

    @property
    def ok(self) -> bool:
        return not self.drifts

    def drifting_cases(self) -> set[str]:
        return {d.case for d in self.drifts}


DEFAULT_CASES = (
    GoldenCase("boundary_n50", "boundary", {"h": [2.0, 1000.0], "n_steps": 50, "refine": 4},
               tolerance={"b_dual": [1e-9, 1e-12], "residual": [1e-6, 1e-9], "h_path": [1e-12, 0.0]}),
    GoldenCase("boundary_alpha025_n40", "boundary", {"params": {"alpha": 0.25}, "h": [1000.0], "n_steps": 40,
                                                      "refine": 2},
               tolerance={"b_dual": [1e-9, 1e-12], "residual": [1e-6, 1e-9], "h_path": [1e-12, 0.0]}),
    GoldenCase("boundary_trapezoid_n40", "boundary", {"h": [1000.0], "n_steps": 40, "refine": 2,
                                                       "quadrature": "trapezoid"},
               tolerance={"b_dual": [1e-9, 1e-12], "residual": [1e-6, 1e-9], "h_path": [1e-12, 0.0]}),
    GoldenCase("value_slice", "value", {"h": [1000.0], "n_steps": 40, "t": [0.0, 10.0], "z": [0.5, 1.5, 3.0, 8.0]},
               tolerance={"j_hat": [1e-8, 1e-10], "j": [1e-8, 1e-10], "j_z": [1e-8, 1e-10],
                          "j_zz": [1e-7, 1e-10]}),
    GoldenCase("policy_grid", "policy", {"h": [2.0, 1000.0], "n_steps": 40, "t": [0.0, 10.0],
                                         "x": [5.0, 20.0, 80.0, 320.0, 1280.0]},
               tolerance={"z_star": [1e-8, 1e-12], "c_star": [1e-8, 1e-12], "pi_star": [1e-7, 1e-10],
                          "value": [1e-8, 1e-10]}),
)


def compute_case(case: GoldenCase) -> tuple[tuple[str, ...], list[tuple]]:
    """Recompute the columns and rows of one case."""
    cfg = case.config
    params = params_from_mapping(cfg.get("params", {}))
    if case.kind == "boundary":
        surf = solve_surface(params, cfg["h"], cfg["n_steps"], refine=cfg.get("refine", 4),
                             quadrature=cfg.get("quadrature", "graded"))
        return BOUNDARY_COLUMNS, list(boundary_rows(surf))
    surf = solve_surface(params, covering_h_grid(params, cfg["h"]), cfg["n_steps"], refine=0)
    if case.kind == "value":
        vs = build_value_surface(params, surf, cfg["t"], cfg["z"], cfg["h"])
        return VALUE_COLUMNS, list(vs.rows())
    if case.kind == "policy":
        rows = []
        for t in cfg["t"]:
            for h in cfg["h"]:
                for x in cfg["x"]:
                    e = policy(params, surf, PrimalPoint(float(t), float(x), float(h)))
                    rows.append((t, h, x, e.z_star, e.c_star, e.pi_star, e.v))
        return POLICY_COLUMNS, rows
    raise ValueError(f"unknown golden kind {case.kind!r}")


def _digest(path: Path) -> str:
    return hashlib.sha256(csv_body(path).encode()).hexdigest()


def load_suite(corpus: Path = CORPUS_DIR) -> list[GoldenCase]:
    data = json.loads((corpus / MANIFEST).read_text())
    return [GoldenCase(**c) for c in data["cases"]]


def write_suite(cases=DEFAULT_CASES, corpus: Path = CORPUS_DIR) -> list[GoldenCase]:
    """Solve every case and (re)write the stored CSVs and the manifest."""
    corpus.mkdir(parents=True, exist_ok=True)
    out = []
    for case in cases:
        cols, rows = compute_case(case)
        path = write_csv(corpus / case.filename, cols, rows, RunManifest(subcommand=f"golden:{case.name}"))
        out.append(GoldenCase(case.name, case.kind, case.config, _digest(path), case.tolerance))
    manifest = {"version": CORPUS_VERSION, "cases": [c.__dict__ for c in out]}
    (corpus / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def regenerate_goldens(suite: list[GoldenCase] | None = None, corpus: Path = CORPUS_DIR,
                       overrides: dict[str, dict] | None = None, tolerance_scale: float = 1.0) -> GoldenReport:
    """Recompute every case and compare column-wise with the stored files.

    ``overrides`` maps a case name to configuration entries replaced before
    recomputing; ``tolerance_scale`` widens (or narrows) all tolerances.
    Shape changes (a different row count) count as drift in every column.
    """
    suite = load_suite(corpus) if suite is None else suite
    overrides = overrides or {}
    drifts, changed = [], []
    for case in suite:
        cfg = {**case.config, **overrides.get(case.name, {})}
        cols, rows = compute_case(GoldenCase(case.name, case.kind, cfg))
        stored = read_csv(corpus / case.filename)
        if _digest(corpus / case.filename) != case.digest:
            changed.append(case.name)
        fresh = np.array(rows, float).reshape(len(rows), len(cols))
        ref = stored.as_array()
        for j, col in enumerate(cols):
            rtol, atol = case.tolerance.get(col, [0.0, 0.0])
            if fresh.shape != ref.shape:
                drifts.append(Drift(case.name, col, float("inf"), 0.0))
                continue
            err = np.abs(fresh[:, j] - ref[:, j])
            allowed = tolerance_scale * (atol + rtol * np.abs(ref[:, j]))
            if np.any(err > allowed):
                k = int(np.argmax(err - allowed))
                drifts.append(Drift(case.name, col, float(err[k]), float(allowed[k])))
    return GoldenReport([c.name for c in suite], drifts, changed)
