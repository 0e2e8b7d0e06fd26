"""CSV output with '#'-prefixed manifest rows, and the matching reader."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__


@dataclass
class RunManifest:
    """Provenance written as comment rows above every CSV header."""

    subcommand: str
    config_path: str | None = None
    output_dir: str | None = None
    grid: dict = field(default_factory=dict)
    seed: int | None = None
    timestamp: str | None = None
    code_version: str = __version__

    def lines(self) -> list[str]:
        out = []
        for k, v in asdict(self).items():
            if v is None or v == {}:
                continue
            out.append(f"# {k}: {json.dumps(v, sort_keys=True) if isinstance(v, dict) else v}")
        return out


def format_value(v) -> str:
    """Shortest round-trip representation; integers stay integral."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    f = float(v)
    if np.isnan(f):
        return "nan"
    return repr(f)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence],
              manifest: RunManifest | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    if manifest is not None:
        for line in manifest.lines():
            buf.write(line + "\n")
    for k, v in (extra or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    path.write_text(buf.getvalue())
    return path


@dataclass
class CsvTable:
    meta: dict[str, str]
    columns: list[str]
    rows: list[list[str]]

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([float(r[j]) for r in self.rows])

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in r] for r in self.rows]).reshape(len(self.rows), len(self.columns))


def read_csv(path: str | Path) -> CsvTable:
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            meta[key.strip()] = val.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    return CsvTable(meta, columns, [r for r in reader])


def csv_body(path: str | Path) -> str:
    """File content without the comment rows; what reproducibility compares."""
    return "\n".join(l for l in Path(path).read_text().splitlines() if not l.startswith("#"))
