"""Versioned CSV/JSON output and run manifests.

CSV files start with a ``# schema: <name>`` line followed by the column
header. Floats are written with 9 significant digits. JSON carries full
binary64 precision, since Python's float repr round-trips exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from corrspec.protocol import FringeDataset

FRINGE_SCHEMA = "corrspec.fringe.v1"
FRINGE_COLUMNS = ("t_s", "delta_phi_z_rad", "n_correlated", "n_total")
MANIFEST_SCHEMA = "corrspec.manifest.v1"


class SchemaError(ValueError):
    pass


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def write_csv(path, schema: str, columns, rows) -> Path:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise SchemaError(f"row has {len(row)} cells, schema {schema} has {len(columns)}")
        w.writerow([_cell(v) for v in row])
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def read_csv(path, schema: str | None = None):
    """Return ``(schema, columns, rows)`` with rows as lists of strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema:"):
        raise SchemaError(f"{path}: missing schema line")
    found = lines[0].split(":", 1)[1].strip()
    if schema is not None and found != schema:
        raise SchemaError(f"{path}: expected schema {schema}, found {found}")
    reader = csv.reader(lines[1:])
    columns = next(reader, None)
    if columns is None:
        raise SchemaError(f"{path}: missing header row")
    return found, columns, list(reader)


def write_fringes(path, datasets) -> Path:
    rows = [(d.t, x, k, n) for d in datasets
            for x, k, n in zip(d.delta_phi_z, d.n_correlated, d.n_total)]
    return write_csv(path, FRINGE_SCHEMA, FRINGE_COLUMNS, rows)


def read_fringes(path) -> list[FringeDataset]:
    _, cols, rows = read_csv(path, FRINGE_SCHEMA)
    if tuple(cols) != FRINGE_COLUMNS:
        raise SchemaError(f"{path}: columns {cols} do not match {FRINGE_COLUMNS}")
    groups: dict[float, list] = {}
    for r in rows:
        try:
            t, x, k, n = float(r[0]), float(r[1]), int(r[2]), int(r[3])
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad row {r}") from exc
        groups.setdefault(t, []).append((x, k, n))
    out = []
    for t, pts in groups.items():
        x, k, n = zip(*pts)
        out.append(FringeDataset(t=t, delta_phi_z=np.array(x), n_correlated=np.array(k),
                                 n_total=np.array(n)))
    return out


# --------------------------------------------------------------------------
# manifests


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    scenario_hash: str
    seed: int
    tool_version: str
    started_utc: str = field(default_factory=_now)
    finished_utc: str = ""
    outputs: list = field(default_factory=list)
    schema: str = MANIFEST_SCHEMA

    def add(self, path) -> None:
        path = Path(path)
        self.outputs.append({"file": path.name, "sha256": file_sha256(path),
                             "bytes": path.stat().st_size})

    def write(self, out_dir) -> Path:
        self.finished_utc = _now()
        return write_json(Path(out_dir) / f"{self.command}.manifest.json", asdict(self))

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = read_json(path)
        if d.get("schema") != MANIFEST_SCHEMA:
            raise SchemaError(f"{path}: not a run manifest")
        return cls(**d)


def validate_manifest(path) -> list[str]:
    """Problems found when checking a manifest against files beside it; empty if valid."""
    path = Path(path)
    man = RunManifest.load(path)
    problems = []
    if not man.outputs:
        problems.append("manifest lists no outputs")
    for entry in man.outputs:
        target = path.parent / entry["file"]
        if not target.exists():
            problems.append(f"{entry['file']}: missing")
        elif file_sha256(target) != entry["sha256"]:
            problems.append(f"{entry['file']}: hash mismatch")
    return problems
