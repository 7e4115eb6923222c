"""CSV, JSON and manifest writers.

Floats are written with ``%.17g`` so every value read back is bit-identical
to the one computed, which keeps reports recomputable from the files.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .reference import GridWavefunction


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return "" if v is None else str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> dict:
    """Columns of a CSV written by :func:`write_csv`, numeric where possible."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        try:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return cols


def write_reference(path, ref: GridWavefunction) -> Path:
    x, v = ref.x, ref.values
    return write_csv(path, ["x", "re_psi", "im_psi", "abs2"],
                     zip(x, v.real, v.imag, np.abs(v) ** 2))


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=False) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, status: str, files: Sequence[Path], problems: Sequence[str] = ()) -> Path:
    """Plain-text manifest: completeness status, problems, then one ``sha256  path`` line per file."""
    out_dir = Path(out_dir)
    lines = [f"status: {status}"]
    lines += [f"problem: {p}" for p in problems]
    for f in sorted(set(Path(f) for f in files)):
        if f.exists():
            lines.append(f"{sha256(f)}  {f.relative_to(out_dir).as_posix()}")
    path = out_dir / "MANIFEST"
    path.write_text("\n".join(lines) + "\n")
    return path
