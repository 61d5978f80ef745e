"""CSV tables with provenance headers.

Floats are written with 17 significant digits, so a table regenerated from the
same config and seed is byte-identical. No timestamp is written.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from . import __version__


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".16e")
    if value is None:
        return ""
    return str(value)


def render(columns: list[str], rows: list[list], header: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# phonon-bus {__version__}\n")
    buf.write(f"# config_sha256: {header['hash']}\n")
    buf.write(f"# seed: {header['seed']}\n")
    for line in header.get("echo", "").splitlines():
        buf.write(f"# config: {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_tables(out_dir: Path, prefix: str, tables: dict, header: dict) -> list[Path]:
    """Write every ``name -> (columns, rows)`` table; returns the paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (columns, rows) in tables.items():
        p = out_dir / f"{prefix}{name}.csv"
        p.write_text(render(columns, rows, header))
        paths.append(p)
    return paths
