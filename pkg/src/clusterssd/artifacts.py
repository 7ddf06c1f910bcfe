"""Frozen on-disk schemas: tau archives, OC curves, results, run manifests.

Schema version is embedded in the first line of every file. All writes go
through a temp-then-rename so partial outputs are never left under their
final name. See docs/schemas.md for the column/key reference.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .engine import TauSample

SCHEMA_VERSION = "clusterssd-v1"

__all__ = [
    "SCHEMA_VERSION",
    "atomic_write_text",
    "write_tau_csv",
    "read_tau_csv",
    "write_curve_csv",
    "read_curve_csv",
    "write_result_json",
    "read_result_json",
    "write_manifest",
    "file_sha256",
]

TAU_COLUMNS = ["repetition", "c", "psi_label", "delta_r", "tau", "logit_tau"]
CURVE_COLUMNS = ["scenario", "c", "estimate", "band_lo", "band_hi", "source"]


class SchemaError(ValueError):
    """File does not match the frozen schema."""


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def write_tau_csv(path, samples) -> None:
    """Archive one or more tau samples; one row per repetition."""
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_VERSION} tau\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TAU_COLUMNS)
    for s in samples:
        for r in range(s.m):
            w.writerow([r, s.c, s.psi_label, _fmt(s.delta[r]), _fmt(s.tau[r]),
                        _fmt(s.logit_tau[r])])
    atomic_write_text(path, buf.getvalue())


def read_tau_csv(path, master_seed: int = 0) -> dict:
    """Read a tau archive back into {(psi_label, c): TauSample}."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {SCHEMA_VERSION} tau"):
        raise SchemaError(f"{path}: missing tau schema header")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0] != TAU_COLUMNS:
        raise SchemaError(f"{path}: unexpected columns {rows[0] if rows else None}")
    groups: dict = {}
    for i, row in enumerate(rows[1:], start=3):
        if not row:
            continue
        if len(row) != len(TAU_COLUMNS):
            raise SchemaError(f"{path}: bad row at line {i}")
        _, c, label, d, t, lt = row
        groups.setdefault((label, int(c)), []).append((float(d), float(t), float(lt)))
    out = {}
    for (label, c), vals in groups.items():
        arr = np.array(vals)
        out[(label, c)] = TauSample(c=c, psi_label=label, tau=arr[:, 1],
                                    logit_tau=arr[:, 2], delta=arr[:, 0],
                                    master_seed=master_seed)
    return out


def write_curve_csv(path, rows) -> None:
    """rows: iterables of (scenario, c, estimate, band_lo, band_hi, source);
    band entries may be None (written empty)."""
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_VERSION} curve\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for scenario, c, est, lo, hi, source in rows:
        w.writerow([scenario, int(c), _fmt(est),
                    "" if lo is None else _fmt(lo),
                    "" if hi is None else _fmt(hi), source])
    atomic_write_text(path, buf.getvalue())


def read_curve_csv(path):
    """Read curve rows; returns list of dicts. Raises SchemaError with the
    offending row number on mismatch."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {SCHEMA_VERSION} curve"):
        raise SchemaError(f"{path}: missing curve schema header")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0] != CURVE_COLUMNS:
        raise SchemaError(f"{path}: unexpected columns {rows[0] if rows else None}")
    out = []
    for i, row in enumerate(rows[1:], start=3):
        if not row:
            continue
        if len(row) != len(CURVE_COLUMNS):
            raise SchemaError(f"{path}: bad row at line {i}")
        scenario, c, est, lo, hi, source = row
        if source not in ("alg1", "direct"):
            raise SchemaError(f"{path}: bad source {source!r} at line {i}")
        out.append({
            "scenario": scenario, "c": int(c), "estimate": float(est),
            "band_lo": None if lo == "" else float(lo),
            "band_hi": None if hi == "" else float(hi), "source": source,
        })
    return out


def write_result_json(path, payload: dict) -> None:
    payload = {"schema": f"{SCHEMA_VERSION} result", **payload}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_result_json(path) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != f"{SCHEMA_VERSION} result":
        raise SchemaError(f"{path}: missing result schema tag")
    return payload


def write_manifest(out_dir, config_hash: str, master_seed: int, timings: dict,
                   files) -> None:
    """Manifest ties every artifact in the run directory to the config/seed.

    Written last; an artifact without a manifest entry means the run did not
    finish.
    """
    out_dir = Path(out_dir)
    entries = {name: file_sha256(out_dir / name) for name in files}
    payload = {
        "schema": f"{SCHEMA_VERSION} manifest",
        "config_sha256": config_hash,
        "master_seed": master_seed,
        "timings_seconds": timings,
        "files": entries,
    }
    atomic_write_text(out_dir / "manifest.json",
                      json.dumps(payload, indent=2, sort_keys=True) + "\n")
