"""File writers: CSV with comment headers and structured (JSON) documents.

Every file records the artifact version, preset, seed, step size, path count,
terminal-value convention and random generator. Numbers in CSV use 17
significant digits so repeated runs can be compared byte for byte.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .hjb import TERMINAL_CONVENTION
from .simulate import GENERATOR_ID


def base_meta(preset: str, seed=None, dt=None, n_paths=None, **extra) -> dict:
    meta = {"artifact_version": __version__, "preset": preset, "seed": seed, "dt": dt,
            "n_paths": n_paths, "terminal_convention": TERMINAL_CONVENTION,
            "generator": GENERATOR_ID}
    meta.update(extra)
    return meta


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_structured(payload: dict, meta: dict) -> str:
    return json.dumps({"meta": meta, **payload}, sort_keys=True, indent=2, default=_plain) + "\n"


def write_structured(path, payload: dict, meta: dict) -> Path:
    path = Path(path)
    path.write_text(dumps_structured(payload, meta))
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, columns, rows, meta: dict) -> Path:
    path = Path(path)
    lines = [f"# {k}: {json.dumps(meta[k], default=_plain)}" for k in sorted(meta)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Read a file written by :func:`write_csv`; returns (meta, columns, array)."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        else:
            body.append(line)
    columns = body[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]]).reshape(-1, len(columns))
    return meta, columns, data


def write_path_csv(path, p, meta: dict) -> Path:
    """One trajectory with columns t, A, I, u, absorbed."""
    rows = [(t, a, i, u, ab) for (t, a, i, u), ab in zip(p.samples, p.absorbed)]
    return write_csv(path, ["t", "A", "I", "u", "absorbed"], rows, meta)


def write_ensemble_csv(path, stats, meta: dict) -> Path:
    rows = zip(stats.times, stats.mean_a, stats.var_a, stats.mean_i, stats.absorbed_fraction_t)
    return write_csv(path, ["t", "mean_A", "var_A", "mean_I", "absorbed_fraction"], rows, meta)


def flatten(payload, prefix: str = "") -> dict:
    """Nested dicts and lists to dotted keys, e.g. ``levels.2.passed``."""
    out = {}
    items = payload.items() if isinstance(payload, dict) else enumerate(payload)
    for k, v in items:
        key = f"{prefix}.{k}" if prefix else str(k)
        if isinstance(v, (dict, list, tuple)) and len(v):
            out.update(flatten(v, key))
        else:
            out[key] = _plain(v) if isinstance(v, (np.ndarray, np.generic)) else v
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, int, float, np.number)):
        return _fmt(v)
    return json.dumps(v, default=_plain)


def write_summary(stem, payload: dict, meta: dict, fmt: str = "structured") -> Path:
    """Write ``payload`` as ``stem.json`` or, for ``fmt='csv'``, as a key,value ``stem.csv``."""
    stem = Path(stem)
    if fmt == "structured":
        return write_structured(stem.with_suffix(".json"), payload, meta)
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    path = stem.with_suffix(".csv")
    lines = [f"# {k}: {json.dumps(meta[k], default=_plain)}" for k in sorted(meta)]
    lines.append("key,value")
    flat = flatten(payload)
    lines += [f"{k},{_cell(flat[k])}" for k in sorted(flat)]
    path.write_text("\n".join(lines) + "\n")
    return path
