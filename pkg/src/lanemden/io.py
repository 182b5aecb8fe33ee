"""Serialization of profiles, constants, fields and branch tables.

JSON is written with sorted keys and ``repr`` floats so identical inputs
give byte-identical files.  Bulk arrays go to CSV, or to a flat
little-endian float64 file with a JSON sidecar describing its layout.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "canonical_json", "content_hash", "write_json", "read_json",
    "write_profile", "read_profile_csv", "write_constants", "write_meridian",
    "read_meridian", "write_axis_csv", "write_table_csv",
]


def _plain(obj):
    """Convert numpy scalars/arrays and tuples to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)            # "nan", "inf": JSON has no literal for these
    return obj


def canonical_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def content_hash(obj):
    """SHA-256 of the canonical JSON form (compact separators)."""
    text = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def write_json(path, obj, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(obj)
    if meta:
        doc["meta"] = dict(meta)
    path.write_text(canonical_json(doc))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _write_csv(path, header, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


def write_profile(path, profile, tails=None, meta=None):
    """Profile CSV ``(r, U, V, dU, dV, Psi0, Phi0)`` with a JSON header next to it."""
    path = Path(path)
    _write_csv(path, ["r", "U", "V", "dU", "dV", "Psi0", "Phi0"],
               [profile.r, profile.U, profile.V, profile.dU, profile.dV,
                profile.Psi0, profile.Phi0])
    header = {"exponents": profile.exps.as_dict(), "beta": profile.beta,
              "beta_bracket": list(profile.beta_bracket), "r_match": profile.r_match,
              "tail_b": profile.tail_b, "tail_c2": profile.tail_c2,
              "match_error": profile.match_error, "n_samples": len(profile.r),
              "csv": path.name}
    if tails is not None:
        header["tails"] = tails.as_dict()
    write_json(path.with_suffix(".json"), header, meta)
    return path


def read_profile_csv(path):
    """Columns of a profile CSV as a dict of arrays."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.asarray(data[name]) for name in data.dtype.names}


def constants_key(N, p):
    return f"N={int(N)},p={float(p)!r}"


def write_constants(path, constants_list, meta=None):
    """Constants JSON keyed by ``(N, p)``; merges with an existing file."""
    path = Path(path)
    doc = read_json(path) if path.exists() else {}
    doc.pop("meta", None)
    for c in constants_list:
        d = c.as_dict() if hasattr(c, "as_dict") else dict(c)
        doc[constants_key(d["N"], d["p"])] = d
    return write_json(path, doc, meta)


def write_meridian(path, field, meta=None):
    """Flat float64 (little-endian, C order over ``(x, rho)``) plus JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vals = np.ascontiguousarray(field.values, dtype="<f8")
    path.write_bytes(vals.tobytes())
    g = field.grid
    side = {"file": path.name, "dtype": "float64", "byte_order": "little", "order": "C",
            "shape": list(vals.shape), "axes": ["x", "rho"], "h": g.h,
            "x0": float(g.x[0]), "rho0": float(g.rho[0]),
            "domain": g.domain.as_dict(),
            "inside_nodes": int(np.count_nonzero(g.inside))}
    write_json(path.with_suffix(".json"), side, meta)
    return path


def read_meridian(path):
    """Array and sidecar written by :func:`write_meridian`."""
    path = Path(path)
    side = read_json(path.with_suffix(".json"))
    vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(side["shape"])
    return vals, side


def write_axis_csv(path, x, columns):
    """Axis samples: ``x`` followed by named columns."""
    names = list(columns)
    return _write_csv(path, ["x"] + names, [x] + [columns[n] for n in names])


def write_table_csv(path, rows):
    """A list of flat dicts with shared keys, in insertion order."""
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0])
    return _write_csv(path, keys, [[r[k] for r in rows] for k in keys])
