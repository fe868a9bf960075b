"""CSV/JSON serialization shared by fields, residuals and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text: sorted keys, non-finite floats as strings."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    text = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def grid_csv(grid, columns: dict, axis_names=None) -> str:
    """One row per space-time node: t, coordinates, then each named column."""
    times = grid.times()
    mesh = grid.mesh()
    names = list(axis_names or [f"x{i}" for i in range(grid.ndim)])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + names + list(columns))
    flat_space = [m.ravel() for m in mesh]
    arrays = [np.broadcast_to(np.asarray(v), (grid.nt + 1,) + grid.shape).reshape(grid.nt + 1, -1)
              for v in columns.values()]
    for j, t in enumerate(times):
        for i in range(flat_space[0].size):
            row = [repr(float(t))] + [repr(float(c[i])) for c in flat_space]
            for arr in arrays:
                v = arr[j, i]
                row.append(str(int(v)) if isinstance(v, (bool, np.bool_)) else repr(float(v)))
            writer.writerow(row)
    return buf.getvalue()


def field_dict(field) -> dict:
    """JSON grid schema for a ScalarField."""
    return {"grid": field.grid.to_dict(), "model": field.model.to_dict(),
            "provenance": field.provenance, "meta": field.meta,
            "axes": [a.tolist() for a in field.grid.axes()],
            "times": field.times.tolist(), "values": field.values.tolist()}
