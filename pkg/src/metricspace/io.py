"""Field files, JSON reports and CSV curves.

Field files are JSON objects

    {"version": ..., "dim": n, "shape": [...], "lengths": [...],
     "kind": "metric" | "sym2" | "scalar" | "vector",
     "components": {"g_00": [...], "g_01": [...], "g_11": [...]}}

with row-major component arrays written with 17 significant digits, so a
write followed by a read reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from . import __version__
from .grid import Grid, GridError, TensorField, build_grid, check_spd

__all__ = [
    "FIELD_KINDS",
    "component_names",
    "field_to_dict",
    "field_from_dict",
    "write_field",
    "read_field",
    "write_json",
    "read_json",
    "write_csv",
    "format_float",
    "dumps",
]

FIELD_KINDS = ("metric", "sym2", "scalar", "vector")


def format_float(x: float) -> str:
    """Decimal text with 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x!r}")
    return f"{x:.16e}"


def component_names(kind: str, n: int) -> list:
    if kind in ("metric", "sym2"):
        return [f"g_{a}{b}" for a in range(n) for b in range(a, n)]
    if kind == "scalar":
        return ["f"]
    if kind == "vector":
        return [f"v_{a}" for a in range(n)]
    raise GridError(f"unknown field kind {kind!r}")


def _slots(kind: str) -> str:
    return {"metric": "dd", "sym2": "dd", "scalar": "", "vector": "u"}[kind]


def field_to_dict(field: TensorField, kind: str) -> dict:
    """Component arrays of ``field`` keyed by name (values stay numpy)."""
    grid = field.grid
    if field.slots != _slots(kind):
        raise GridError(f"a {kind} field needs slots {_slots(kind)!r}")
    n = grid.dim
    if kind in ("metric", "sym2"):
        comps = {f"g_{a}{b}": field.data[a, b] for a in range(n) for b in range(a, n)}
    elif kind == "scalar":
        comps = {"f": field.data}
    else:
        comps = {f"v_{a}": field.data[a] for a in range(n)}
    return {"version": __version__, "dim": n, "shape": list(grid.shape),
            "lengths": [float(L) for L in grid.lengths], "kind": kind,
            "components": {k: np.asarray(v).ravel() for k, v in comps.items()}}


def field_from_dict(d: dict) -> tuple:
    """Inverse of :func:`field_to_dict`; returns ``(field, kind)``."""
    try:
        grid = build_grid(int(d["dim"]), d["shape"], d["lengths"])
        kind = d["kind"]
        comps = d["components"]
    except KeyError as exc:
        raise GridError(f"field file is missing {exc.args[0]!r}") from None
    names = component_names(kind, grid.dim)
    if sorted(comps) != sorted(names):
        raise GridError(f"expected components {names}, got {sorted(comps)}")
    arrays = {}
    for k in names:
        a = np.asarray(comps[k], dtype=float)
        if a.size != grid.size:
            raise GridError(f"component {k} has {a.size} values, expected {grid.size}")
        arrays[k] = a.reshape(grid.shape)
    n = grid.dim
    if kind in ("metric", "sym2"):
        data = np.zeros((n, n) + grid.shape)
        for a in range(n):
            for b in range(a, n):
                data[a, b] = data[b, a] = arrays[f"g_{a}{b}"]
    elif kind == "scalar":
        data = arrays["f"]
    else:
        data = np.stack([arrays[f"v_{a}"] for a in range(n)])
    field = TensorField(grid, data, _slots(kind))
    if kind == "metric":
        try:
            check_spd(field)
        except ValueError as exc:
            raise GridError(str(exc)) from None
    return field, kind


def dumps(obj) -> str:
    """``json.dumps`` with every float at 17 significant digits."""
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()]
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            # JSON has no infinity; lengths may legitimately diverge
            return '"inf"' if x > 0 else '"-inf"'
        return format_float(x)
    if obj is None:
        return "null"
    return json.dumps(obj)


def write_json(path, obj: dict) -> None:
    """Write a report with an embedded version string."""
    obj = dict(obj)
    obj.setdefault("version", __version__)
    _write_text(path, dumps(obj) + "\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_field(path, field: TensorField, kind: str) -> None:
    _write_text(path, dumps(field_to_dict(field, kind)) + "\n")


def read_field(path, kind: str | None = None) -> TensorField:
    field, got = field_from_dict(read_json(path))
    if kind is not None and got != kind:
        raise GridError(f"{path}: expected a {kind} field, found {got}")
    return field


def write_csv(path, header, rows) -> None:
    """Comma-separated curve preceded by a ``# metricspace <version>`` line."""
    _write_text(path, "")
    with open(path, "w", newline="") as fh:
        fh.write(f"# metricspace {__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_cell(x) for x in row])


def _csv_cell(x):
    if isinstance(x, (float, np.floating)):
        # a weight may overflow near r = 0; keep the row readable by float()
        return format_float(x) if math.isfinite(x) else str(float(x))
    return x


def _write_text(path, text: str) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def grid_from_spec(spec: dict) -> Grid:
    """``{"dim", "shape", "lengths"}`` to a :class:`Grid`."""
    return build_grid(int(spec["dim"]), spec["shape"], spec["lengths"])
