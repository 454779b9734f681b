"""Run configuration: JSON schema, defaults and field generators."""

from __future__ import annotations

import copy
import json

import jsonschema
import numpy as np

from .grid import Grid, TensorField, build_grid, flat_metric, random_smooth_fields
from .io import read_field
from .operators import OperatorSpec

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigError",
    "DEFAULT_CONFIG",
    "load_config",
    "validate_config",
    "apply_overrides",
    "make_grid",
    "make_operator",
    "make_field",
]


class ConfigError(ValueError):
    """The configuration does not match the schema."""


_PHI = {
    "oneOf": [
        {"type": "object", "required": ["kind", "k"], "additionalProperties": False,
         "properties": {"kind": {"const": "power"}, "k": {"type": "number"}}},
        {"type": "object", "required": ["kind", "a", "b"], "additionalProperties": False,
         "properties": {"kind": {"const": "affine_exp"}, "a": {"type": "number"},
                        "b": {"type": "number"}}},
        {"type": "object", "required": ["kind", "coeffs"], "additionalProperties": False,
         "properties": {"kind": {"const": "polynomial"},
                        "coeffs": {"type": "array", "items": {"type": "number"},
                                   "minItems": 1}}},
    ]
}

_OPERATOR = {
    "oneOf": [
        {"type": "object", "required": ["family"], "additionalProperties": False,
         "properties": {"family": {"const": "identity"}}},
        {"type": "object", "required": ["family", "phi"], "additionalProperties": False,
         "properties": {"family": {"enum": ["conformal", "curvature"]}, "phi": _PHI}},
        {"type": "object", "required": ["family"], "additionalProperties": False,
         "properties": {"family": {"const": "sobolev"},
                        "p": {"type": "integer", "minimum": 1},
                        "cg_tol": {"type": "number", "exclusiveMinimum": 0},
                        "cg_maxiter": {"type": "integer", "minimum": 1}}},
    ]
}

# seeds are mandatory for the random generator
_FIELD = {
    "oneOf": [
        {"type": "object", "required": ["generator"], "additionalProperties": False,
         "properties": {"generator": {"const": "flat"},
                        "scale": {"type": "number", "exclusiveMinimum": 0}}},
        {"type": "object", "required": ["generator"], "additionalProperties": False,
         "properties": {"generator": {"const": "zero"}}},
        {"type": "object", "required": ["generator", "seed"], "additionalProperties": False,
         "properties": {"generator": {"const": "random"},
                        "seed": {"type": "integer", "minimum": 0},
                        "amplitude": {"type": "number", "minimum": 0, "maximum": 0.5},
                        "max_mode": {"type": "integer", "minimum": 1},
                        "scale": {"type": "number"}}},
        {"type": "object", "required": ["generator", "factor"], "additionalProperties": False,
         "properties": {"generator": {"const": "scaled_metric"},
                        "factor": {"type": "number"}}},
        {"type": "object", "required": ["generator", "path"], "additionalProperties": False,
         "properties": {"generator": {"const": "file"}, "path": {"type": "string"}}},
    ]
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object", "required": ["dim", "shape", "lengths"],
            "additionalProperties": False,
            "properties": {
                "dim": {"enum": [1, 2]},
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 8},
                          "minItems": 1, "maxItems": 2},
                "lengths": {"type": "array",
                            "items": {"type": "number", "exclusiveMinimum": 0},
                            "minItems": 1, "maxItems": 2},
            },
        },
        "operator": _OPERATOR,
        "initial_metric": _FIELD,
        "initial_velocity": _FIELD,
        "target_metric": _FIELD,
        "direction_h": _FIELD,
        "direction_k": _FIELD,
        "integrator": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "minimum": 0},
                "scheme": {"enum": ["rk4", "rk4_adaptive"]},
                "spd_floor": {"type": "number", "exclusiveMinimum": 0},
                "snapshots": {"type": "boolean"},
            },
        },
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "shooting": {"type": "number", "exclusiveMinimum": 0},
                "curl": {"type": "number", "exclusiveMinimum": 0},
                "energy_drift": {"type": "number", "exclusiveMinimum": 0},
                "quadrature": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "outputs": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

DEFAULT_CONFIG = {
    "grid": {"dim": 2, "shape": [16, 16], "lengths": [1.0, 1.0]},
    "operator": {"family": "identity"},
    "initial_metric": {"generator": "random", "seed": 0, "amplitude": 0.2, "max_mode": 1},
    "initial_velocity": {"generator": "random", "seed": 1, "amplitude": 0.2, "max_mode": 1},
    "target_metric": {"generator": "random", "seed": 2, "amplitude": 0.2, "max_mode": 1},
    "direction_h": {"generator": "random", "seed": 3, "amplitude": 0.2, "max_mode": 1},
    "direction_k": {"generator": "random", "seed": 4, "amplitude": 0.2, "max_mode": 1},
    "integrator": {"dt": 0.01, "T": 1.0, "scheme": "rk4", "spd_floor": 1e-6,
                   "snapshots": False},
    "tolerances": {"shooting": 1e-8, "curl": 1e-2, "quadrature": 1e-8},
    "outputs": {"dir": "out"},
}

# order in which --seed S assigns S, S+1, ... to the random generators
SEEDED_FIELDS = ("initial_metric", "initial_velocity", "target_metric",
                 "direction_h", "direction_k")


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    g = cfg.get("grid")
    if g is not None and not (len(g["shape"]) == len(g["lengths"]) == g["dim"]):
        raise ConfigError("grid: shape and lengths need one entry per dimension")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k in ("operator",) or k in SEEDED_FIELDS:
            out[k] = copy.deepcopy(v)  # replaced whole: the variants differ in keys
        elif isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None) -> dict:
    """Validated configuration, user values layered over the defaults."""
    user = {}
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    validate_config(user)
    cfg = _merge(DEFAULT_CONFIG, user)
    validate_config(cfg)
    return cfg


def apply_overrides(cfg: dict, grid: int | None = None, seed: int | None = None,
                    out: str | None = None) -> dict:
    """Command-line ``--grid``, ``--seed`` and ``--out`` over a configuration."""
    cfg = copy.deepcopy(cfg)
    if grid is not None:
        cfg["grid"]["shape"] = [int(grid)] * cfg["grid"]["dim"]
    if seed is not None:
        for i, key in enumerate(SEEDED_FIELDS):
            if cfg[key].get("generator") == "random":
                cfg[key]["seed"] = int(seed) + i
    if out is not None:
        cfg["outputs"]["dir"] = out
    validate_config(cfg)
    return cfg


def make_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    return build_grid(g["dim"], g["shape"], g["lengths"])


def make_operator(cfg: dict) -> OperatorSpec:
    return OperatorSpec.from_dict(cfg["operator"])


def make_field(spec: dict, grid: Grid, metric: TensorField | None = None,
               role: str = "sym2") -> TensorField:
    """Build a field from a generator spec.

    ``role`` is ``'metric'`` or ``'sym2'``; a random metric is the ``g``
    output of :func:`random_smooth_fields` and a random ``sym2`` field its
    ``h`` output.
    """
    gen = spec["generator"]
    if gen == "flat":
        return flat_metric(grid, spec.get("scale", 1.0))
    if gen == "zero":
        return TensorField(grid, np.zeros((grid.dim, grid.dim) + grid.shape), "dd")
    if gen == "random":
        g, h = random_smooth_fields(grid, spec["seed"], spec.get("amplitude", 0.2),
                                    spec.get("max_mode", 1))
        out = g if role == "metric" else h
        return out * spec.get("scale", 1.0) if "scale" in spec else out
    if gen == "scaled_metric":
        if metric is None:
            raise ConfigError("scaled_metric needs an initial metric")
        return metric * spec["factor"]
    if gen == "file":
        f = read_field(spec["path"], "metric" if role == "metric" else None)
        if f.grid != grid:
            raise ConfigError(f"{spec['path']}: grid differs from the configured grid")
        return f
    raise ConfigError(f"unknown generator {gen!r}")
