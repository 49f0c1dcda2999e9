"""Experiment configuration: JSON schema, defaults and overrides."""

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

_MAP = {
    "type": "object",
    "required": ["kind", "d"],
    "properties": {
        "kind": {"enum": ["linear", "perturbed", "diffeo"]},
        "d": {"type": "integer", "minimum": 1},
        "c": _NUM, "a": _NUM, "phase": _NUM,
    },
    "additionalProperties": False,
}

_LAW = {
    "type": "object",
    "oneOf": [
        {"required": ["uniform"], "properties": {
            "uniform": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}},
        {"required": ["beta"], "properties": {"beta": {
            "type": "object", "required": ["a", "b"],
            "properties": {"a": _NUM, "b": _NUM, "lo": _NUM, "hi": _NUM},
            "additionalProperties": False}}},
    ],
}

ENSEMBLE_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "quad_nodes": _POS_INT,
        "atoms": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["weight", "kind", "d"],
                "properties": dict(_MAP["properties"], weight={"type": "number", "minimum": 0}),
                "additionalProperties": False,
            },
        },
        "family": {
            "type": "object",
            "required": ["kind", "d"],
            "properties": {
                "kind": {"enum": ["linear", "perturbed", "diffeo"]},
                "d": {"type": "integer", "minimum": 1},
                "c": {"oneOf": [_NUM, _LAW]},
                "a": {"oneOf": [_NUM, _LAW]},
                "phase": {"oneOf": [_NUM, _LAW]},
            },
            "additionalProperties": False,
        },
    },
    "oneOf": [{"required": ["atoms"]}, {"required": ["family"]}],
    "additionalProperties": False,
}

OBSERVABLE_SCHEMA = {
    "type": "object",
    "required": ["components"],
    "properties": {
        "components": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "cos": {"type": "object", "patternProperties": {"^[0-9]+$": _NUM},
                            "additionalProperties": False},
                    "sin": {"type": "object", "patternProperties": {"^[0-9]+$": _NUM},
                            "additionalProperties": False},
                },
                "additionalProperties": False,
            },
        },
        "alpha": _NUM,
    },
    "additionalProperties": False,
}


def _section(props):
    return {"type": "object", "properties": props, "additionalProperties": False}


_K = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]}

SCHEMA = {
    "type": "object",
    "required": ["ensemble"],
    "properties": {
        "name": {"type": "string"},
        "ensemble": ENSEMBLE_SCHEMA,
        "grid": {"type": "integer", "minimum": 16},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "K": _K,
        "K_dprime": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "observable": OBSERVABLE_SCHEMA,
        "direction": {"type": "array", "items": _NUM},
        "output": {"type": "string"},
        "moments": _section({"method": {"enum": ["quadrature", "mc", None]}, "samples": _POS_INT}),
        "stationary": _section({"tol": _NUM, "max_iter": _POS_INT, "bins": _POS_INT}),
        "memory_loss": _section({"sequences": _POS_INT, "horizon": _POS_INT, "modes": _POS_INT}),
        "coupling": _section({"sequences": _POS_INT, "horizon": _POS_INT, "fraction": _NUM}),
        "rde": _section({
            "ell": _NUM, "K": _K, "n_max": _POS_INT, "samples": _POS_INT,
            "atoms": {"type": "object", "required": ["weights", "A", "B"],
                      "properties": {k: {"type": "array", "items": _NUM} for k in ("weights", "A", "B")},
                      "additionalProperties": False},
        }),
        "correlation": _section({"n_max": _POS_INT, "samples": _POS_INT}),
        "covariance": _section({"batch_length": _POS_INT, "batches": _POS_INT}),
        "clt": _section({"n": _POS_INT, "samples": _POS_INT, "replications": _POS_INT}),
        "coboundary": _section({"m_max": _POS_INT, "n_maps": _POS_INT}),
        "multi_corr": _section({"m": {"type": "integer", "minimum": 0}, "k": _POS_INT, "t": _NUM,
                                "n_max": _POS_INT, "samples": _POS_INT, "eps": _NUM}),
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "grid": 4096,
    "alpha": 0.5,
    "K": "auto",
    "K_dprime": 1.0,
    "seed": 1,
    "observable": {"components": [{"cos": {"1": 1.0}}]},
    "moments": {"method": None, "samples": 10000},
    "stationary": {"tol": 1e-10, "max_iter": 5000, "bins": 64},
    "memory_loss": {"sequences": 10, "horizon": 50, "modes": 8},
    "coupling": {"sequences": 10000, "horizon": 1000, "fraction": 0.9},
    "rde": {"K": "auto", "n_max": 60, "samples": 100000},
    "correlation": {"n_max": 20, "samples": 100000},
    "covariance": {"batch_length": 2048, "batches": 4096},
    "clt": {"n": 4096, "samples": 10000, "replications": 1},
    "coboundary": {"m_max": 64, "n_maps": 100},
    "multi_corr": {"m": 2, "k": 2, "t": 0.1, "n_max": 30, "samples": 1000000, "eps": 0.2},
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg, overrides):
    """Apply ``key.sub=value`` strings; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        node = cfg
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(raw)
    return cfg


def validate(cfg):
    """Schema check; errors carry the JSON path of the offending field."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        schema_path = "/".join(str(p) for p in err.absolute_schema_path)
        raise ConfigError(f"config error at {path}: {err.message} (schema: {schema_path})")


def load_config(path=None, overrides=(), doc=None):
    """Read, override, validate and fill in defaults. Returns a plain dict."""
    if doc is None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    doc = apply_overrides(doc, overrides)
    validate(doc)
    cfg = _merge(DEFAULTS, doc)
    if "name" not in cfg:
        cfg["name"] = Path(path).stem if path else "config"
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def shipped_config(name):
    """Path of a config shipped with the package (``doubling``, ``mix_a``, ...)."""
    p = Path(__file__).parent / "configs" / f"{name}.json"
    if not p.exists():
        raise ConfigError(f"no shipped config named {name!r}")
    return p
