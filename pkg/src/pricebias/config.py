"""JSON run configuration: schema, validation and conversion to model objects.

A config file holds a ``market`` section plus optional per-command sections
(``point``, ``sweep``, ``limits``, ``simulate``). Command-line flags are
merged on top of the file before validation, so errors always point at a
field path such as ``market.eps``.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

import jsonschema

from .meanfield import MarketParams, ValuationSpec

SCHEMA_VERSION = 1

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_FRACTION = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

_VALUATION = {
    "type": "object",
    "properties": {
        "family": {"enum": ["exponential", "linear", "expression"]},
        "V": {"type": "number"},
        "a": {"type": "number"},
        "b": _POS,
        "expr": {"type": "string", "minLength": 1},
    },
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"family": {"const": "linear"}}, "required": ["family"]},
            "then": {"required": ["a", "b"]},
        },
        {
            "if": {"properties": {"family": {"const": "expression"}}, "required": ["family"]},
            "then": {"required": ["expr"]},
        },
    ],
}

_AXIS2 = {
    "type": "object",
    "properties": {
        "name": {"enum": ["lambda", "beta"]},
        "lo": _POS,
        "hi": _POS,
        "n": {"type": "integer", "minimum": 2},
        "scale": {"enum": ["linear", "log"]},
    },
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "market": {
            "type": "object",
            "properties": {
                "rho": _POS,
                "lambda": _POS,
                "tau": _POS,
                "eps": _POS,
                "cost": _NONNEG,
                "valuation": _VALUATION,
            },
            "additionalProperties": False,
        },
        "point": {
            "type": "object",
            "properties": {"p": _NONNEG, "q": _FRACTION, "design": {"enum": ["lr", "cr"]}},
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "axis1": {
                    "type": "object",
                    "properties": {
                        "name": {"const": "p"},
                        "lo": _NONNEG,
                        "hi": _NONNEG,
                        "n": {"type": "integer", "minimum": 2},
                    },
                    "additionalProperties": False,
                },
                "axis2": _AXIS2,
                "design": {"enum": ["lr", "cr", "both"]},
                "q": _FRACTION,
                "outputs": {
                    "type": "array",
                    "items": {"enum": ["gte", "bias", "estimator", "region", "elasticities"]},
                    "uniqueItems": True,
                },
            },
            "additionalProperties": False,
        },
        "limits": {
            "type": "object",
            "properties": {
                "p": _NONNEG,
                "ladder": {"type": "array", "items": _POS, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {
                "n_listings": {"type": "integer", "minimum": 10},
                "design": {"enum": ["global", "lr", "cr"]},
                "q": _FRACTION,
                "p0": _NONNEG,
                "p1": _NONNEG,
                "horizon": _POS,
                "burn_in": _NONNEG,
                "replications": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
            "additionalProperties": False,
        },
        "check": {
            "type": "object",
            "properties": {"price_hi": _POS},
            "additionalProperties": False,
        },
    },
    "required": ["schema_version"],
    "additionalProperties": False,
}

DEFAULT_MARKET = {
    "rho": 1.0,
    "lambda": 1.0,
    "tau": 1.0,
    "eps": 1.0,
    "cost": 1.0,
    "valuation": {"family": "exponential", "V": 5.0},
}


class ConfigError(ValueError):
    """Schema violation; ``errors`` holds ``path: message`` strings."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _format_error(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(x) for x in err.absolute_path) or "<root>"
    if err.validator == "exclusiveMinimum":
        return f"{path} must be > {err.validator_value} (got {err.instance})"
    if err.validator == "minimum":
        return f"{path} must be >= {err.validator_value} (got {err.instance})"
    if err.validator == "exclusiveMaximum":
        return f"{path} must be < {err.validator_value} (got {err.instance})"
    return f"{path}: {err.message}"


def validate(doc: dict) -> dict:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(x) for x in e.absolute_path])
    if errors:
        raise ConfigError([_format_error(e) for e in errors])
    _check_ranges(doc)
    return doc


def _check_ranges(doc: dict) -> None:
    errs = []
    sweep = doc.get("sweep", {})
    for ax in ("axis1", "axis2"):
        a = sweep.get(ax, {})
        if "lo" in a and "hi" in a and not a["lo"] < a["hi"]:
            errs.append(f"sweep.{ax} needs lo < hi (got lo={a['lo']}, hi={a['hi']})")
    sim = doc.get("simulate", {})
    if "burn_in" in sim and "horizon" in sim and not sim["burn_in"] < sim["horizon"]:
        errs.append("simulate.burn_in must be < simulate.horizon")
    if errs:
        raise ConfigError(errs)


def load(path: str | Path | None) -> dict:
    """Read a config file, or return an empty versioned document when ``path`` is None."""
    if path is None:
        return {"schema_version": SCHEMA_VERSION}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    return doc


def merge(doc: dict, overrides: dict[str, dict[str, Any]]) -> dict:
    """Overlay non-None flag values section by section (flags win over the file)."""
    out = copy.deepcopy(doc)
    for section, values in overrides.items():
        target = out.setdefault(section, {})
        for key, val in values.items():
            if val is None:
                continue
            if isinstance(val, dict):
                sub = target.setdefault(key, {})
                sub.update({k: v for k, v in val.items() if v is not None})
            else:
                target[key] = val
    return out


def valuation_from_dict(d: dict) -> ValuationSpec:
    fam = d.get("family", "exponential")
    if fam == "exponential":
        return ValuationSpec.exponential(d.get("V", 5.0))
    if fam == "linear":
        return ValuationSpec.linear(d["a"], d["b"])
    return ValuationSpec.expression(d["expr"])


def market_from_dict(d: dict | None) -> MarketParams:
    m = {**DEFAULT_MARKET, **(d or {})}
    val = m["valuation"]
    return MarketParams(
        rho=m["rho"],
        lam=m["lambda"],
        tau=m["tau"],
        eps=m["eps"],
        cost=m["cost"],
        valuation=valuation_from_dict(val),
    )
