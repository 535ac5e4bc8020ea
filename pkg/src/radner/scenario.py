"""Scenario files: JSON documents describing a market and its trajectory model."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import jsonschema

from .equilibrium import DEFAULT_GRID, MarketSpec
from .errors import SpecError
from .ranking import AgentSpec
from .trajectory import ConstantKappa, TabulatedGamma, TabulatedKappa, TrajectoryModel, Twap

GRID_ENV = "RADNER_GRID"

_POINTS = {"type": "array", "items": {"type": "number"}, "minItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["horizon", "lambda", "supply", "agents", "kappa", "gamma"],
    "properties": {
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "supply": {"type": "number"},
        "dividend_mean": {"type": "number"},
        "agents": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["target", "endowment"],
                "properties": {"target": {"type": "number"}, "endowment": {"type": "number"}},
                "additionalProperties": False,
            },
        },
        "kappa": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["constant", "table"]},
                "value": {"type": "number", "exclusiveMinimum": 0},
                "points": _POINTS,
            },
            "allOf": [
                {"if": {"properties": {"type": {"const": "constant"}}}, "then": {"required": ["value"]}},
                {"if": {"properties": {"type": {"const": "table"}}}, "then": {"required": ["points"]}},
            ],
            "additionalProperties": False,
        },
        "gamma": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["twap", "table"]}, "points": _POINTS},
            "if": {"properties": {"type": {"const": "table"}}},
            "then": {"required": ["points"]},
            "additionalProperties": False,
        },
        "grid": {"type": "integer", "minimum": 2},
    },
    "additionalProperties": False,
}


class ScenarioError(SpecError):
    """Invalid scenario input; ``pointer`` is the JSON pointer of the offending value."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _error_pointer(err: jsonschema.ValidationError) -> str:
    parts = list(err.absolute_path)
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            parts.append(missing[0])
    return _pointer(parts)


@dataclass(frozen=True)
class Scenario:
    spec: MarketSpec
    model: TrajectoryModel
    grid: Optional[int]
    document: dict

    def grid_size(self, override: Optional[int] = None) -> int:
        """Grid size: explicit override, then the file, then $RADNER_GRID, then the default."""
        if override is not None:
            return int(override)
        if self.grid is not None:
            return self.grid
        env = os.environ.get(GRID_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ScenarioError(f"{GRID_ENV}={env!r} is not an integer") from None
            if n < 2:
                raise ScenarioError(f"{GRID_ENV} must be at least 2")
            return n
        return DEFAULT_GRID


def _finite_numbers(doc, path=()):
    if isinstance(doc, float) and (doc != doc or doc in (float("inf"), float("-inf"))):
        raise ScenarioError("non-finite number", _pointer(path))
    if isinstance(doc, dict):
        for k, v in doc.items():
            _finite_numbers(v, path + (k,))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            _finite_numbers(v, path + (i,))


def parse_scenario(doc) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ScenarioError(err.message, _error_pointer(err))
    _finite_numbers(doc)
    horizon = float(doc["horizon"])
    kdoc, gdoc = doc["kappa"], doc["gamma"]
    try:
        kappa = ConstantKappa(float(kdoc["value"])) if kdoc["type"] == "constant" else TabulatedKappa(tuple(kdoc["points"]))
    except SpecError as exc:
        raise ScenarioError(str(exc), "/kappa") from None
    try:
        gamma = Twap() if gdoc["type"] == "twap" else TabulatedGamma(tuple(gdoc["points"]))
    except SpecError as exc:
        raise ScenarioError(str(exc), "/gamma") from None
    agents = tuple(AgentSpec(float(a["target"]), float(a["endowment"])) for a in doc["agents"])
    spec = MarketSpec(
        horizon=horizon,
        lam=float(doc["lambda"]),
        supply=float(doc["supply"]),
        agents=agents,
        dividend_mean=float(doc.get("dividend_mean", 0.0)),
    )
    model = TrajectoryModel(horizon, kappa, gamma)
    return Scenario(spec, model, doc.get("grid"), doc)


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
    return parse_scenario(doc)
