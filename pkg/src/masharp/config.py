"""Experiment configuration files: JSON schema, loading and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError, GeometryError, SpecError
from .geometry import ConvexDomain
from .solver import ProblemSpec, SolverConfig

SUITES = ("growth", "pogorelov", "integrability", "slicing", "hadamard", "degenerate", "oracle_crosscheck")

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3}
_BAND = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

DOMAIN_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["box", "ball", "polytope"]},
        "intervals": {"type": "array", "items": _BAND, "minItems": 2, "maxItems": 3},
        "center": _VEC,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "halfspaces": {
            "type": "array",
            "minItems": 3,
            "items": {
                "type": "object",
                "required": ["normal", "offset"],
                "properties": {"normal": _VEC, "offset": _NUM},
                "additionalProperties": False,
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "box"}}}, "then": {"required": ["intervals"]}},
        {"if": {"properties": {"kind": {"const": "ball"}}}, "then": {"required": ["center", "radius"]}},
        {"if": {"properties": {"kind": {"const": "polytope"}}}, "then": {"required": ["halfspaces"]}},
    ],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["problem", "grid", "suites"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "claim": {"type": "string"},
        "problem": {
            "type": "object",
            "required": ["domain", "f", "lambda", "Lambda"],
            "properties": {
                "domain": DOMAIN_SCHEMA,
                "f": {"type": "string"},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "Lambda": {"type": "number", "exclusiveMinimum": 0},
                "s": _NUM,
                "gamma": _NUM,
                "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
                "hs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "mu1": _NUM,
                "mu2": _NUM,
                "exact": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 9}, "minItems": 1},
        "solver": {
            "type": "object",
            "properties": {
                "stencil_width": {"enum": [1, 2, 3]},
                "newton_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_newton_iters": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "omega": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_outer_iters": {"type": "integer", "minimum": 1},
                "eps_floor": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "suites": {"type": "array", "items": {"enum": list(SUITES)}, "minItems": 1, "uniqueItems": True},
        "thresholds": {"type": "object"},
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}, "uniqueItems": True},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    name: str
    problem: ProblemSpec
    grid: list[int]
    solver: SolverConfig
    suites: list[str]
    thresholds: dict = field(default_factory=dict)
    output_dir: str | None = None
    formats: tuple[str, ...] = ("json", "csv")
    exact: str | None = None
    claim: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def threshold(self, suite: str) -> dict:
        return dict(self.thresholds.get(suite, {}))


def validate(doc: dict) -> None:
    """Raise :class:`ConfigError` naming the first schema violation."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def from_dict(doc: dict, name: str = "experiment") -> ExperimentConfig:
    validate(doc)
    grid = list(doc["grid"])
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid list must be strictly increasing")
    p = doc["problem"]
    try:
        domain = ConvexDomain.from_dict(p["domain"])
        kwargs = {k: p[k] for k in ("s", "gamma", "hs", "mu1", "mu2", "deltas") if k in p}
        spec = ProblemSpec(domain, p["f"], p["lambda"], p["Lambda"], **kwargs)
    except (GeometryError, SpecError, KeyError) as exc:
        raise ConfigError(f"problem block: {exc}") from None
    solver = SolverConfig.for_dim(domain.dim)
    for k, v in doc.get("solver", {}).items():
        setattr(solver, k, v)
    suites = list(doc["suites"])
    if "slicing" in suites and domain.kind != "box":
        raise ConfigError("the slicing suite needs a box domain")
    if "degenerate" in suites and spec.s == 0:
        raise ConfigError("the degenerate suite needs s != 0")
    if "oracle_crosscheck" in suites and domain.dim != 2:
        raise ConfigError("the oracle cross-check is planar")
    out = doc.get("output", {})
    return ExperimentConfig(
        name=doc.get("name", name),
        problem=spec,
        grid=grid,
        solver=solver,
        suites=suites,
        thresholds=doc.get("thresholds", {}),
        output_dir=out.get("dir"),
        formats=tuple(out.get("formats", ("json", "csv"))),
        exact=p.get("exact"),
        claim=doc.get("claim", ""),
        raw=doc,
    )


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(doc, name=path.stem)
