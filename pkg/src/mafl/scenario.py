"""Scenario files: a versioned JSON document binding source data, flow and checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from mafl import flow, torus
from mafl.operators import OperatorSpec, ThetaProfile
from mafl.torus import ScalarField

SCHEMA_VERSION = 1
CHECKS = ("lemma23", "aux", "lemma31", "exp_bound", "iteration", "young", "degiorgi", "lemma41", "cutoff", "generalized", "monotonicity")

_MODE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["k", "amp"],
    "properties": {
        "k": {"type": "array", "items": {"type": "integer"}},
        "amp": {"type": "number"},
        "phase": {"type": "number"},
    },
}

_FIELD = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["zero", "constant", "trig", "log_pole"]},
        "c": {"type": "number"},
        "modes": {"type": "array", "items": _MODE},
        "b": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "center": {"type": "array", "items": {"type": "number"}},
        "distance": {"enum": ["chordal", "quotient"]},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "n", "N", "T"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "n": {"enum": [1, 2]},
        "N": {"type": "integer", "minimum": 8},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "checkpoint_every": {"type": "number", "exclusiveMinimum": 0},
        "theta": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"enum": ["log", "neg_inverse", "linear", "cube_root", "power"]}, "a": {"type": "number", "exclusiveMinimum": 0}},
        },
        "operator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"enum": ["monge_ampere", "sigma_k"]}, "k": {"type": "integer", "minimum": 1}},
        },
        "F": _FIELD,
        "phi0": _FIELD,
        "p": {"type": "number", "exclusiveMinimum": 1},
        "s_fracs": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "t0_grid": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "k_smooth": {"type": "number", "minimum": 1},
        "seed": {"type": "integer"},
        "checks": {"type": "array", "items": {"enum": list(CHECKS)}},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"high_freq": {"type": "number"}, "jensen": {"type": "number"}},
        },
        "aux_dt_max": {"type": "number", "exclusiveMinimum": 0},
        "N_cap": {"type": "number", "exclusiveMinimum": 1},
        "C_target": {"type": "number"},
        "allow_refine": {"type": "boolean"},
    },
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    N: int
    T: float
    checkpoint_every: float = 0.125
    theta: dict = field(default_factory=lambda: {"kind": "log"})
    operator: dict = field(default_factory=lambda: {"kind": "monge_ampere"})
    F: dict = field(default_factory=lambda: {"kind": "zero"})
    phi0: dict = field(default_factory=lambda: {"kind": "zero"})
    p: float = 4.0
    s_fracs: tuple = (0.0, 0.5)
    t0_grid: tuple = (0.0,)
    k_smooth: float = 100.0
    seed: int = 0
    checks: tuple = ("lemma23",)
    tolerances: dict = field(default_factory=dict)
    aux_dt_max: float = 1.0 / 256
    N_cap: float = 10.0
    C_target: float = 10.0
    allow_refine: bool = True
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            jsonschema.validate(doc, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ScenarioError(f"invalid scenario: {exc.message}") from exc
        doc = dict(doc)
        for key in ("s_fracs", "t0_grid", "checks"):
            if key in doc:
                doc[key] = tuple(doc[key])
        sc = cls(**doc)
        sc.validate()
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self):
        if self.N & (self.N - 1):
            raise ScenarioError("N must be a power of two")
        if self.operator.get("kind") == "sigma_k" and not 1 <= self.operator.get("k", 0) <= self.n:
            raise ScenarioError("sigma_k needs 1 <= k <= n")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("s_fracs", "t0_grid", "checks"):
            d[key] = list(d[key])
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def flow_hash(self) -> str:
        """Hash of the fields that determine the main flow; keys checkpoint reuse."""
        d = self.to_dict()
        keep = {k: d[k] for k in ("n", "N", "T", "checkpoint_every", "theta", "operator", "F", "phi0", "p", "schema_version")}
        keep["high_freq"] = self.tolerances.get("high_freq")
        return hashlib.sha256(json.dumps(keep, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def refined(self) -> "Scenario":
        d = self.to_dict()
        d["N"] = 2 * self.N
        d["name"] = f"{self.name}@N{2 * self.N}"
        d["allow_refine"] = False
        return Scenario.from_dict(d)

    # ---- objects

    def grid(self) -> torus.TorusGrid:
        return torus.make_grid(self.n, self.N)

    def theta_profile(self) -> ThetaProfile:
        return ThetaProfile(self.theta["kind"], self.theta.get("a", 1.0))

    def operator_spec(self) -> OperatorSpec:
        return OperatorSpec(self.operator["kind"], self.n, self.operator.get("k"))

    def enabled(self, check: str) -> bool:
        return check in self.checks


def _trig(grid, modes) -> np.ndarray:
    coords = grid.coords()
    out = np.zeros(grid.shape)
    for m in modes:
        k = m["k"]
        if len(k) != grid.ndim_real:
            raise ScenarioError(f"mode {k} needs {grid.ndim_real} integer wavenumbers")
        if max(abs(int(v)) for v in k) >= grid.N // 2:
            raise ScenarioError(f"mode {k} is not resolved on N={grid.N}")
        arg = sum(2 * np.pi * kv * x for kv, x in zip(k, coords)) + m.get("phase", 0.0)
        out = out + m["amp"] * np.cos(arg)
    return out


def field_values(spec: dict, grid) -> np.ndarray:
    kind = spec["kind"]
    if kind == "zero":
        return np.zeros(grid.shape)
    if kind == "constant":
        return np.full(grid.shape, float(spec.get("c", 0.0)))
    if kind == "trig":
        return _trig(grid, spec.get("modes", []))
    if kind == "log_pole":
        center = spec.get("center", [0.5] * grid.ndim_real)
        dist = torus.torus_distance if spec.get("distance", "chordal") == "quotient" else torus.chordal_distance
        d = dist(grid, center)
        delta = spec["delta"]
        # smooth version of max(delta, d)
        return -spec["b"] * np.log(np.sqrt(d * d + delta * delta))
    raise ScenarioError(f"unknown field kind {kind!r}")


def generate_F(spec: dict, grid, p: float, theta: ThetaProfile | None = None) -> flow.SourceData:
    """Source field with its entropy, ``int nF`` and the K values."""
    F = ScalarField(grid, field_values(spec, grid))
    try:
        return flow.make_source(F, p, theta)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def initial_potential(sc: Scenario, grid) -> ScalarField:
    return ScalarField(grid, field_values(sc.phi0, grid))
