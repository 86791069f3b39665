"""Experiment configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1
KINDS = ("homogenize", "nonlocal", "properties")

_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "structure": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["rigid_spring", "elastic_spring"]},
                "n": {"enum": [2, 3]},
                "m": {"type": "integer", "minimum": 1},
                "interface": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "ks": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "integrand": {"type": "object"},
        "A": {
            "type": "object",
            "properties": {
                "matrices": {"type": "array", "items": _matrix},
                "count": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "nonlocal": {
            "type": "object",
            "properties": {
                "omega": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                "eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                        "minItems": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "gamma": _num,
                "quad_nodes": {"type": "integer", "minimum": 8},
                "u1": {"type": "object"},
                "u2": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "properties": {
            "type": "object",
            "properties": {
                "k": {"type": "integer", "minimum": 1},
                "samples": {"type": "integer", "minimum": 2},
                "sphere_samples": {"type": "integer", "minimum": 1},
                "growth_samples": {"type": "integer", "minimum": 1},
                "gauge_trials": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {"cg_rtol": _num, "grad_tol": _num, "subadditivity": _num},
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
        "output": {"type": "object", "properties": {"dir": {"type": "string"}},
                   "additionalProperties": False},
    },
}

_motion = {"type": "object", "properties": {"a": _vec3, "b": _vec3,
                                            "b_slope": _matrix},
           "additionalProperties": False}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    structure: dict = field(default_factory=lambda: {"kind": "rigid_spring", "n": 2})
    ks: list = field(default_factory=lambda: [1, 2, 4])
    integrand: dict = field(default_factory=lambda: {"p": 2.0})
    A: dict = field(default_factory=lambda: {"count": 10})
    nonlocal_: dict = field(default_factory=dict)
    properties: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    output: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        validate(d)
        d = json.loads(json.dumps(d))
        if "nonlocal" in d:
            d["nonlocal_"] = d.pop("nonlocal")
        cfg = cls(**d)
        cfg._check_semantics()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nonlocal"] = d.pop("nonlocal_")
        return {k: d[k] for k in sorted(d)}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def _check_semantics(self):
        if self.kind == "homogenize" and not self.ks:
            raise ConfigError("homogenize needs a nonempty ks list")
        if self.kind == "nonlocal":
            if not self.nonlocal_.get("eps"):
                raise ConfigError("nonlocal needs a nonempty eps list")
            for key in ("u1", "u2"):
                if key in self.nonlocal_:
                    jsonschema.validate(self.nonlocal_[key], _motion)
            eta = self.nonlocal_.get("eta", 1.0)
            for e in self.nonlocal_["eps"]:
                h = round(eta / e)
                if h < 1 or abs(h * e - eta) > 1e-9 * eta:
                    raise ConfigError(f"eps={e} is incompatible with eta={eta}")


def validate(d: dict) -> None:
    try:
        jsonschema.validate(d, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message) from exc


def write_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(cfg.dumps() + "\n")
    return path
