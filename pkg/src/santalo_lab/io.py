"""Experiment configs (JSON with a published schema) and tuple files."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from .costs import FAMILIES, CostSpec
from .geometry import GridFunction, ReferenceMeasure, StarBody
from .reports import SCHEMA_VERSION
from .transforms import BodyTuple, FunctionTuple

__all__ = [
    "KINDS",
    "CONFIG_SCHEMA",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "cost_from_config",
    "measure_from_config",
    "save_function_tuple",
    "load_function_tuple",
    "save_body_tuple",
    "load_body_tuple",
]

KINDS = ("verify-functional", "verify-sets", "transport", "sphere", "symmetrize", "exponents")

_MEASURE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["lebesgue", "gaussian", "exponential-product", "power"]},
        "r": {"type": "number", "minimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "santalo-lab experiment config",
    "type": "object",
    "properties": {
        "schema_version": {"type": "string"},
        "builtin": {"type": "string"},
        "name": {"type": "string"},
        "kind": {"enum": list(KINDS)},
        "cost": {
            "type": "object",
            "properties": {
                "family": {"enum": [f for f in FAMILIES if f != "custom"]},
                "N": {"type": "integer", "minimum": 2},
                "n": {"type": "integer", "minimum": 1, "maximum": 2},
                "params": {"type": "object"},
            },
            "required": ["family", "N", "n"],
            "additionalProperties": False,
        },
        "measures": {"type": "array", "items": _MEASURE},
        "grid": {
            "type": "object",
            "properties": {
                "half_width": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 3},
                "directions": {"type": "integer", "minimum": 8},
            },
            "additionalProperties": False,
        },
        "source": {
            "type": "object",
            "properties": {
                "type": {"enum": ["builtin", "file", "random"]},
                "name": {"type": "string"},
                "path": {"type": "string"},
                "shift": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        "check": {"type": "string"},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "options": {"type": "object"},
    },
    "additionalProperties": False,
}

# kinds whose runs draw random instances and therefore need a seed
_RANDOM_KINDS = {"transport", "sphere", "symmetrize"}


class ConfigError(ValueError):
    """Invalid config; ``where`` locates the problem (field path or line:column)."""

    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    cost: Optional[dict] = None
    measures: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    source: dict = field(default_factory=lambda: {"type": "builtin"})
    check: Optional[str] = None
    tolerances: dict = field(default_factory=dict)
    trials: int = 1
    seed: Optional[int] = None
    options: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "cost": self.cost, "measures": self.measures,
                "grid": self.grid, "source": self.source, "check": self.check,
                "tolerances": self.tolerances, "trials": self.trials, "seed": self.seed,
                "options": self.options}

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(raw: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a config mapping (builtin references are expanded first)."""
    if not isinstance(raw, dict):
        raise ConfigError("$", "config must be a JSON object")
    if "builtin" in raw:
        from .experiments import BUILTINS

        name = raw["builtin"]
        if name not in BUILTINS:
            raise ConfigError("builtin", f"unknown builtin {name!r} (see `santalo-lab list`)")
        over = {k: v for k, v in raw.items() if k != "builtin"}
        raw = _merge(BUILTINS[name].config, over)
        raw.setdefault("name", name)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "$"
        raise ConfigError(where, e.message)
    for key in ("name", "kind"):
        if key not in raw:
            raise ConfigError(key, "required field missing")
    if raw["kind"] not in ("exponents",) and "cost" not in raw:
        raise ConfigError("cost", f"kind {raw['kind']!r} needs a cost")
    cfg = ExperimentConfig(
        name=raw["name"], kind=raw["kind"], cost=raw.get("cost"), measures=raw.get("measures", []),
        grid=raw.get("grid", {}), source=raw.get("source", {"type": "builtin"}), check=raw.get("check"),
        tolerances=raw.get("tolerances", {}), trials=raw.get("trials", 1), seed=raw.get("seed"),
        options=raw.get("options", {}), base_dir=Path(base_dir) if base_dir else Path.cwd())
    random_used = cfg.source.get("type") == "random" or cfg.kind in _RANDOM_KINDS
    if random_used and cfg.seed is None:
        raise ConfigError("seed", "a seed is required when randomness is used")
    if cfg.source.get("type") == "file":
        if "path" not in cfg.source:
            raise ConfigError("source/path", "file source needs a path")
        if not cfg.resolve(cfg.source["path"]).is_file():
            raise ConfigError("source/path", f"file {cfg.source['path']!r} does not exist")
    if cfg.source.get("type") == "builtin" and cfg.kind in ("verify-functional", "verify-sets") \
            and "name" not in cfg.source:
        raise ConfigError("source/name", "builtin source needs a name")
    if cfg.cost is not None:
        try:
            cost_from_config(cfg.cost)
        except ValueError as exc:
            raise ConfigError("cost", str(exc)) from None
    for k, m in enumerate(cfg.measures):
        if m["kind"] == "power" and "r" not in m:
            raise ConfigError(f"measures/{k}/r", "power measure needs an exponent r")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file; every failure is a :class:`ConfigError`."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", f"malformed JSON: {exc.msg}") from None
    return parse_config(raw, p.resolve().parent)


def cost_from_config(d: dict) -> CostSpec:
    return CostSpec.from_dict({"family": d["family"], "N": d["N"], "n": d["n"], "params": d.get("params", {})})


def measure_from_config(d: dict, dim: int) -> ReferenceMeasure:
    kind = d["kind"]
    if kind == "lebesgue":
        return ReferenceMeasure.lebesgue(dim)
    if kind == "gaussian":
        return ReferenceMeasure.gaussian(dim)
    if kind == "exponential-product":
        return ReferenceMeasure.exponential_product(dim)
    if kind == "power":
        return ReferenceMeasure.power(dim, float(d["r"]))
    raise ValueError(f"unknown measure kind {kind!r}")


# ---------------------------------------------------------------------------
# tuple files
# ---------------------------------------------------------------------------


def save_function_tuple(path, tup: FunctionTuple) -> None:
    """JSON file with the cost, the weights and one ``grid_function`` record per slot."""
    d = {
        "schema_version": SCHEMA_VERSION,
        "type": "function-tuple",
        "cost": tup.cost.to_dict(),
        "alpha": [float(a) for a in tup.alpha],
        "components": [V.to_dict() for V in tup.components],
    }
    Path(path).write_text(json.dumps(d) + "\n")


def load_function_tuple(path) -> FunctionTuple:
    d = json.loads(Path(path).read_text())
    if d.get("type") != "function-tuple":
        raise ValueError(f"{path}: not a function-tuple file")
    comps = tuple(GridFunction.from_dict(c) for c in d["components"])
    return FunctionTuple(comps, CostSpec.from_dict(d["cost"]), tuple(d.get("alpha") or [1.0] * len(comps)))


def save_body_tuple(path, bodies: BodyTuple) -> None:
    d = {
        "schema_version": SCHEMA_VERSION,
        "type": "body-tuple",
        "cost": bodies.cost.to_dict(),
        "bodies": [K.to_dict() for K in bodies.bodies],
    }
    Path(path).write_text(json.dumps(d) + "\n")


def load_body_tuple(path) -> BodyTuple:
    d = json.loads(Path(path).read_text())
    if d.get("type") != "body-tuple":
        raise ValueError(f"{path}: not a body-tuple file")
    return BodyTuple(tuple(StarBody.from_dict(b) for b in d["bodies"]), CostSpec.from_dict(d["cost"]))
