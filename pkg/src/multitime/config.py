"""Strict JSON experiment configuration.

Every block is a dataclass; unknown keys, wrong types and non-finite
numbers raise ConfigError naming the offending key.
"""

from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

TASKS = ("verify-family", "evolve", "scatter", "kappa-map", "sweep")

# model name -> {field: kind}; kinds: float, int, floats (list), int? (optional int)
MODEL_FIELDS = {
    "four_state": {"b1": "float", "b2": "float", "g": "float", "gamma": "float", "e0": "float", "v": "float"},
    "four_state_h": {"b1": "float", "b2": "float", "g": "float", "gamma": "float", "e0": "float", "v": "float"},
    "lz2": {"b": "float", "g": "float"},
    "tavis_cummings": {"n_spins": "int", "epsilons": "floats", "g": "float", "boson_cutoff": "int", "sector": "int?"},
    "gaudin": {"n_spins": "int", "epsilons": "floats", "B": "float"},
}
MODEL_REQUIRED = {
    "four_state": (),
    "four_state_h": (),
    "lz2": ("b", "g"),
    "tavis_cummings": ("n_spins", "epsilons", "g"),
    "gaudin": ("n_spins", "epsilons", "B"),
}


def _finite_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: number must be finite, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _numbers(value, where: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")
    return [_finite_number(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _check(value, hint, where: str):
    """Validate ``value`` against a (small) subset of typing hints."""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if hint is typing.Any:
        return _any_finite(value, where)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None and type(None) in args:
            return None
        errors = []
        for alt in (a for a in args if a is not type(None)):
            try:
                return _check(value, alt, where)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(errors[0] if len(errors) == 1 else f"{where}: unexpected value {value!r}")
    if hint is float:
        return _finite_number(value, where)
    if hint is int:
        return _integer(value, where)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return [_check(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(hint):
        return parse_block(hint, value, where)
    raise TypeError(f"unsupported config hint {hint!r}")


def _any_finite(value, where):
    if isinstance(value, list):
        return [_any_finite(v, f"{where}[{i}]") for i, v in enumerate(value)]
    if isinstance(value, (str, bool, int)) or value is None:
        return value
    return _finite_number(value, where)


def parse_block(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{where}: unknown key {key!r}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _check(data[f.name], hints[f.name], f"{where}.{f.name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{where}: missing required key {f.name!r}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class ModelConfig:
    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, data, where: str = "model") -> "ModelConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected an object")
        if "name" not in data:
            raise ConfigError(f"{where}: missing required key 'name'")
        name = data["name"]
        if name not in MODEL_FIELDS:
            raise ConfigError(f"{where}.name: unknown model {name!r} (known: {', '.join(MODEL_FIELDS)})")
        fields = MODEL_FIELDS[name]
        params = {}
        for key, value in data.items():
            if key == "name":
                continue
            if key not in fields:
                raise ConfigError(f"{where}: unknown key {key!r} for model {name!r}")
            kind = fields[key]
            loc = f"{where}.{key}"
            if kind == "float":
                params[key] = _finite_number(value, loc)
            elif kind == "int":
                params[key] = _integer(value, loc)
            elif kind == "int?":
                params[key] = None if value is None else _integer(value, loc)
            else:
                params[key] = _numbers(value, loc)
        for key in MODEL_REQUIRED[name]:
            if key not in params:
                raise ConfigError(f"{where}: missing required key {key!r} for model {name!r}")
        return cls(name, params)

    def with_param(self, key: str, value) -> "ModelConfig":
        if key not in MODEL_FIELDS[self.name]:
            raise ConfigError(f"model {self.name!r} has no parameter {key!r}")
        return ModelConfig(self.name, {**self.params, key: value})

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True)
class VerifyConfig:
    lower: typing.Optional[list[float]] = None
    upper: typing.Optional[list[float]] = None
    points: int = 5
    random_points: int = 0
    method: str = "auto"
    threshold: float = 1e-8

    def __post_init__(self):
        if self.method not in ("auto", "analytic", "central"):
            raise ConfigError(f"verify.method: unknown derivative method {self.method!r}")
        if self.points < 2 or self.random_points < 0:
            raise ConfigError("verify.points must be >= 2 and verify.random_points >= 0")
        if (self.lower is None) != (self.upper is None):
            raise ConfigError("verify: give both lower and upper or neither")


@dataclass(frozen=True)
class IntegratorConfig:
    steps: typing.Optional[int] = None
    tol: float = 1e-6
    cap: float = 0.1
    max_phase: typing.Optional[float] = None


@dataclass(frozen=True)
class EvolveConfig:
    path: list[list[float]]
    initial: typing.Any = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if not self.path:
            raise ConfigError("evolve.path: needs at least one vertex")


@dataclass(frozen=True)
class ScatterConfig:
    method: str = "numeric"
    R: float = 400.0
    drift: bool = False
    waypoints: typing.Optional[list[list[float]]] = None
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(tol=1e-5))

    def __post_init__(self):
        if self.method not in ("numeric", "deformed", "chain", "closed-form"):
            raise ConfigError(f"scatter.method: unknown method {self.method!r}")
        if not self.R > 0:
            raise ConfigError("scatter.R must be positive")


@dataclass(frozen=True)
class KappaConfig:
    pair: list[int]
    x: list[float]
    y: list[float]
    slots: list[int] = field(default_factory=lambda: [0, 1])
    base: typing.Optional[list[float]] = None

    def __post_init__(self):
        if len(self.pair) != 2 or min(self.pair) < 1:
            raise ConfigError("kappa.pair: two 1-based state numbers required")
        for name in ("x", "y"):
            axis = getattr(self, name)
            if len(axis) != 3 or axis[2] < 2 or axis[2] != int(axis[2]):
                raise ConfigError(f"kappa.{name}: expected [lo, hi, count] with integer count >= 2")
        if len(self.slots) != 2:
            raise ConfigError("kappa.slots: two slot indices required")


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    start: float
    stop: float
    count: int
    task: str = "scatter"

    def __post_init__(self):
        if self.count < 2:
            raise ConfigError("sweep.count must be >= 2")
        if self.task not in ("verify-family", "evolve", "scatter"):
            raise ConfigError(f"sweep.task: cannot sweep task {self.task!r}")


@dataclass(frozen=True)
class OutputConfig:
    path: typing.Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ConfigError(f"output.format: expected csv or json, got {self.format!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    task: typing.Optional[str] = None
    seed: int = 0
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    evolve: typing.Optional[EvolveConfig] = None
    scatter: ScatterConfig = field(default_factory=ScatterConfig)
    kappa: typing.Optional[KappaConfig] = None
    sweep: typing.Optional[SweepConfig] = None
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def parse(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(f"config: unknown key {key!r}")
        if "model" not in data:
            raise ConfigError("config: missing required key 'model'")
        blocks = {
            "verify": VerifyConfig,
            "evolve": EvolveConfig,
            "scatter": ScatterConfig,
            "kappa": KappaConfig,
            "sweep": SweepConfig,
            "output": OutputConfig,
        }
        kwargs = {"model": ModelConfig.parse(data["model"])}
        for key, block in blocks.items():
            if key in data and data[key] is not None:
                kwargs[key] = parse_block(block, data[key], key)
        if data.get("task") is not None:
            task = data["task"]
            if task not in TASKS:
                raise ConfigError(f"config.task: unknown task {task!r}")
            kwargs["task"] = task
        if "seed" in data:
            kwargs["seed"] = _integer(data["seed"], "config.seed")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["model"] = self.model.to_dict()
        return out


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ExperimentConfig.parse(data)


def _reject_constant(name):
    raise ConfigError(f"config: non-finite constant {name} is not allowed")
