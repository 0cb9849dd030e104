"""Strict JSON run configuration.

Sections map onto dataclasses; unknown keys are rejected with the dotted
path of the offending key. ``effective(cfg)`` gives the fully defaulted
config that goes into provenance blocks.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class FiniteModelConfig:
    kind: str = "finite"
    # entries are numbers or names looked up in ``parameters``; the diagonal is ignored
    generator: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    # null, an explicit pmf, or "auto" (solved from the generator)
    stationary: Any = None
    potential: str = "indicator"


@dataclass
class StringModelConfig:
    kind: str = "string"
    theta_sub: float = 0.03
    lambda_pt: float = 0.05
    mu_pt: float = 0.2
    lambda_ssm: float = 2.0
    mu_ssm: float = 2.0
    ssm_max_len: int = 3


@dataclass
class RnaModelConfig:
    kind: str = "rna"
    sequence: str = ""
    energy_per_pair: float = 1.0
    kT_scale: float = 1.0
    hairpin_min: int = 3
    kawasaki_divisor: float = 1.0
    # null, a list of dot-bracket strings, or a path to a file of them
    subset: Any = None


MODEL_KINDS = {"finite": FiniteModelConfig, "string": StringModelConfig, "rna": RnaModelConfig}


@dataclass
class QueryConfig:
    start: Any = None
    target: Any = None
    horizon: float | None = None
    horizons: list | None = None
    # smc: list of {"set": [...], "horizon": T} or a path to such a JSON file
    observations: Any = None
    # gimh: list of {"start", "end", "horizon"} or a path
    dataset: Any = None


@dataclass
class EstimatorConfig:
    method: str = "tips"
    methods: list = field(default_factory=lambda: ["tips", "fs"])
    particles: int = 1000
    particle_counts: list | None = None
    alpha: float = 2.0 / 3.0
    beta: float = 1.0
    schedule: str = "fixed"
    ess_threshold: float = 0.5
    step_cap: int = 10**6
    oracle: str = "auto"


@dataclass
class ExecutionConfig:
    seed: int = 0
    workers: int | None = None
    replicates: int = 1


@dataclass
class OutputConfig:
    path: str | None = None
    diagnostics: str | None = None
    timing: bool = False


@dataclass
class ParameterConfig:
    init: float = 1.0
    prior_rate: float = 1.0


@dataclass
class GimhConfig:
    iterations: int = 1000
    parameters: dict = field(default_factory=dict)
    proposal_scale: float | None = None
    include_stationary: bool = True
    init_retries: int = 10
    prefix_points: int = 20


@dataclass
class SimulateConfig:
    count: int = 0
    horizon: float = 1.0
    # null draws starts from the stationary pmf
    start: Any = None


@dataclass
class RunConfig:
    model: Any
    query: QueryConfig = field(default_factory=QueryConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    gimh: GimhConfig = field(default_factory=GimhConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)


SECTIONS = {"query": QueryConfig, "estimator": EstimatorConfig, "execution": ExecutionConfig,
            "output": OutputConfig, "gimh": GimhConfig, "simulate": SimulateConfig}

_NUMERIC = (int, float)


def _check_type(value, default, where):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, _NUMERIC):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]}")
    obj = cls()
    for k, v in data.items():
        setattr(obj, k, _check_type(v, getattr(obj, k), f"{where}.{k}"))
    return obj


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "provenance" in data:
        data = data["provenance"].get("config", {}) if isinstance(data["provenance"], dict) else {}
    unknown = sorted(set(data) - set(SECTIONS) - {"model"})
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    model = data.get("model")
    if not isinstance(model, dict) or "kind" not in model:
        raise ConfigError("model.kind is required")
    kind = model["kind"]
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
    cfg = RunConfig(_build(MODEL_KINDS[kind], model, "model"))
    for name, cls in SECTIONS.items():
        if name in data:
            setattr(cfg, name, _build(cls, data[name], name))
    params = {}
    for pname, pdata in cfg.gimh.parameters.items():
        params[pname] = _build(ParameterConfig, pdata, f"gimh.parameters.{pname}")
    cfg.gimh.parameters = params
    return cfg


def read_json(path) -> Any:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    if text.startswith("#"):
        # CSV output: provenance sits on the first comment line
        first = text.splitlines()[0]
        text = '{"provenance": ' + (first[first.index("{"):] if "{" in first else "{}") + "}"
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None


def load_config(path) -> RunConfig:
    return parse_config(read_json(path))


def set_override(cfg: RunConfig, assignment: str) -> None:
    """Apply ``section.key=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    if len(parts) != 2 or not hasattr(cfg, parts[0]):
        raise ConfigError(f"unknown key {key}")
    section = getattr(cfg, parts[0])
    if not hasattr(section, parts[1]):
        raise ConfigError(f"unknown key {key}")
    setattr(section, parts[1], _check_type(value, getattr(section, parts[1]), key))


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def effective(cfg: RunConfig) -> dict:
    """Fully defaulted config minus fields that must not affect output bytes."""
    d = _plain(cfg)
    d["execution"].pop("workers", None)
    d["output"].pop("path", None)
    d["output"].pop("diagnostics", None)
    return d


def resolve_file(value, base: Path | None = None):
    """Inline lists pass through; a string is read as a JSON file."""
    if value is None or isinstance(value, list):
        return value
    if isinstance(value, str):
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        data = read_json(path)
        if isinstance(data, dict):
            for key in ("records", "observations"):
                if key in data:
                    return data[key]
            raise ConfigError(f"{path}: expected a list or an object with records/observations")
        return data
    raise ConfigError(f"expected a list or a file path, got {value!r}")
