"""Experiment configuration loaded from JSON.

Every section is optional; missing keys take the defaults below.  Unknown
keys are rejected so that typos surface as configuration errors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .classifier import SoftLabelConfig, TrainConfig
from .clustering import ClusteringConfig
from .compose import CompositionPlan, parse_pattern
from .diffusion import DenoiserTrainConfig
from .errors import ConfigError
from .sampler import METHODS, GuidanceConfig


@dataclass
class WorldConfig:
    spec_path: str | None = None
    seed: int = 0
    n_classes: int = 5
    n_modes: int = 2
    frames: int = 16
    dim: int = 4
    class_spread: float = 3.0
    mode_spread: float = 1.0
    frame_std: float = 2.0
    decay: float = 0.3
    n_train: int = 200
    n_test: int = 100


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 2e-2


@dataclass
class DenoiserConfig:
    kind: str = "oracle"
    train: DenoiserTrainConfig = field(default_factory=DenoiserTrainConfig)


@dataclass
class MetricsConfig:
    bins: int = 32
    feature_space: str = "hidden"  # teacher hidden layer, or "raw" latents


@dataclass
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    composition: CompositionPlan = field(default_factory=CompositionPlan)
    method: str = "gvd"
    knoise_t_start: int = 700
    knoise_variant: str = "dummy_video"
    ipc: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    teacher: TrainConfig = field(default_factory=TrainConfig)
    soft_labels: SoftLabelConfig | None = None
    eval_runs: int = 3
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    master_seed: int = 0
    out: str = "out"
    workers: int = 1

    @property
    def U(self) -> int:
        return self.composition.U

    @property
    def K(self) -> int:
        return self.ipc * self.U

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"must be one of {METHODS}", "method")
        if self.ipc < 1:
            raise ConfigError("must be >= 1", "ipc")
        if self.eval_runs < 1:
            raise ConfigError("must be >= 1", "eval_runs")
        if self.workers < 1:
            raise ConfigError("must be >= 1", "workers")
        if self.denoiser.kind not in ("oracle", "trainable"):
            raise ConfigError("must be 'oracle' or 'trainable'", "denoiser.kind")
        if self.metrics.feature_space not in ("raw", "hidden"):
            raise ConfigError("must be 'raw' or 'hidden'", "metrics.feature_space")
        if self.world.spec_path is not None and not Path(self.world.spec_path).exists():
            raise ConfigError(f"file not found: {self.world.spec_path}", "world.spec_path")
        if not 0 <= self.knoise_t_start <= self.schedule.T:
            raise ConfigError(f"must lie in [0, {self.schedule.T}]", "knoise_t_start")
        self.guidance.validate(self.schedule.T)
        self.composition.validate(self.world.frames)
        self.clustering.validate()
        self.train.validate()
        self.teacher.validate()
        if self.soft_labels is not None:
            self.soft_labels.validate()

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data, path: str):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path)
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = {"lambda": "lam"}.get(key, key)
        if name not in known:
            raise ConfigError("unknown key", f"{path}.{key}" if path else key)
        default = known[name].default_factory() if callable(known[name].default_factory) else known[name].default
        sub = f"{path}.{key}" if path else key
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        elif name == "soft_labels":
            kwargs[name] = None if value is None else _build(SoftLabelConfig, value, sub)
        elif name == "pattern":
            kwargs[name] = parse_pattern(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path or "config") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
        cfg.validate()
        return cfg
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}", "--config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc})", "--config") from exc
    return config_from_dict(data)
