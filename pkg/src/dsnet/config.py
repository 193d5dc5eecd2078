"""Run configuration: JSON documents parsed strictly into nested dataclasses.

Unknown keys are rejected with their dotted paths. Missing keys take the
defaults below. ``DSNET_OUTPUT_DIR`` overrides ``output_dir`` when set.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import AugmentConfig
from .errors import ConfigurationError
from .losses import LAMBDA_PRESETS, LossConfig

OUTPUT_ENV = "DSNET_OUTPUT_DIR"


@dataclass
class ModelConfig:
    preset: str = "toy"
    channel_scale: float = 0.125
    init_std: float = 0.01
    backbone_init: str = "gaussian"


@dataclass
class DataConfig:
    kind: str = "synthetic"  # "synthetic" or "scenes"
    count: int = 64
    width: int = 64
    height: int = 64
    count_range: list = field(default_factory=lambda: [0, 40])
    vertical_scale_gradient: float = 2.0
    seed: int = 0
    scene_dir: str | None = None
    profile: str = "none"
    kernel: str = "fixed:2"
    crop: bool = True


@dataclass
class AugmentSettings:
    flip_prob: float = 0.5
    gamma_prob: float = 0.3
    gamma_range: list = field(default_factory=lambda: [0.5, 1.5])
    gray_prob: float = 0.1
    random_crops_per_image: int = 5

    def build(self, seed: int) -> AugmentConfig:
        return AugmentConfig(
            self.flip_prob, self.gamma_prob, tuple(self.gamma_range), self.gray_prob, self.random_crops_per_image, seed
        )


@dataclass
class LossSettings:
    lam: float | None = None
    dataset: str | None = None
    levels: list = field(default_factory=lambda: [1, 2, 4])

    def build(self) -> LossConfig:
        if self.lam is not None:
            return LossConfig(float(self.lam), tuple(self.levels))
        if self.dataset is not None:
            return LossConfig.for_dataset(self.dataset, tuple(self.levels))
        return LossConfig(levels=tuple(self.levels))


@dataclass
class OptimConfig:
    lr: float = 5e-6
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    augment: AugmentSettings = field(default_factory=AugmentSettings)
    loss: LossSettings = field(default_factory=LossSettings)
    optim: OptimConfig = field(default_factory=OptimConfig)
    batch_size: int = 1
    iterations: int = 200
    seed: int = 0
    output_dir: str = "runs/default"
    checkpoint_every: int = 0

    def validate(self) -> "RunConfig":
        if not self.optim.lr > 0:
            raise ConfigurationError(f"optim.lr must be positive, got {self.optim.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.data.kind not in ("synthetic", "scenes"):
            raise ConfigurationError(f"data.kind must be 'synthetic' or 'scenes', got {self.data.kind!r}")
        if self.data.kind == "scenes" and not self.data.scene_dir:
            raise ConfigurationError("data.scene_dir is required when data.kind is 'scenes'")
        if self.loss.dataset is not None and self.loss.dataset not in LAMBDA_PRESETS:
            raise ConfigurationError(f"loss.dataset must be one of {sorted(LAMBDA_PRESETS)}")
        self.loss.build()
        self.augment.build(self.seed)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _unknown_keys(cls, doc: dict, prefix: str = "") -> list[str]:
    names = {f.name for f in dataclasses.fields(cls)}
    bad = []
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in names:
            bad.append(path)
            continue
        sub = _nested_type(cls, key)
        if sub is not None and isinstance(value, dict):
            bad.extend(_unknown_keys(sub, value, path + "."))
    return bad


def _nested_type(cls, key):
    nested = {
        RunConfig: {
            "model": ModelConfig,
            "data": DataConfig,
            "augment": AugmentSettings,
            "loss": LossSettings,
            "optim": OptimConfig,
        }
    }
    return nested.get(cls, {}).get(key)


def _build(cls, doc: dict):
    kwargs = {}
    for key, value in doc.items():
        sub = _nested_type(cls, key)
        if sub is not None:
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {key!r} must be an object")
            value = _build(sub, value)
        kwargs[key] = value
    return cls(**kwargs)


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError("config document must be an object")
    bad = _unknown_keys(RunConfig, doc)
    if bad:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(bad))}")
    cfg = _build(RunConfig, doc)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        cfg.output_dir = env
    return cfg.validate()


def load_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_run_config(path) -> RunConfig:
    return run_config_from_dict(load_json(path))
