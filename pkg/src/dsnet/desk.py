"""Desk-scale learning check: train the toy preset on synthetic scenes and compare against a constant predictor.

The configuration lives in ``scripts/desk_config.json``; the thresholds
(loss ratio <= 0.5, MAE below the mean-count baseline) were fixed after one
calibration sweep and are not tuned per run.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .config import RunConfig
from .density import parse_kernel_mode
from .losses import loss_terms
from .model import ModelGraph, forward
from .tensor import Tensor, no_grad
from .train import build_model, evaluate, make_target, synthetic_scenes, train, training_scenes

HELD_OUT_SEED = 999
HELD_OUT_COUNT = 16
MAX_LOSS_RATIO = 0.5


@dataclass
class DeskReport:
    initial_loss: float
    final_loss: float
    loss_ratio: float
    test_mae: float
    test_mse: float
    baseline_mae: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.loss_ratio <= MAX_LOSS_RATIO and self.test_mae < self.baseline_mae

    def as_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def training_objective(graph: ModelGraph, scenes, cfg: RunConfig) -> float:
    """Mean of ``L_e + lam * L_c`` over the un-augmented training scenes."""
    kernel_mode = parse_kernel_mode(cfg.data.kernel)
    loss_cfg = cfg.loss.build()
    total = 0.0
    with no_grad():
        for scene in scenes:
            x, target = make_target(scene, kernel_mode)
            total += loss_terms(forward(graph, Tensor(x)), Tensor(target), loss_cfg)[0].item()
    return total / len(scenes)


def constant_baseline_mae(train_scenes, test_scenes) -> float:
    mean = float(np.mean([s.count for s in train_scenes]))
    return float(np.mean([abs(mean - s.count) for s in test_scenes]))


def desk_run(cfg: RunConfig, write: bool = False) -> DeskReport:
    start = time.perf_counter()
    scenes = training_scenes(cfg)
    initial = training_objective(build_model(cfg), scenes, cfg)
    result = train(cfg, scenes, write=write)
    final = training_objective(result.graph, scenes, cfg)
    d = cfg.data
    test = synthetic_scenes(HELD_OUT_COUNT, HELD_OUT_SEED, d.width, d.height, d.count_range, d.vertical_scale_gradient)
    ev = evaluate(result.graph, test, d.kernel)
    return DeskReport(
        initial,
        final,
        final / initial,
        ev.mae,
        ev.mse,
        constant_baseline_mae(scenes, test),
        time.perf_counter() - start,
    )
