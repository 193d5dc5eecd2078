"""Training loop and whole-image MAE/MSE evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (
    AnnotatedScene,
    SyntheticSceneSpec,
    augment,
    load_scene,
    pad_to_multiple,
    resolution_rules,
    synth_scene,
    training_patches,
)
from .density import build_density_map, parse_kernel_mode, sum_pool_downsample
from .errors import ConfigurationError, NonFiniteError
from .formats import load_checkpoint, save_checkpoint
from .losses import LossConfig, loss_terms
from .model import ModelGraph, dsnet_preset, forward, init_params
from .optim import adam_step
from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

OUTPUT_STRIDE = 8
CHECKPOINT_FORMAT = "dsnet-checkpoint/1"


# -- data ------------------------------------------------------------------


def synthetic_scenes(count: int, seed: int, width=64, height=64, count_range=(0, 40), gradient=2.0):
    """``count`` scenes; scene ``i`` uses seed ``seed * 100003 + i``."""
    return [
        synth_scene(SyntheticSceneSpec(width, height, tuple(count_range), gradient, seed * 100003 + i))
        for i in range(count)
    ]


def load_scene_dir(path) -> list[AnnotatedScene]:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ConfigurationError(f"no scene files (*.json) in {path}")
    return [load_scene(f) for f in files]


def training_scenes(cfg: RunConfig) -> list[AnnotatedScene]:
    d = cfg.data
    if d.kind == "synthetic":
        scenes = synthetic_scenes(d.count, d.seed, d.width, d.height, d.count_range, d.vertical_scale_gradient)
    else:
        scenes = load_scene_dir(d.scene_dir)
    return [resolution_rules(s, d.profile) for s in scenes]


def make_target(scene: AnnotatedScene, kernel_mode) -> tuple[np.ndarray, np.ndarray]:
    """Padded network input ``(1, 3, H', W')`` and the x8 sum-pooled density target ``(1, 1, H'/8, W'/8)``."""
    padded, _ = pad_to_multiple(scene, OUTPUT_STRIDE)
    density = build_density_map(padded, kernel_mode)
    target = sum_pool_downsample(density, OUTPUT_STRIDE).grid
    return padded.to_tensor_data(), target[None, None]


def sample_stream(scenes, cfg: RunConfig, rng: np.random.Generator):
    """Endless stream of (input, target) pairs, epoch by epoch, all draws from ``rng``."""
    kernel_mode = parse_kernel_mode(cfg.data.kernel)
    aug = cfg.augment.build(cfg.seed)
    while True:
        for idx in rng.permutation(len(scenes)):
            scene = scenes[idx]
            patches = training_patches(scene, rng, aug) if cfg.data.crop else [augment(scene, rng, aug)]
            for patch in patches:
                yield make_target(patch, kernel_mode)


def batches(stream, batch_size: int):
    while True:
        items = [next(stream) for _ in range(batch_size)]
        shapes = {x.shape for x, _ in items}
        if len(shapes) != 1:
            raise ConfigurationError(f"batch_size {batch_size} needs equal patch sizes, got {sorted(shapes)}")
        yield np.concatenate([x for x, _ in items]), np.concatenate([t for _, t in items])


# -- training --------------------------------------------------------------


@dataclass
class TrainResult:
    graph: ModelGraph
    losses: list = field(default_factory=list)  # (iteration, L_e, L_c, L)
    checkpoint: Path | None = None
    log_path: Path | None = None


def format_log_line(it, le, lc, total) -> str:
    return f"{it}\t{le!r}\t{lc!r}\t{total!r}"


def build_model(cfg: RunConfig) -> ModelGraph:
    graph = dsnet_preset(cfg.model.preset, cfg.model.channel_scale)
    init_params(graph, cfg.seed, cfg.model.init_std, cfg.model.backbone_init)
    return graph


def checkpoint_manifest(graph: ModelGraph, cfg: RunConfig | None, iteration: int) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "topology": graph.topology(),
        "iteration": iteration,
        "config": None if cfg is None else cfg.to_dict(),
    }


def save_model(path, graph: ModelGraph, cfg: RunConfig | None = None, iteration: int = 0):
    save_checkpoint(path, checkpoint_manifest(graph, cfg, iteration), graph.params.state_dict())


def load_model(path) -> tuple[ModelGraph, dict]:
    manifest, tensors = load_checkpoint(path)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path}: not a {CHECKPOINT_FORMAT} container")
    graph = ModelGraph.from_topology(manifest["topology"])
    state = {name: arr.reshape(graph.params[name].shape) for name, arr in tensors.items() if name in graph.params}
    graph.params.load_state_dict(state)
    return graph, manifest


def train(cfg: RunConfig, scenes=None, write: bool = True) -> TrainResult:
    """Adam on ``L_e + lambda * L_c``; deterministic in ``cfg.seed``.

    Writes ``loss.tsv`` and ``checkpoint.dsn`` under ``cfg.output_dir`` when
    ``write`` is set. A non-finite loss saves the last good parameters to
    ``checkpoint_last_good.dsn`` and raises :class:`NonFiniteError`.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    scenes = training_scenes(cfg) if scenes is None else scenes
    loss_cfg: LossConfig = cfg.loss.build()
    graph = build_model(cfg)
    out = Path(cfg.output_dir)
    result = TrainResult(graph)
    log = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        result.log_path = out / "loss.tsv"
        log = result.log_path.open("w")
    try:
        data = batches(sample_stream(scenes, cfg, rng), cfg.batch_size)
        for it in range(cfg.iterations):
            x, target = next(data)
            pred = forward(graph, Tensor(x))
            total, le, lc = loss_terms(pred, Tensor(target), loss_cfg)
            values = (le.item(), lc.item(), total.item())
            if not all(math.isfinite(v) for v in values):
                if write:
                    save_model(out / "checkpoint_last_good.dsn", graph, cfg, it)
                raise NonFiniteError(f"non-finite loss at iteration {it}: L_e={values[0]}, L_c={values[1]}")
            result.losses.append((it, *values))
            if log is not None:
                log.write(format_log_line(it, *values) + "\n")
            grads = backward(total)
            o = cfg.optim
            adam_step(graph.params, grads, o.lr, o.weight_decay, o.beta1, o.beta2, o.eps)
            if write and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                save_model(out / f"checkpoint_{it + 1:06d}.dsn", graph, cfg, it + 1)
            if it % 20 == 0:
                logger.info("iter %d  L_e %.5g  L_c %.5g  L %.5g", it, *values)
    finally:
        if log is not None:
            log.close()
    if write:
        result.checkpoint = out / "checkpoint.dsn"
        save_model(result.checkpoint, graph, cfg, cfg.iterations)
    return result


# -- evaluation ------------------------------------------------------------


@dataclass
class EvalResult:
    estimates: list
    ground_truth: list
    seconds: float = 0.0

    def __post_init__(self):
        if not self.estimates:
            raise ConfigurationError("evaluation needs at least one scene")

    @property
    def errors(self) -> np.ndarray:
        return np.asarray(self.estimates, dtype=np.float64) - np.asarray(self.ground_truth, dtype=np.float64)

    @property
    def mae(self) -> float:
        return mae(self.estimates, self.ground_truth)

    @property
    def mse(self) -> float:
        return mse(self.estimates, self.ground_truth)

    def as_dict(self) -> dict:
        n = len(self.estimates)
        return {
            "n": n,
            "mae": self.mae,
            "mse": self.mse,
            "per_image": [{"estimate": e, "ground_truth": g} for e, g in zip(self.estimates, self.ground_truth)],
            "seconds_total": self.seconds,
            "seconds_per_image": self.seconds / n,
        }


def mae(estimates, ground_truth) -> float:
    """Mean absolute count error."""
    e = np.asarray(estimates, dtype=np.float64) - np.asarray(ground_truth, dtype=np.float64)
    if e.size == 0:
        raise ConfigurationError("MAE of an empty evaluation")
    return float(np.abs(e).mean())


def mse(estimates, ground_truth) -> float:
    """Root of the mean squared count error (the crowd-counting "MSE")."""
    e = np.asarray(estimates, dtype=np.float64) - np.asarray(ground_truth, dtype=np.float64)
    if e.size == 0:
        raise ConfigurationError("MSE of an empty evaluation")
    return float(np.sqrt((e * e).mean()))


def roi_weights(roi: np.ndarray, shape) -> np.ndarray:
    """Fraction of each output cell's 8x8 footprint inside the ROI."""
    padded, _ = pad_to_multiple(roi.astype(np.float64), OUTPUT_STRIDE)
    h, w = padded.shape
    frac = padded.reshape(h // OUTPUT_STRIDE, OUTPUT_STRIDE, w // OUTPUT_STRIDE, OUTPUT_STRIDE).mean(axis=(1, 3))
    return frac[: shape[0], : shape[1]]


def predict_count(graph: ModelGraph, scene: AnnotatedScene) -> float:
    padded, (h, w) = pad_to_multiple(scene, OUTPUT_STRIDE)
    with no_grad():
        pred = forward(graph, Tensor(padded.to_tensor_data())).data[0, 0]
    pred = pred[: -(-h // OUTPUT_STRIDE), : -(-w // OUTPUT_STRIDE)]
    if scene.roi is not None:
        pred = pred * roi_weights(scene.roi, pred.shape)
    return float(pred.sum())


def ground_truth_count(scene: AnnotatedScene, kernel_mode) -> float:
    """Head count, or the ROI-masked density mass when the scene has an ROI."""
    if scene.roi is None:
        return float(scene.count)
    return build_density_map(scene, kernel_mode).nominal_count


def evaluate(model, scenes, kernel="fixed:2") -> EvalResult:
    """Whole-image counts for ``scenes``; ``model`` is a graph or a checkpoint path."""
    if not scenes:
        raise ConfigurationError("evaluation needs at least one scene")
    graph = model if isinstance(model, ModelGraph) else load_model(model)[0]
    kernel_mode = parse_kernel_mode(kernel)
    start = time.perf_counter()
    estimates, truth = [], []
    for scene in scenes:
        estimates.append(predict_count(graph, scene))
        truth.append(ground_truth_count(scene, kernel_mode))
    return EvalResult(estimates, truth, time.perf_counter() - start)
