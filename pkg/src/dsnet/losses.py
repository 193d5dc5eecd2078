"""Pixel-wise Euclidean loss, multi-scale density level consistency loss, and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError
from .tensor import Tensor, check_same_shape, absolute, adaptive_avg_pool, add_scalars, scale, square, sub, sum_all

LAMBDA_PRESETS = {
    "ShanghaiTech-A": 1000.0,
    "ShanghaiTech-B": 100.0,
    "UCF-QNRF": 1000.0,
    "UCF_CC_50": 100.0,
    "UCSD": 100.0,
}


@dataclass(frozen=True)
class LossConfig:
    lam: float = 100.0
    levels: tuple = (1, 2, 4)
    dataset_presets: dict = field(default_factory=lambda: dict(LAMBDA_PRESETS))

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(k) for k in self.levels))
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be non-negative, got {self.lam}")
        if not self.levels or any(k < 1 for k in self.levels):
            raise ConfigurationError(f"levels must be positive integers, got {self.levels}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigurationError(f"levels must be strictly increasing, got {self.levels}")

    @classmethod
    def for_dataset(cls, name: str, levels=(1, 2, 4)) -> "LossConfig":
        if name not in LAMBDA_PRESETS:
            raise ConfigurationError(f"no lambda preset for {name!r}; known: {sorted(LAMBDA_PRESETS)}")
        return cls(LAMBDA_PRESETS[name], levels)


def euclidean_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Per-image sum of squared pixel errors, averaged over the batch."""
    check_same_shape(pred, gt, "euclidean_loss")
    return scale(sum_all(square(sub(pred, gt))), 1.0 / pred.shape[0])


def consistency_loss(pred: Tensor, gt: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """Batch mean of ``sum_j |avgpool(pred, k_j) - avgpool(gt, k_j)|_1 / k_j^2``."""
    check_same_shape(pred, gt, "consistency_loss")
    side = min(pred.shape[2:])
    too_big = [k for k in cfg.levels if k > side]
    if too_big:
        raise ConfigurationError(f"consistency levels {too_big} exceed map side {side}")
    terms = []
    for k in cfg.levels:
        diff = sub(adaptive_avg_pool(pred, k), adaptive_avg_pool(gt, k))
        terms.append(scale(sum_all(absolute(diff)), 1.0 / (k * k)))
    return scale(add_scalars(terms), 1.0 / pred.shape[0])


def loss_terms(pred: Tensor, gt: Tensor, cfg: LossConfig = LossConfig()):
    """Return ``(L, L_e, L_c)`` with ``L = L_e + lam * L_c``."""
    le = euclidean_loss(pred, gt)
    lc = consistency_loss(pred, gt, cfg)
    return add_scalars([le, scale(lc, cfg.lam)]), le, lc


def combined_loss(pred: Tensor, gt: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    return loss_terms(pred, gt, cfg)[0]
