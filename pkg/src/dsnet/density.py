"""Ground-truth density maps from head annotations.

Pixel ``(row, col)`` is sampled at the point ``(x=col, y=row)``. Each head
adds a truncated isotropic Gaussian that is renormalized after clipping to the
image, so every head contributes exactly one unit of mass before ROI masking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation


@dataclass
class DensityMap:
    grid: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)

    @classmethod
    def zeros(cls, height: int, width: int) -> "DensityMap":
        return cls(np.zeros((height, width)))

    @property
    def nominal_count(self) -> float:
        return float(self.grid.sum())

    @property
    def shape(self):
        return self.grid.shape


@dataclass(frozen=True)
class AdaptiveKernelConfig:
    beta: float = 0.3
    k: int = 3
    truncation_radius_sigmas: float = 4.0
    fallback_sigma: float = 15.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.truncation_radius_sigmas < 2:
            raise ConfigurationError(f"truncation_radius_sigmas must be >= 2, got {self.truncation_radius_sigmas}")
        if self.fallback_sigma <= 0:
            raise ConfigurationError(f"fallback_sigma must be positive, got {self.fallback_sigma}")


@dataclass(frozen=True)
class FixedKernel:
    sigma: float
    truncation_radius_sigmas: float = 4.0


@dataclass(frozen=True)
class AdaptiveKernel:
    config: AdaptiveKernelConfig = AdaptiveKernelConfig()


def _axis_window(center, radius, size):
    lo = max(0, math.ceil(center - radius))
    hi = min(size - 1, math.floor(center + radius))
    if lo > hi:
        # sigma far below a pixel: fall back to the nearest in-bounds sample
        lo = hi = min(size - 1, max(0, int(round(center))))
    return lo, hi


def gaussian_splat(dmap: DensityMap, center, sigma: float, truncation_radius_sigmas: float = 4.0) -> DensityMap:
    """Add one unit of Gaussian mass at ``center=(x, y)`` (in place; returns ``dmap``)."""
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    h, w = dmap.grid.shape
    x, y = float(center[0]), float(center[1])
    radius = truncation_radius_sigmas * sigma
    c0, c1 = _axis_window(x, radius, w)
    r0, r1 = _axis_window(y, radius, h)
    gx = _axis_weights(np.arange(c0, c1 + 1) - x, sigma)
    gy = _axis_weights(np.arange(r0, r1 + 1) - y, sigma)
    dmap.grid[r0:r1 + 1, c0:c1 + 1] += np.outer(gy, gx)
    return dmap


def _axis_weights(offsets, sigma):
    # shifting the exponent by its max avoids all-zero underflow for tiny sigma
    e = -(offsets**2) / (2.0 * sigma * sigma)
    g = np.exp(e - e.max())
    return g / g.sum()


def adaptive_sigmas(heads, cfg: AdaptiveKernelConfig = AdaptiveKernelConfig()) -> np.ndarray:
    """``beta`` times the mean distance to the ``min(k, n-1)`` nearest other heads."""
    pts = np.asarray(heads, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ContractViolation("adaptive_sigmas needs at least one head")
    if n == 1:
        return np.array([cfg.fallback_sigma])
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    kk = min(cfg.k, n - 1)
    nearest = np.sort(dist, axis=1)[:, :kk]
    return cfg.beta * nearest.mean(axis=1)


def build_density_map(scene, mode) -> DensityMap:
    """Sum of per-head Gaussians for ``scene``; cells outside its ROI are zeroed.

    ``mode`` is a :class:`FixedKernel` or :class:`AdaptiveKernel`.
    """
    h, w = scene.height, scene.width
    dmap = DensityMap.zeros(h, w)
    heads = np.asarray(scene.heads, dtype=np.float64).reshape(-1, 2)
    if len(heads):
        if isinstance(mode, FixedKernel):
            sigmas = np.full(len(heads), mode.sigma)
            trunc = mode.truncation_radius_sigmas
        elif isinstance(mode, AdaptiveKernel):
            sigmas = adaptive_sigmas(heads, mode.config)
            trunc = mode.config.truncation_radius_sigmas
        else:
            raise ConfigurationError(f"unknown kernel mode {mode!r}")
        for (x, y), s in zip(heads, sigmas):
            gaussian_splat(dmap, (x, y), s, trunc)
    if scene.roi is not None:
        dmap.grid *= scene.roi
    return dmap


def sum_pool_downsample(dmap: DensityMap | np.ndarray, factor: int) -> DensityMap:
    """Each output cell is the sum of a ``factor x factor`` block (count-preserving)."""
    grid = dmap.grid if isinstance(dmap, DensityMap) else np.asarray(dmap, dtype=np.float64)
    h, w = grid.shape
    if factor < 1 or h % factor or w % factor:
        raise ContractViolation(f"{h}x{w} map is not divisible by factor {factor}")
    return DensityMap(grid.reshape(h // factor, factor, w // factor, factor).sum(axis=(1, 3)))


def parse_kernel_mode(text: str | dict):
    """``"adaptive"`` or ``"fixed:<sigma>"`` (or the equivalent mapping) to a mode object."""
    if isinstance(text, dict):
        kind = text.get("kind", "adaptive")
        if kind == "fixed":
            return FixedKernel(float(text["sigma"]))
        if kind == "adaptive":
            return AdaptiveKernel(AdaptiveKernelConfig(**{k: v for k, v in text.items() if k != "kind"}))
        raise ConfigurationError(f"unknown kernel kind {kind!r}")
    if text == "adaptive":
        return AdaptiveKernel()
    if text.startswith("fixed:"):
        return FixedKernel(float(text.split(":", 1)[1]))
    raise ConfigurationError(f"kernel mode must be 'adaptive' or 'fixed:<sigma>', got {text!r}")

