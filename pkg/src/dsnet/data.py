"""Scenes, augmentation, resolution rules and the synthetic crowd generator.

Head coordinates are ``(x, y)`` floats in ``[0, W) x [0, H)``. Augmentations
take a ``numpy.random.Generator`` and draw from it in a fixed order
(crop offsets, flip coin, gamma coin then value, gray coin) so one seed fixes
the whole sample stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, ContractViolation

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class AnnotatedScene:
    image: np.ndarray
    heads: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    roi: np.ndarray | None = None

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ContractViolation(f"image must be HxW or HxWx3, got shape {img.shape}")
        self.image = img.astype(np.uint8, copy=False)
        self.heads = np.asarray(self.heads, dtype=np.float64).reshape(-1, 2)
        if self.roi is not None:
            self.roi = np.asarray(self.roi).astype(bool)
            if self.roi.shape != self.image.shape[:2]:
                raise ContractViolation(f"roi shape {self.roi.shape} != image shape {self.image.shape[:2]}")

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def count(self) -> int:
        return len(self.heads)

    def out_of_bounds(self) -> list[int]:
        x, y = self.heads[:, 0], self.heads[:, 1]
        bad = (x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)
        return [int(i) for i in np.flatnonzero(bad)]

    def validate(self) -> "AnnotatedScene":
        bad = self.out_of_bounds()
        if bad:
            raise ContractViolation(
                f"heads {bad} lie outside the {self.width}x{self.height} image (coordinates are half-open)"
            )
        return self

    def to_tensor_data(self) -> np.ndarray:
        """Image as a ``(1, 3, H, W)`` float array scaled to [0, 1]."""
        return (self.image.astype(np.float64) / 255.0).transpose(2, 0, 1)[None].copy()


# -- files -----------------------------------------------------------------

SCENE_KEYS = {"image_path", "heads", "roi_path"}


class SceneFormatError(ContractViolation):
    pass


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(path, image: np.ndarray):
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def load_scene(path) -> AnnotatedScene:
    """Read a JSON scene file; relative image/ROI paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{path}: top level must be an object")
    unknown = sorted(set(doc) - SCENE_KEYS)
    if unknown:
        raise SceneFormatError(f"{path}: unknown fields {unknown}")
    for key in ("image_path", "heads"):
        if key not in doc:
            raise SceneFormatError(f"{path}: missing field {key!r}")
    heads = doc["heads"]
    if not isinstance(heads, list) or any(
        not isinstance(h, list) or len(h) != 2 or not all(isinstance(v, (int, float)) for v in h) for h in heads
    ):
        raise SceneFormatError(f"{path}: field 'heads' must be a list of [x, y] number pairs")
    base = path.parent
    image = load_image(base / doc["image_path"])
    roi = None
    if doc.get("roi_path"):
        roi = load_image(base / doc["roi_path"])[:, :, 0] > 0
    return AnnotatedScene(image, np.array(heads, dtype=np.float64).reshape(-1, 2), roi).validate()


def save_scene(path, scene: AnnotatedScene, image_name: str | None = None, roi_name: str | None = None):
    """Write ``scene`` as JSON plus PNG image (and ROI) next to it."""
    path = Path(path)
    image_name = image_name or path.with_suffix(".png").name
    save_image(path.parent / image_name, scene.image)
    doc = {"image_path": image_name, "heads": scene.heads.tolist()}
    if scene.roi is not None:
        roi_name = roi_name or path.stem + "_roi.png"
        save_image(path.parent / roi_name, scene.roi.astype(np.uint8) * 255)
        doc["roi_path"] = roi_name
    path.write_text(json.dumps(doc, indent=1) + "\n")


# -- crops and augmentation ------------------------------------------------


def crop(scene: AnnotatedScene, x0: int, y0: int, w: int, h: int) -> AnnotatedScene:
    x, y = scene.heads[:, 0], scene.heads[:, 1]
    keep = (x >= x0) & (x < x0 + w) & (y >= y0) & (y < y0 + h)
    heads = scene.heads[keep] - np.array([x0, y0], dtype=np.float64)
    roi = None if scene.roi is None else scene.roi[y0:y0 + h, x0:x0 + w]
    return AnnotatedScene(scene.image[y0:y0 + h, x0:x0 + w], heads, roi)


def quarter_crops(scene: AnnotatedScene) -> list[AnnotatedScene]:
    """Four non-overlapping ``(W//2) x (H//2)`` corner patches.

    For odd sizes the right/bottom patches start at ``W - W//2`` / ``H - H//2``
    so the last column/row is kept there and the middle seam is dropped.
    Heads in a seam are kept by the nearer patch so the head sets still partition.
    """
    W, H = scene.width, scene.height
    if W < 2 or H < 2:
        raise ContractViolation(f"quarter_crops needs at least 2x2, got {W}x{H}")
    pw, ph = W // 2, H // 2
    xs, ys = (0, W - pw), (0, H - ph)
    patches = []
    for qy in range(2):
        for qx in range(2):
            patches.append(crop(scene, xs[qx], ys[qy], pw, ph))
    # seam heads (odd sizes only) are clamped into the neighbouring patch
    x, y = scene.heads[:, 0], scene.heads[:, 1]
    seam = ~(((x < pw) | (x >= xs[1])) & ((y < ph) | (y >= ys[1])))
    for hx, hy in scene.heads[seam]:
        qx = 0 if hx < W / 2 else 1
        qy = 0 if hy < H / 2 else 1
        px = min(max(hx - xs[qx], 0.0), np.nextafter(pw, 0))
        py = min(max(hy - ys[qy], 0.0), np.nextafter(ph, 0))
        p = patches[2 * qy + qx]
        p.heads = np.vstack([p.heads, [[px, py]]])
    return patches


def random_crop(scene: AnnotatedScene, rng: np.random.Generator) -> AnnotatedScene:
    W, H = scene.width, scene.height
    pw, ph = W // 2, H // 2
    x0 = int(rng.integers(0, W - pw + 1))
    y0 = int(rng.integers(0, H - ph + 1))
    return crop(scene, x0, y0, pw, ph)


def flip_h(scene: AnnotatedScene, rng: np.random.Generator | None = None, prob: float = 0.5) -> AnnotatedScene:
    """Mirror left-right with probability ``prob`` (always when ``rng`` is None)."""
    if rng is not None and not rng.random() < prob:
        return scene
    heads = scene.heads.copy()
    # exact mirror for x in [0, W-1]; the last half-pixel would land below 0, so clamp
    heads[:, 0] = np.maximum((scene.width - 1) - heads[:, 0], 0.0)
    roi = None if scene.roi is None else scene.roi[:, ::-1].copy()
    return AnnotatedScene(scene.image[:, ::-1].copy(), heads, roi)


def apply_gamma(image: np.ndarray, gamma: float) -> np.ndarray:
    out = 255.0 * (image.astype(np.float64) / 255.0) ** gamma
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def gamma_transform(scene, rng, prob=0.3, gamma_range=(0.5, 1.5)) -> AnnotatedScene:
    if not rng.random() < prob:
        return scene
    gamma = float(rng.uniform(*gamma_range))
    return replace(scene, image=apply_gamma(scene.image, gamma))


def gray_image(image: np.ndarray) -> np.ndarray:
    luma = np.clip(np.rint(image.astype(np.float64) @ LUMA), 0, 255).astype(np.uint8)
    return np.repeat(luma[:, :, None], 3, axis=2)


def to_gray(scene, rng, prob=0.1) -> AnnotatedScene:
    if not rng.random() < prob:
        return scene
    return replace(scene, image=gray_image(scene.image))


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    gamma_prob: float = 0.3
    gamma_range: tuple = (0.5, 1.5)
    gray_prob: float = 0.1
    random_crops_per_image: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_prob", "gamma_prob", "gray_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")
        lo, hi = self.gamma_range
        if not 0 < lo <= hi:
            raise ConfigurationError(f"gamma_range must be positive and ordered, got {self.gamma_range}")
        if self.random_crops_per_image < 0:
            raise ConfigurationError("random_crops_per_image must be non-negative")


def augment(patch: AnnotatedScene, rng: np.random.Generator, cfg: AugmentConfig) -> AnnotatedScene:
    patch = flip_h(patch, rng, cfg.flip_prob)
    patch = gamma_transform(patch, rng, cfg.gamma_prob, cfg.gamma_range)
    return to_gray(patch, rng, cfg.gray_prob)


def training_patches(scene: AnnotatedScene, rng: np.random.Generator, cfg: AugmentConfig) -> list[AnnotatedScene]:
    """Quarter crops plus ``random_crops_per_image`` random crops, each augmented independently."""
    patches = quarter_crops(scene)
    patches += [random_crop(scene, rng) for _ in range(cfg.random_crops_per_image)]
    return [augment(p, rng, cfg) for p in patches]


# -- resolution ------------------------------------------------------------

MAX_720P = (1280, 720)
UCSD_SIZE = (952, 632)


def resize_scene(scene: AnnotatedScene, width: int, height: int) -> AnnotatedScene:
    sx, sy = width / scene.width, height / scene.height
    image = np.asarray(Image.fromarray(scene.image).resize((width, height), Image.BILINEAR))
    roi = None
    if scene.roi is not None:
        roi = np.asarray(Image.fromarray(scene.roi.astype(np.uint8) * 255).resize((width, height), Image.NEAREST)) > 0
    heads = scene.heads * np.array([sx, sy])
    # scaling can push a head that sat in the last pixel onto the far edge
    heads[:, 0] = np.minimum(heads[:, 0], np.nextafter(width, 0))
    heads[:, 1] = np.minimum(heads[:, 1], np.nextafter(height, 0))
    return AnnotatedScene(image, heads, roi)


def resolution_rules(scene: AnnotatedScene, profile: str) -> AnnotatedScene:
    """``"qnrf"`` caps at 1280x720 (uniform scale); ``"ucsd"`` upsamples to 952x632; anything else is a no-op."""
    if profile == "qnrf":
        max_w, max_h = MAX_720P
        if scene.width <= max_w and scene.height <= max_h:
            return scene
        s = min(max_w / scene.width, max_h / scene.height)
        return resize_scene(scene, max(1, round(scene.width * s)), max(1, round(scene.height * s)))
    if profile == "ucsd":
        return resize_scene(scene, *UCSD_SIZE)
    if profile in ("", "none", "synthetic"):
        return scene
    raise ConfigurationError(f"unknown dataset profile {profile!r}")


def pad_to_multiple(obj, m: int = 8):
    """Zero-pad bottom/right so both spatial dims are multiples of ``m``.

    Accepts a scene or an array whose last two axes are spatial (the trailing
    channel axis of an ``HxWx3`` image is not spatial; scenes handle that).
    Returns ``(padded, (orig_h, orig_w))``.
    """
    if isinstance(obj, AnnotatedScene):
        h, w = obj.height, obj.width
        ph, pw = -h % m, -w % m
        if not ph and not pw:
            return obj, (h, w)
        image = np.pad(obj.image, ((0, ph), (0, pw), (0, 0)))
        roi = None if obj.roi is None else np.pad(obj.roi, ((0, ph), (0, pw)))
        return AnnotatedScene(image, obj.heads.copy(), roi), (h, w)
    arr = np.asarray(obj)
    h, w = arr.shape[-2:]
    pad = [(0, 0)] * (arr.ndim - 2) + [(0, -h % m), (0, -w % m)]
    return np.pad(arr, pad), (h, w)


# -- synthetic scenes ------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSceneSpec:
    width: int = 64
    height: int = 64
    count_range: tuple = (0, 40)
    vertical_scale_gradient: float = 2.0
    seed: int = 0
    base_radius: float = 1.2

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ConfigurationError(f"synthetic scenes need dims >= 32, got {self.width}x{self.height}")
        lo, hi = self.count_range
        if lo < 0 or hi < lo:
            raise ConfigurationError(f"count_range must satisfy 0 <= min <= max, got {self.count_range}")


def _sample_rows(rng, n, height, gradient):
    """Rows with density proportional to ``1 + gradient * y / H`` (inverse CDF)."""
    u = rng.random(n)
    if gradient == 0:
        return u * height
    g = gradient
    # CDF(t) = (t + g t^2 / 2) / (1 + g / 2) for t = y / H in [0, 1]
    t = (-1.0 + np.sqrt(1.0 + 2.0 * g * u * (1.0 + g / 2.0))) / g
    return np.minimum(t * height, np.nextafter(height, 0))


def synth_scene(spec: SyntheticSceneSpec) -> AnnotatedScene:
    """Bright anti-aliased blobs on a textured background, one per head.

    Heads are denser and blobs larger towards the bottom rows, a crude
    perspective proxy. Deterministic in ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    W, H = spec.width, spec.height
    lo, hi = spec.count_range
    n = int(rng.integers(lo, hi + 1))
    ys = _sample_rows(rng, n, H, spec.vertical_scale_gradient)
    xs = rng.random(n) * W
    heads = np.stack([xs, ys], axis=1) if n else np.zeros((0, 2))

    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    base = 40.0 + 25.0 * rng.random(3)
    canvas = base[None, None, :] + 10.0 * rng.standard_normal((H, W, 1))
    tints = 150.0 + 80.0 * rng.random((n, 3))
    for (x, y), tint in zip(heads, tints):
        radius = spec.base_radius * (1.0 + spec.vertical_scale_gradient * y / H)
        alpha = np.clip(radius + 0.5 - np.hypot(xx - x, yy - y), 0.0, 1.0)[:, :, None]
        canvas = canvas * (1.0 - alpha) + tint[None, None, :] * alpha
    image = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return AnnotatedScene(image, heads)


def mean_nn_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return math.nan
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).mean())
