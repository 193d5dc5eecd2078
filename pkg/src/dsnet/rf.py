"""Receptive-field sizes and gridding audits for stacks of dilated convolutions.

Supports are computed exactly as Minkowski sums of per-layer tap offsets
``{-d*r, ..., 0, ..., d*r}`` (kernel ``2r+1``, dilation ``d``), rasterized by
brute force.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DSNetError

PATH_CAP = 2**20


class PathCountError(DSNetError, ValueError):
    """Dense-path enumeration would exceed :data:`PATH_CAP` paths."""


@dataclass(frozen=True, order=True)
class DilationPath:
    layers: tuple  # ((kernel, dilation), ...)

    def __post_init__(self):
        layers = tuple((int(k), int(d)) for k, d in self.layers)
        if not layers:
            raise ConfigurationError("a dilation path needs at least one layer")
        for k, d in layers:
            if k < 1 or k % 2 == 0 or d < 1:
                raise ConfigurationError(f"layers need odd positive kernels and positive dilations, got ({k}, {d})")
        object.__setattr__(self, "layers", layers)

    @classmethod
    def of(cls, dilations, kernel: int = 3) -> "DilationPath":
        return cls(tuple((kernel, d) for d in dilations))

    @property
    def dilations(self) -> tuple:
        return tuple(d for _, d in self.layers)

    def __str__(self):
        return "+".join(f"({k},{d})" for k, d in self.layers)


def rf_size(path: DilationPath) -> int:
    return 1 + sum((k - 1) * d for k, d in path.layers)


def taps(kernel: int, dilation: int) -> np.ndarray:
    r = kernel // 2
    return dilation * np.arange(-r, r + 1)


def support_1d(path: DilationPath, start=(0,)) -> np.ndarray:
    """Sorted offsets reachable through ``path`` from the offsets in ``start``."""
    reach = set(int(s) for s in start)
    for k, d in path.layers:
        reach = {a + t for a in reach for t in taps(k, d).tolist()}
    return np.array(sorted(reach))


def support_2d(path: DilationPath) -> np.ndarray:
    """Boolean ``K x K`` raster of reachable offsets, centre at ``(K//2, K//2)``."""
    K = rf_size(path)
    grid = np.zeros((K, K), dtype=bool)
    grid[K // 2, K // 2] = True
    for k, d in path.layers:
        grid = _dilate(grid, k, d)
    return grid


def _dilate(grid, kernel, dilation):
    out = np.zeros_like(grid)
    for dy in taps(kernel, dilation):
        for dx in taps(kernel, dilation):
            out |= _shift(grid, dy, dx)
    return out


def _shift(grid, dy, dx):
    out = np.zeros_like(grid)
    h, w = grid.shape
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = grid[ys, xs]
    return out


@dataclass(frozen=True)
class Coverage:
    touched: int
    rf_cells: int
    lost_fraction: float


def coverage(path: DilationPath, dims: int = 2) -> Coverage:
    """How many cells of the ``K^dims`` receptive field actually feed the output."""
    K = rf_size(path)
    if dims == 1:
        touched = len(support_1d(path))
    elif dims == 2:
        touched = int(support_2d(path).sum())
    else:
        raise ConfigurationError(f"dims must be 1 or 2, got {dims}")
    cells = K**dims
    return Coverage(touched, cells, 1.0 - touched / cells)


# -- dense path enumeration ------------------------------------------------


def _ordered_subsets(layers):
    for r in range(1, len(layers) + 1):
        yield from itertools.combinations(layers, r)


def dense_paths(dilations, connectivity: str = "dense", blocks: int = 1, kernel: int = 3) -> list[DilationPath]:
    """All layer sequences a signal can traverse.

    ``sequential``: the single full chain. ``dense``: every non-empty subset in
    layer order (skips bypass layers). ``dense_residual_blocks``: ``blocks``
    copies of the dense block, each of which may also be skipped entirely.
    """
    layers = [(kernel, int(d)) for d in dilations]
    if not layers:
        return []
    if connectivity == "sequential":
        return [DilationPath(tuple(layers * max(1, blocks)))]
    if connectivity == "dense":
        blocks = 1
    elif connectivity != "dense_residual_blocks":
        raise ConfigurationError(f"unknown connectivity {connectivity!r}")
    total = (2 ** len(layers)) ** blocks - 1
    if total > PATH_CAP:
        raise PathCountError(f"{total} paths exceed the cap of {PATH_CAP}")
    per_block = [()] + list(_ordered_subsets(layers))
    seqs = set()
    for combo in itertools.product(per_block, repeat=blocks):
        seq = tuple(itertools.chain.from_iterable(combo))
        if seq:
            seqs.add(seq)
    return [DilationPath(s) for s in seqs]


@dataclass
class RFReport:
    paths: list  # [(DilationPath, K)] sorted by K then layers
    distinct_sizes: list
    max_gap: int
    coverage: float
    lost_fraction: float
    full_chain: DilationPath | None = None

    def as_dict(self) -> dict:
        return {
            "paths": [{"layers": [list(l) for l in p.layers], "K": K} for p, K in self.paths],
            "distinct_sizes": self.distinct_sizes,
            "max_gap": self.max_gap,
            "coverage": self.coverage,
            "lost_fraction": self.lost_fraction,
            "full_chain": None if self.full_chain is None else [list(l) for l in self.full_chain.layers],
        }


def enumerate_dense_paths(dilations, connectivity: str = "dense", blocks: int = 1, kernel: int = 3) -> RFReport:
    """Receptive-field sizes over all paths; coverage refers to the full chain."""
    paths = dense_paths(dilations, connectivity, blocks, kernel)
    ranked = sorted(((p, rf_size(p)) for p in paths), key=lambda pk: (pk[1], pk[0].layers))
    sizes = sorted({K for _, K in ranked})
    gap = max((b - a for a, b in zip(sizes, sizes[1:])), default=0)
    if not ranked:
        return RFReport([], [], 0, 1.0, 0.0, None)
    full = max(ranked, key=lambda pk: (len(pk[0].layers), pk[1]))[0]
    cov = coverage(full, 2)
    return RFReport(ranked, sizes, gap, cov.touched / cov.rf_cells, cov.lost_fraction, full)


# -- gridding audit --------------------------------------------------------


def dense_node_supports(dilations, kernel: int = 3) -> list[np.ndarray]:
    """2-D support raster of each layer's output inside one densely connected block.

    Layer ``j`` sees the block input plus every earlier layer's output, so its
    support is ``({0} | S_1 | ... | S_{j-1}) (+) taps_j``. All rasters share one
    frame sized for the full chain, centred on the output pixel.
    """
    K = rf_size(DilationPath.of(dilations, kernel))
    seen = np.zeros((K, K), dtype=bool)
    seen[K // 2, K // 2] = True
    supports = []
    for d in dilations:
        s = _dilate(seen, kernel, d)
        supports.append(s)
        seen = seen | s
    return supports


def _bbox_side(grid) -> int:
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    return int(max(rows[-1] - rows[0], cols[-1] - cols[0]) + 1)


@dataclass
class AuditEntry:
    label: str
    dilations: tuple
    path_rows: list  # (path, K, touched_2d, cells_2d, lost)
    node_rows: list  # (layer index, dilation, K, touched_2d, cells_2d, lost)

    @property
    def flagged(self) -> list:
        return [row for row in self.node_rows if row[5] > 0]

    @property
    def passed(self) -> bool:
        return not self.flagged


@dataclass
class AuditReport:
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def text(self) -> str:
        lines = []
        for e in self.entries:
            verdict = "PASS" if e.passed else "FAIL"
            lines.append(f"== {e.label}: dilations {list(e.dilations)} -> {verdict}")
            lines.append("  dense paths (K, 2-D touched/cells, lost):")
            for path, K, touched, cells, lost in e.path_rows:
                lines.append(f"    {str(path):<40} K={K:<4} {touched}/{cells}  lost {100 * lost:.1f}%")
            lines.append("  layer outputs (union over dense paths):")
            for j, d, K, touched, cells, lost in e.node_rows:
                flag = "  <-- gridding" if lost > 0 else ""
                lines.append(f"    layer {j} (d={d}) K={K:<4} {touched}/{cells}  lost {100 * lost:.1f}%{flag}")
        return "\n".join(lines) + ("\n" if lines else "")

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "entries": [
                {
                    "label": e.label,
                    "dilations": list(e.dilations),
                    "passed": e.passed,
                    "paths": [
                        {"layers": [list(l) for l in p.layers], "K": K, "touched": t, "cells": c, "lost_fraction": lf}
                        for p, K, t, c, lf in e.path_rows
                    ],
                    "layers": [
                        {"index": j, "dilation": d, "K": K, "touched": t, "cells": c, "lost_fraction": lf}
                        for j, d, K, t, c, lf in e.node_rows
                    ],
                }
                for e in self.entries
            ],
        }


def gridding_audit(items, kernel: int = 3) -> AuditReport:
    """Audit dilation lists (or objects with a ``dilations`` attribute).

    A block passes when every layer's output, taking the union over all dense
    paths that reach it, covers its whole receptive field.
    """
    report = AuditReport()
    for i, item in enumerate(items):
        dil = tuple(getattr(item, "dilations", item))
        label = getattr(item, "label", None) or f"block {i}"
        rows = []
        for path, K in enumerate_dense_paths(dil, "dense", kernel=kernel).paths:
            cov = coverage(path, 2)
            rows.append((path, K, cov.touched, cov.rf_cells, cov.lost_fraction))
        nodes = []
        for j, (d, s) in enumerate(zip(dil, dense_node_supports(dil, kernel) if dil else [])):
            K = _bbox_side(s)
            touched = int(s.sum())
            nodes.append((j, d, K, touched, K * K, 1.0 - touched / (K * K)))
        report.entries.append(AuditEntry(label, dil, rows, nodes))
    return report


def write_coverage_pgm(path, grid: np.ndarray, cell: int = 8):
    """Save a boolean support raster as an enlarged 8-bit portable graymap."""
    from PIL import Image

    img = np.kron(grid.astype(np.uint8) * 255, np.ones((cell, cell), dtype=np.uint8))
    Image.fromarray(img, mode="L").save(Path(path), format="PPM")


def report_json(report) -> str:
    return json.dumps(report.as_dict(), indent=2)
