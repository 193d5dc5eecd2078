import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsnet.data import AnnotatedScene
from dsnet.density import (
    AdaptiveKernel,
    AdaptiveKernelConfig,
    DensityMap,
    FixedKernel,
    adaptive_sigmas,
    build_density_map,
    gaussian_splat,
    parse_kernel_mode,
    sum_pool_downsample,
)
from dsnet.errors import ConfigurationError, ContractViolation


def scene(w, h, heads=(), roi=None):
    return AnnotatedScene(np.zeros((h, w, 3), np.uint8), np.asarray(heads, dtype=np.float64), roi)


def test_splat_center_and_corner():
    d = gaussian_splat(DensityMap.zeros(41, 41), (20.0, 20.0), 3.0)
    assert abs(d.nominal_count - 1.0) < 1e-9
    d = gaussian_splat(DensityMap.zeros(30, 30), (0.0, 0.0), 5.0)
    assert abs(d.nominal_count - 1.0) < 1e-9


def test_splat_peak_ratio():
    d = gaussian_splat(DensityMap.zeros(41, 41), (20, 20), 2.0).grid
    assert abs(d[20, 20] / d[20, 22] - math.exp(0.5)) < 1e-12


def test_splat_matches_direct_gaussian():
    # oracle: normalized exp over the truncated, clipped integer window
    x, y, s = 3.3, 5.7, 1.5
    d = gaussian_splat(DensityMap.zeros(12, 9), (x, y), s).grid
    rr, cc = np.mgrid[0:12, 0:9]
    g = np.exp(-((cc - x) ** 2 + (rr - y) ** 2) / (2 * s * s))
    g[(np.abs(cc - x) > 4 * s) | (np.abs(rr - y) > 4 * s)] = 0
    np.testing.assert_allclose(d, g / g.sum(), rtol=0, atol=1e-15)


def test_splat_rejects_bad_sigma():
    with pytest.raises(ConfigurationError):
        gaussian_splat(DensityMap.zeros(5, 5), (2, 2), 0.0)


def test_splat_tiny_sigma_off_grid():
    d = gaussian_splat(DensityMap.zeros(5, 5), (0.5, 0.5), 0.01)
    assert abs(d.nominal_count - 1.0) < 1e-12 and np.all(np.isfinite(d.grid))


def test_adaptive_sigma_examples():
    assert np.allclose(adaptive_sigmas([(0, 0), (10, 0), (0, 10)])[0], 3.0, rtol=0, atol=1e-12)
    assert adaptive_sigmas([(4, 4)]).tolist() == [15.0]
    s = adaptive_sigmas([(0, 0), (1, 0), (2, 0), (3, 0)])
    assert abs(s[0] - 0.6) < 1e-12
    # head (1,0): neighbours at 1, 1, 2 -> mean 4/3
    assert abs(s[1] - 0.3 * 4 / 3) < 1e-12
    with pytest.raises(ContractViolation):
        adaptive_sigmas(np.zeros((0, 2)))


def test_adaptive_config_validation():
    for bad in ({"beta": 0}, {"k": 0}, {"truncation_radius_sigmas": 1.5}, {"fallback_sigma": -1}):
        with pytest.raises(ConfigurationError):
            AdaptiveKernelConfig(**bad)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 10**6), angle=st.floats(0, 2 * math.pi))
def test_adaptive_sigmas_rigid_invariance(n, seed, angle):
    pts = np.random.default_rng(seed).uniform(0, 50, (n, 2))
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved = pts @ rot.T + np.array([7.5, -3.25])
    np.testing.assert_allclose(adaptive_sigmas(moved), adaptive_sigmas(pts), rtol=1e-9)


def test_build_density_examples():
    assert build_density_map(scene(16, 16), FixedKernel(2)).nominal_count == 0
    heads = [(1, 1), (15.5, 3.2), (8, 8), (0, 15.9)]
    assert abs(build_density_map(scene(16, 16, heads), FixedKernel(3)).nominal_count - 4) < 1e-6
    assert abs(build_density_map(scene(16, 16, heads), AdaptiveKernel()).nominal_count - 4) < 1e-6


def test_roi_removes_mass():
    roi = np.zeros((40, 80), bool)
    roi[:, :40] = True
    s = scene(80, 40, [(15, 20), (65, 20)], roi)
    assert abs(build_density_map(s, FixedKernel(2)).nominal_count - 1.0) < 1e-6


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 60), seed=st.integers(0, 10**6), adaptive=st.booleans())
def test_count_conservation(n, seed, adaptive):
    r = np.random.default_rng(seed)
    w, h = int(r.integers(8, 40)), int(r.integers(8, 40))
    heads = np.stack([r.uniform(0, w, n), r.uniform(0, h, n)], 1) if n else np.zeros((0, 2))
    mode = AdaptiveKernel() if adaptive else FixedKernel(float(r.uniform(0.3, 6)))
    d = build_density_map(scene(w, h, heads), mode)
    assert abs(d.nominal_count - n) < 1e-6 * max(1, n)
    assert np.all(d.grid >= 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_adding_head_is_monotone(seed):
    r = np.random.default_rng(seed)
    heads = r.uniform(0, 20, (5, 2))
    before = build_density_map(scene(20, 20, heads), FixedKernel(2)).grid
    after = build_density_map(scene(20, 20, np.vstack([heads, r.uniform(0, 20, (1, 2))])), FixedKernel(2)).grid
    assert np.all(after >= before - 1e-15)


def test_downsample_examples():
    assert sum_pool_downsample(np.full((8, 8), 1 / 64), 8).grid.tolist() == [[1.0]]
    assert sum_pool_downsample(np.eye(4), 2).grid.tolist() == [[2.0, 0.0], [0.0, 2.0]]
    with pytest.raises(ContractViolation):
        sum_pool_downsample(np.zeros((6, 8)), 4)


@settings(max_examples=40, deadline=None)
@given(f=st.integers(1, 8), bh=st.integers(1, 6), bw=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_downsample_conserves(f, bh, bw, seed):
    grid = np.random.default_rng(seed).random((f * bh, f * bw))
    assert abs(sum_pool_downsample(grid, f).nominal_count - grid.sum()) < 1e-12


def test_parse_kernel_mode():
    assert parse_kernel_mode("fixed:4") == FixedKernel(4.0)
    assert parse_kernel_mode("adaptive") == AdaptiveKernel()
    assert parse_kernel_mode({"kind": "adaptive", "beta": 0.5}).config.beta == 0.5
    assert parse_kernel_mode({"kind": "fixed", "sigma": 1.5}) == FixedKernel(1.5)
    with pytest.raises(ConfigurationError):
        parse_kernel_mode("gauss")
