import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from dsnet.errors import ConfigurationError
from dsnet.model import DdcbSpec
from dsnet.rf import (
    DilationPath,
    PathCountError,
    coverage,
    dense_paths,
    enumerate_dense_paths,
    gridding_audit,
    report_json,
    rf_size,
    support_1d,
    support_2d,
    write_coverage_pgm,
)
from dsnet.tensor import Conv2dSpec, Tensor, conv2d

layer = st.tuples(st.sampled_from([1, 3, 5]), st.integers(1, 6))
stacks = st.lists(layer, min_size=1, max_size=4)


def impulse_support(layers):
    """Nonzero set of an impulse pushed through all-ones convs."""
    K = rf_size(DilationPath(tuple(layers)))
    size = 2 * K + 1
    x = np.zeros((1, 1, size, size))
    x[0, 0, K, K] = 1.0
    t = Tensor(x)
    for k, d in layers:
        t = conv2d(t, Tensor(np.ones((1, 1, k, k))), None, Conv2dSpec.same(1, 1, k, d))
    r = K // 2
    window = t.data[0, 0, K - r:K + r + 1, K - r:K + r + 1]
    assert np.count_nonzero(t.data) == np.count_nonzero(window)
    return window > 0


def test_rf_size_examples():
    assert rf_size(DilationPath.of([1])) == 3
    assert rf_size(DilationPath.of([1, 2, 3])) == 13
    assert rf_size(DilationPath.of([3, 6])) == 19


def test_path_validation():
    with pytest.raises(ConfigurationError):
        DilationPath(())
    with pytest.raises(ConfigurationError):
        DilationPath(((2, 1),))
    with pytest.raises(ConfigurationError):
        DilationPath(((3, 0),))


def test_gridding_figures():
    path = DilationPath.of([3, 6])
    c1 = coverage(path, 1)
    assert (c1.touched, c1.rf_cells) == (7, 19)
    assert support_1d(path).tolist() == [-9, -6, -3, 0, 3, 6, 9]
    c2 = coverage(path, 2)
    assert (c2.touched, c2.rf_cells) == (49, 361)
    assert abs(c2.lost_fraction - 0.8643) < 0.0005
    full = coverage(DilationPath.of([1, 2, 3]), 2)
    assert (full.touched, full.rf_cells, full.lost_fraction) == (169, 169, 0.0)
    with pytest.raises(ConfigurationError):
        coverage(path, 3)


def test_dense_enumeration():
    rep = enumerate_dense_paths([1, 2, 3])
    assert rep.distinct_sizes == [3, 5, 7, 9, 11, 13] and rep.max_gap == 2
    assert len(rep.paths) == 7 and rep.lost_fraction == 0.0
    ks = [K for _, K in rep.paths]
    assert ks == sorted(ks)
    seq = enumerate_dense_paths([3, 6], "sequential")
    assert [(p.dilations, K) for p, K in seq.paths] == [((3, 6), 19)]
    for conn in ("sequential", "dense", "dense_residual_blocks"):
        one = enumerate_dense_paths([4], conn)
        assert [K for _, K in one.paths] == [9]
    with pytest.raises(ConfigurationError):
        dense_paths([1, 2], "ring")


def test_dense_residual_blocks():
    rep = enumerate_dense_paths([1, 2, 3], "dense_residual_blocks", blocks=2)
    assert rep.distinct_sizes[:6] == [3, 5, 7, 9, 11, 13]
    assert max(rep.distinct_sizes) == 25 and rep.max_gap == 2
    with pytest.raises(PathCountError):
        dense_paths(list(range(1, 8)), "dense_residual_blocks", blocks=3)


@settings(max_examples=60, deadline=None)
@given(stacks)
def test_rf_size_is_support_bbox(layers):
    path = DilationPath(tuple(layers))
    s = support_1d(path)
    assert s[-1] - s[0] + 1 == rf_size(path)


@settings(max_examples=60, deadline=None)
@given(stacks)
def test_2d_touched_is_1d_squared(layers):
    path = DilationPath(tuple(layers))
    assert coverage(path, 2).touched == coverage(path, 1).touched ** 2


@settings(max_examples=80, deadline=None)
@given(stacks)
def test_dilation_one_layer_fills_small_gaps(layers):
    path = DilationPath(tuple(layers))
    s = support_1d(path)
    if np.diff(s).max(initial=1) > 3:
        return
    grown = DilationPath(path.layers + ((3, 1),))
    assert coverage(grown, 2).lost_fraction == 0.0


def test_minkowski_matches_impulse_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        depth = int(rng.integers(1, 5))
        layers = [(int(rng.choice([1, 3, 5])), int(rng.integers(1, 7))) for _ in range(depth)]
        assert np.array_equal(support_2d(DilationPath(tuple(layers))), impulse_support(layers)), layers


def test_audit_ddcb_passes():
    rep = gridding_audit([DdcbSpec(8, 2, 4, 8)])
    assert rep.passed
    assert "PASS" in rep.text()
    assert [row[2] for row in rep.entries[0].node_rows] == [3, 7, 13]


def test_audit_denseaspp_fails():
    rep = gridding_audit([[3, 6, 12, 18, 24]])
    assert not rep.passed
    entry = rep.entries[0]
    assert len(entry.path_rows) == 31 and entry.flagged
    assert "FAIL" in rep.text() and "gridding" in rep.text()
    doc = json.loads(report_json(rep))
    assert doc["passed"] is False and len(doc["entries"][0]["paths"]) == 31


def test_audit_empty():
    rep = gridding_audit([])
    assert rep.passed and rep.entries == [] and rep.text() == ""


def test_heatmap(tmp_path):
    grid = support_2d(DilationPath.of([3, 6]))
    write_coverage_pgm(tmp_path / "h.pgm", grid, cell=4)
    assert (tmp_path / "h.pgm").read_bytes()[:2] == b"P5"
    img = np.asarray(Image.open(tmp_path / "h.pgm"))
    assert img.shape == (76, 76)
    assert np.array_equal(img[::4, ::4] > 0, grid)
