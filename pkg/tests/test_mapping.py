"""Upsampling tests against a direct evaluation of the stated cell-centered
formula, plus convexity bounds and background zeroing."""

import numpy as np
import pytest

from voxtok.mapping import AnomalyMap, build_anomaly_map, upsample_trilinear, zero_background


def _oracle_trilinear(coarse, H):
    """Direct float64 evaluation: src_i = (i + 0.5) * N_p / H - 0.5, clamped."""
    n = coarse.shape[0]
    src = np.clip((np.arange(H) + 0.5) * n / H - 0.5, 0.0, n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    f = src - lo
    c = coarse.astype(np.float64)
    out = np.zeros((H, H, H))
    for i in range(H):
        for j in range(H):
            for k in range(H):
                acc = 0.0
                for (ia, wa) in ((lo[i], 1 - f[i]), (hi[i], f[i])):
                    for (jb, wb) in ((lo[j], 1 - f[j]), (hi[j], f[j])):
                        for (kc, wc) in ((lo[k], 1 - f[k]), (hi[k], f[k])):
                            acc += wa * wb * wc * c[ia, jb, kc]
                out[i, j, k] = acc
    return out


def test_constant_map_stays_constant():
    coarse = np.full((4, 4, 4), 2.5, np.float32)
    full = upsample_trilinear(coarse, 56)
    assert full.shape == (56, 56, 56)
    assert np.all(full == 2.5)


def test_matches_direct_formula_oracle():
    rng = np.random.default_rng(0)
    coarse = rng.random((3, 3, 3)).astype(np.float32)
    full = upsample_trilinear(coarse, 12)
    oracle = _oracle_trilinear(coarse, 12)
    assert np.allclose(full, oracle, atol=1e-6)


def test_ramp_is_monotone_along_axis():
    coarse = np.zeros((2, 2, 2), np.float32)
    coarse[1] = 1.0  # linear ramp along x
    full = upsample_trilinear(coarse, 8)
    diffs = np.diff(full, axis=0)
    assert np.all(diffs >= 0.0)
    assert np.allclose(full, _oracle_trilinear(coarse, 8), atol=1e-6)


def test_output_bounded_by_input_range():
    rng = np.random.default_rng(1)
    coarse = (rng.random((4, 4, 4)).astype(np.float32) - 0.3) * 7.0
    full = upsample_trilinear(coarse, 28)
    assert full.min() >= coarse.min()
    assert full.max() <= coarse.max()


def test_block_center_recovery_odd_patch():
    # odd p puts one output voxel exactly on each coarse grid point
    rng = np.random.default_rng(2)
    for n_p, p in ((2, 7), (4, 3), (3, 5)):
        coarse = rng.random((n_p, n_p, n_p)).astype(np.float32)
        full = upsample_trilinear(coarse, n_p * p)
        centers = np.arange(n_p) * p + (p - 1) // 2
        sub = full[np.ix_(centers, centers, centers)]
        assert np.allclose(sub, coarse, atol=1e-5)


def test_upsample_validation():
    with pytest.raises(ValueError, match="multiple"):
        upsample_trilinear(np.zeros((4, 4, 4), np.float32), 30)
    with pytest.raises(ValueError, match="cube"):
        upsample_trilinear(np.zeros((4, 4), np.float32), 8)


def test_zero_background_identity_and_full():
    rng = np.random.default_rng(3)
    full = rng.random((6, 6, 6)).astype(np.float32)
    assert np.array_equal(zero_background(full, np.ones((6, 6, 6), np.uint8)), full)
    assert np.all(zero_background(full, np.zeros((6, 6, 6), np.uint8)) == 0.0)


def test_zero_background_checkerboard():
    rng = np.random.default_rng(4)
    full = rng.random((4, 4, 4)).astype(np.float32) + 1.0
    x, y, z = np.indices((4, 4, 4))
    mask = ((x + y + z) % 2).astype(np.uint8)
    out = zero_background(full, mask)
    assert np.all(out[mask == 0] == 0.0)
    assert np.array_equal(out[mask == 1], full[mask == 1])


def test_zero_background_dims_mismatch():
    with pytest.raises(ValueError):
        zero_background(np.zeros((4, 4, 4), np.float32), np.ones((5, 5, 5), np.uint8))


def test_build_anomaly_map_invariants():
    rng = np.random.default_rng(5)
    coarse = rng.random((4, 4, 4)).astype(np.float32)
    mask = np.zeros((28, 28, 28), np.uint8)
    mask[4:24, 4:24, 4:24] = 1
    amap = build_anomaly_map("v", coarse, mask)
    assert isinstance(amap, AnomalyMap)
    assert amap.full.shape == (28, 28, 28)
    assert np.isfinite(amap.full).all()
    assert np.all(amap.full[mask == 0] == 0.0)
    assert amap.full.min() >= 0.0
