"""Distance-kernel backend tests: correctness vs a direct-difference oracle,
cross-backend agreement, and bit-determinism under tiling and threading."""

import numpy as np
import pytest

from voxtok import kernels

BACKENDS = kernels.available_backends()


def _oracle_min_sqdist(queries, cands):
    """Direct differences in float64; independent of the Gram-trick path."""
    out = np.empty(queries.shape[0])
    for i, q in enumerate(queries.astype(np.float64)):
        diff = cands.astype(np.float64) - q
        out[i] = np.min(np.sum(diff * diff, axis=1))
    return out


def test_native_backend_is_built_and_default():
    assert "native" in BACKENDS
    assert kernels.default_backend() == "native"


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_direct_oracle(backend):
    rng = np.random.default_rng(0)
    queries = rng.standard_normal((70, 33), dtype=np.float32)
    cands = rng.standard_normal((50, 33), dtype=np.float32)
    got = kernels.min_sqdist(queries, cands, backend=backend)
    want = _oracle_min_sqdist(queries, cands)
    assert np.allclose(got, want, rtol=1e-5, atol=1e-6)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("extension not built")
    rng = np.random.default_rng(1)
    queries = rng.standard_normal((64, 96), dtype=np.float32)
    cands = rng.standard_normal((128, 96), dtype=np.float32)
    a = kernels.min_sqdist(queries, cands, backend="native")
    b = kernels.min_sqdist(queries, cands, backend="numpy")
    assert np.allclose(a, b, rtol=1e-4, atol=1e-5)


@pytest.mark.parametrize("backend", BACKENDS)
def test_identity_match_is_exactly_zero(backend):
    rng = np.random.default_rng(2)
    queries = rng.standard_normal((10, 40), dtype=np.float32)
    cands = np.concatenate([rng.standard_normal((30, 40), dtype=np.float32) * 5, queries])
    sq = kernels.min_sqdist(queries, cands, backend=backend)
    assert np.all(sq == 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_clamps_negative_roundoff(backend):
    # near-identical large-norm vectors provoke negative Gram residuals
    rng = np.random.default_rng(3)
    base = rng.standard_normal((1, 64)).astype(np.float32) * 1e3
    queries = base + rng.standard_normal((5, 64)).astype(np.float32) * 1e-4
    sq = kernels.min_sqdist(queries, base, backend=backend)
    assert np.all(sq >= 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("tile", [1, 7, 33, 64])
def test_tiling_bit_invariance(backend, tile):
    rng = np.random.default_rng(4)
    queries = rng.standard_normal((64, 48), dtype=np.float32)
    cands = rng.standard_normal((100, 48), dtype=np.float32)
    norms = kernels.row_sqnorms(cands, backend=backend)
    full = kernels.min_sqdist(queries, cands, cand_sqnorms=norms, backend=backend)
    tiled = np.concatenate(
        [
            kernels.min_sqdist(queries[i : i + tile], cands, cand_sqnorms=norms, backend=backend)
            for i in range(0, 64, tile)
        ]
    )
    assert np.array_equal(full, tiled)


def test_thread_bit_invariance():
    if "native" not in BACKENDS:
        pytest.skip("extension not built")
    rng = np.random.default_rng(5)
    queries = rng.standard_normal((200, 64), dtype=np.float32)
    cands = rng.standard_normal((150, 64), dtype=np.float32)
    results = [
        kernels.min_sqdist(queries, cands, backend="native", threads=t) for t in (1, 2, 4, 8)
    ]
    for r in results[1:]:
        assert np.array_equal(results[0], r)


def test_validation_errors():
    q = np.zeros((2, 4), np.float32)
    with pytest.raises(ValueError, match="empty candidate"):
        kernels.min_sqdist(q, np.zeros((0, 4), np.float32))
    with pytest.raises(ValueError, match="mismatch"):
        kernels.min_sqdist(q, np.zeros((3, 5), np.float32))
    with pytest.raises(ValueError, match="unknown"):
        kernels.min_sqdist(q, np.zeros((3, 4), np.float32), backend="cuda")


def test_odd_dims_remainder_loop():
    # dims not divisible by 4 exercise the native remainder path
    rng = np.random.default_rng(6)
    for d in (1, 2, 3, 5, 17):
        queries = rng.standard_normal((8, d), dtype=np.float32)
        cands = rng.standard_normal((9, d), dtype=np.float32)
        want = _oracle_min_sqdist(queries, cands)
        for backend in BACKENDS:
            got = kernels.min_sqdist(queries, cands, backend=backend)
            assert np.allclose(got, want, rtol=1e-4, atol=1e-6), (backend, d)
