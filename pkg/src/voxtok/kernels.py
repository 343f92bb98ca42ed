"""Distance-kernel backends: compiled extension or pure-numpy fallback.

The native backend (``voxtok._native``) is selected at import when the
extension built; otherwise the numpy fallback runs. Override with the
``VOXTOK_KERNEL`` env var or a per-call ``backend=`` argument. Both backends
tile queries by ``chunk_tokens`` at the caller and are bit-deterministic
under any tiling: the native kernel by its fixed accumulation structure, the
numpy one because ``np.einsum`` computes each output element independently
of the tile shape (BLAS matmul does not, which is why it is not used here).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from voxtok import _native
except ImportError:  # pure-python install, extension not built
    _native = None

_ENV_VAR = "VOXTOK_KERNEL"


def available_backends() -> tuple[str, ...]:
    return ("native", "numpy") if _native is not None else ("numpy",)


def default_backend() -> str:
    choice = os.environ.get(_ENV_VAR)
    if choice:
        return _check_backend(choice)
    return "native" if _native is not None else "numpy"


def _check_backend(backend: str) -> str:
    if backend not in ("native", "numpy"):
        raise ValueError(f"unknown kernel backend {backend!r}")
    if backend == "native" and _native is None:
        raise ValueError("native kernel requested but the extension is not built")
    return backend


def _as_f32c(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float32)


def row_sqnorms(x: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Per-row squared norms, computed with the backend's own accumulator."""
    backend = _check_backend(backend or default_backend())
    x = _as_f32c(x)
    if backend == "native":
        return _native.row_sqnorms(x)
    return np.einsum("id,id->i", x, x)


def min_sqdist(
    queries: np.ndarray,
    cands: np.ndarray,
    cand_sqnorms: np.ndarray | None = None,
    backend: str | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Min squared Euclidean distance from each query to any candidate.

    Uses the Gram identity ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b with tiny
    negatives clamped to 0. Returns float32 [n_queries]. ``cand_sqnorms``
    may be precomputed once per candidate set via :func:`row_sqnorms` with
    the same backend.
    """
    backend = _check_backend(backend or default_backend())
    queries = _as_f32c(queries)
    cands = _as_f32c(cands)
    if cands.shape[0] == 0:
        raise ValueError("empty candidate set")
    if queries.shape[1] != cands.shape[1]:
        raise ValueError(
            f"dimension mismatch: queries {queries.shape[1]} vs candidates {cands.shape[1]}"
        )
    if cand_sqnorms is None:
        cand_sqnorms = row_sqnorms(cands, backend=backend)

    if backend == "native":
        return _native.min_sqdist(queries, cands, cand_sqnorms, threads)

    qq = np.einsum("id,id->i", queries, queries)
    dots = np.einsum("id,jd->ij", queries, cands)
    sq = qq[:, None] + cand_sqnorms[None, :].astype(np.float32) - 2.0 * dots
    np.maximum(sq, 0.0, out=sq)
    return sq.min(axis=1)
