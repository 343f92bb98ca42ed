"""Coarse-to-voxel anomaly maps: trilinear upsampling and background zeroing.

Alignment is cell-centered ("half-pixel"): output voxel i samples the coarse
grid at (i + 0.5) * N_p / H - 0.5, clamped to [0, N_p - 1]. This matches the
pooling geometry, where a token represents a centered p^3 cube. The three
axes are interpolated separably in x, y, z order, each 1-D step computed as
a + f * (b - a) with f in [0, 1], so outputs never leave [min, max] of the
input even in float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxtok.model import validate_mask


def _axis_coords(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_dst, dtype=np.float64) + 0.5) * n_src / n_dst - 0.5
    src = np.clip(src, 0.0, n_src - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = (src - lo).astype(np.float32)
    return lo, hi, frac


def _lerp_axis(vol: np.ndarray, axis: int, n_dst: int) -> np.ndarray:
    lo, hi, frac = _axis_coords(vol.shape[axis], n_dst)
    a = np.take(vol, lo, axis=axis)
    b = np.take(vol, hi, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = n_dst
    f = frac.reshape(shape)
    return a + f * (b - a)


def upsample_trilinear(coarse: np.ndarray, H: int) -> np.ndarray:
    """Resize a coarse [N_p]^3 map to [H]^3 by cell-centered trilinear interpolation."""
    if coarse.ndim != 3 or len(set(coarse.shape)) != 1:
        raise ValueError(f"coarse map must be a cube, got shape {coarse.shape}")
    n_p = coarse.shape[0]
    if H % n_p != 0:
        raise ValueError(f"H={H} is not a multiple of N_p={n_p}")
    out = coarse.astype(np.float32)
    for axis in range(3):
        out = _lerp_axis(out, axis, H)
    return np.ascontiguousarray(out, dtype=np.float32)


def zero_background(full: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Return a copy of ``full`` with score 0 wherever the brain mask is 0."""
    mask = validate_mask(mask)
    if full.shape != mask.shape:
        raise ValueError(f"map shape {full.shape} does not match mask {mask.shape}")
    out = full.astype(np.float32, copy=True)
    out[mask == 0] = 0.0
    return out


@dataclass
class AnomalyMap:
    """Coarse and voxel-resolution score fields for one volume."""

    volume_id: str
    coarse: np.ndarray  # [N_p]^3 float32
    full: np.ndarray  # [H]^3 float32, zero on background
    threshold_meta: float | None = None


def build_anomaly_map(volume_id: str, coarse: np.ndarray, mask: np.ndarray) -> AnomalyMap:
    """Upsample a coarse map to the mask's resolution and zero the background."""
    full = zero_background(upsample_trilinear(coarse, mask.shape[0]), mask)
    return AnomalyMap(volume_id=volume_id, coarse=coarse, full=full)
