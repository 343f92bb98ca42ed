"""Multi-axis 3D patch tokenization: pool, project, fuse, mask.

Axis alignment convention: the slicing axis of each view maps to x (axial),
y (coronal) and z (sagittal); the in-slice (u, v) coordinates map to the
remaining grid axes in ascending order. So

    axial    grid[x, y, z] = pooled[block=x, u=y, v=z]
    coronal  grid[x, y, z] = pooled[block=y, u=x, v=z]
    sagittal grid[x, y, z] = pooled[block=z, u=x, v=y]

which puts all three views on one shared (x, y, z) frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from voxtok.model import AXES, ScoreConfig, SliceFeatureStack, TokenCollection, validate_mask


@dataclass(frozen=True)
class ProjectionMatrix:
    """Fixed Gaussian random projection, entries i.i.d. N(0, 1/k).

    Fully determined by (D, k, seed): the same triple always reproduces the
    same float32 entries.
    """

    D: int
    k: int
    seed: int
    entries: np.ndarray


def build_projection(D: int, k: int, seed: int) -> ProjectionMatrix:
    if k < 1:
        raise ValueError(f"projection dim k must be >= 1, got {k}")
    if k > D:
        raise ValueError(f"projection dim k={k} exceeds input dim D={D}")
    rng = np.random.default_rng(seed)
    entries = rng.standard_normal((D, k), dtype=np.float32)
    entries *= np.float32(1.0 / math.sqrt(k))
    return ProjectionMatrix(D=D, k=k, seed=seed, entries=entries)


@dataclass
class AxisTokenGrid:
    """Pooled, l2-normalized per-axis tokens on the aligned (x, y, z) grid."""

    axis: str
    layer_id: int
    grid: np.ndarray  # [N_p, N_p, N_p, D] float32


_BLOCK_TO_XYZ = {
    # pooled array is (block, u, v, feat); transpose to (x, y, z, feat)
    "axial": (0, 1, 2, 3),
    "coronal": (1, 0, 2, 3),
    "sagittal": (1, 2, 0, 3),
}


def pool_axis(stack: SliceFeatureStack) -> AxisTokenGrid:
    """Average slice features over depth-p blocks and l2-normalize.

    Zero pooled vectors (void regions) stay zero instead of erroring; they
    only ever occur on background tokens.
    """
    n_p, p = stack.n_p, stack.patch
    data = stack.data.reshape(n_p, p, n_p, n_p, stack.D)
    pooled = data.mean(axis=1, dtype=np.float32)
    grid = np.ascontiguousarray(pooled.transpose(_BLOCK_TO_XYZ[stack.axis]))
    _l2_normalize_inplace(grid)
    return AxisTokenGrid(axis=stack.axis, layer_id=stack.layer_id, grid=grid)


def _l2_normalize_inplace(grid: np.ndarray) -> None:
    norms = np.sqrt(np.einsum("...d,...d->...", grid, grid))
    nonzero = norms > 0
    grid[nonzero] /= norms[nonzero][..., None]


def project_axis(grid: AxisTokenGrid, proj: ProjectionMatrix) -> np.ndarray:
    """Apply the random projection tokenwise: out = R^T z, shape [N,N,N,k]."""
    D = grid.grid.shape[-1]
    if D != proj.D:
        raise ValueError(f"feature dim {D} does not match projection D={proj.D}")
    n_p = grid.grid.shape[0]
    flat = grid.grid.reshape(-1, D)
    out = flat @ proj.entries
    return out.reshape(n_p, n_p, n_p, proj.k)


def fuse_views(ax: np.ndarray, cor: np.ndarray, sag: np.ndarray) -> np.ndarray:
    """Concatenate projected views per location, fixed order axial|coronal|sagittal."""
    if not (ax.shape == cor.shape == sag.shape):
        raise ValueError(
            f"projected grids disagree: axial {ax.shape}, coronal {cor.shape}, "
            f"sagittal {sag.shape}"
        )
    return np.concatenate([ax, cor, sag], axis=-1)


def mask_to_keep(mask: np.ndarray, p: int, threshold: float = 0.0) -> np.ndarray:
    """Keep grid [N_p]^3: 1 where the p^3 cube's foreground fraction > threshold.

    The default threshold 0.0 keeps a token as soon as a single brain voxel
    falls inside its cube.
    """
    mask = validate_mask(mask)
    H = mask.shape[0]
    if H % p != 0:
        raise ValueError(f"mask edge {H} not divisible by patch size {p}")
    n_p = H // p
    counts = (
        mask.reshape(n_p, p, n_p, p, n_p, p)
        .sum(axis=(1, 3, 5), dtype=np.int64)
    )
    return (counts > threshold * p**3).astype(np.uint8)


def tokenize_volume(
    stacks: dict[str, SliceFeatureStack],
    mask: np.ndarray,
    config: ScoreConfig,
    projection: ProjectionMatrix | None = None,
) -> TokenCollection:
    """Pool -> project -> fuse -> attach keep grid for one (volume, layer).

    One ProjectionMatrix is shared across all axes (and, when the caller
    passes it in, across all layers and volumes of a run). Background tokens
    are stored but flagged keep = 0.
    """
    missing = [a for a in AXES if a not in stacks]
    if missing:
        raise ValueError(f"missing axis stacks: {', '.join(missing)}")
    ax_stack = stacks["axial"]
    for a in AXES:
        s = stacks[a]
        if s.layer_id != ax_stack.layer_id:
            raise ValueError(
                f"layer mismatch across axes: {s.axis}={s.layer_id} vs axial={ax_stack.layer_id}"
            )
        if s.H != ax_stack.H or s.D != ax_stack.D:
            raise ValueError(
                f"shape mismatch across axes: {s.axis} is H={s.H} D={s.D}, "
                f"axial is H={ax_stack.H} D={ax_stack.D}"
            )
    validate_mask(mask, H=ax_stack.H)

    if projection is None:
        projection = build_projection(ax_stack.D, config.k, config.seed)
    projected = {a: project_axis(pool_axis(stacks[a]), projection) for a in AXES}
    tokens = fuse_views(projected["axial"], projected["coronal"], projected["sagittal"])
    if config.renormalize_projected:
        _l2_normalize_inplace(tokens)
    keep = mask_to_keep(mask, ax_stack.patch, config.mask_keep_threshold)
    return TokenCollection(
        volume_id=ax_stack.volume_id,
        layer_id=ax_stack.layer_id,
        tokens=tokens,
        keep=keep,
    )
