"""Shared domain types: feature stacks, token collections, scoring config."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXES = ("axial", "coronal", "sagittal")

EXCLUSION_POLICIES = ("none", "consistent-anomaly")


@dataclass(frozen=True)
class ScoreConfig:
    """Global knobs for tokenization and batch scoring.

    ``K_fraction`` picks the MSV prefix length as a fraction of the batch,
    ``chunk_tokens`` is the query tile size of the distance kernel, and
    ``exclusion_*`` drive the consistent-anomaly hook. ``renormalize_projected``
    re-applies l2 normalization after projection and fusion (off by default;
    normalization otherwise happens only at pooling time).
    """

    layers: tuple[int, ...] = (6, 12, 18, 24)
    k: int = 128
    K_fraction: float = 0.3
    seed: int = 0
    chunk_tokens: int = 4096
    mask_keep_threshold: float = 0.0
    exclusion_policy: str = "consistent-anomaly"
    exclusion_top_fraction: float = 0.05
    exclusion_edge_fraction: float = 0.1
    renormalize_projected: bool = False

    def __post_init__(self):
        if not self.layers:
            raise ValueError("layers must be non-empty")
        if not 0 < self.K_fraction <= 1:
            raise ValueError(f"K_fraction must be in (0, 1], got {self.K_fraction}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.chunk_tokens < 1:
            raise ValueError(f"chunk_tokens must be >= 1, got {self.chunk_tokens}")
        if not 0 <= self.mask_keep_threshold < 1:
            raise ValueError(
                f"mask_keep_threshold must be in [0, 1), got {self.mask_keep_threshold}"
            )
        if self.exclusion_policy not in EXCLUSION_POLICIES:
            raise ValueError(
                f"exclusion_policy must be one of {EXCLUSION_POLICIES}, "
                f"got {self.exclusion_policy!r}"
            )
        object.__setattr__(self, "layers", tuple(int(l) for l in self.layers))


@dataclass
class SliceFeatureStack:
    """Per-(volume, axis, layer) grid of 2D encoder features, [H, N_p, N_p, D].

    Index order is (slice, in-slice row, in-slice column, feature); the
    in-slice coordinates follow the remaining volume axes in ascending order.
    """

    volume_id: str
    axis: str
    layer_id: int
    data: np.ndarray

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.layer_id < 1:
            raise ValueError(f"layer_id must be positive, got {self.layer_id}")
        if self.data.ndim != 4:
            raise ValueError(f"feature stack must be 4-d, got shape {self.data.shape}")
        H, nu, nv, _ = self.data.shape
        if nu != nv:
            raise ValueError(f"in-slice grid must be square, got {nu}x{nv}")
        if nu < 1 or H % nu != 0:
            raise ValueError(f"H={H} not divisible by N_p={nu}")
        if self.data.dtype != np.float32:
            self.data = self.data.astype(np.float32)
        if not np.isfinite(self.data).all():
            raise ValueError(f"{self.volume_id}/{self.axis}: NaN or Inf in feature stack")

    @property
    def H(self) -> int:
        return self.data.shape[0]

    @property
    def n_p(self) -> int:
        return self.data.shape[1]

    @property
    def patch(self) -> int:
        return self.H // self.n_p

    @property
    def D(self) -> int:
        return self.data.shape[3]


@dataclass
class TokenCollection:
    """Fused 3D patch tokens of one volume for one layer.

    ``tokens`` is [N_p, N_p, N_p, 3k] indexed (x, y, z, feature); ``keep``
    flags foreground tokens (1) vs background (0).
    """

    volume_id: str
    layer_id: int
    tokens: np.ndarray
    keep: np.ndarray

    def __post_init__(self):
        if self.tokens.ndim != 4:
            raise ValueError(f"tokens must be 4-d, got shape {self.tokens.shape}")
        nx, ny, nz, dim = self.tokens.shape
        if not (nx == ny == nz):
            raise ValueError(f"token grid must be cubic, got {self.tokens.shape}")
        if dim % 3 != 0:
            raise ValueError(f"fused dim must be a multiple of 3, got {dim}")
        if self.keep.shape != (nx, ny, nz):
            raise ValueError(
                f"keep grid {self.keep.shape} does not match token grid {self.tokens.shape[:3]}"
            )
        if self.tokens.dtype != np.float32:
            self.tokens = self.tokens.astype(np.float32)
        if self.keep.dtype != np.uint8:
            self.keep = self.keep.astype(np.uint8)
        kept = self.keep.astype(bool)
        if kept.any() and not np.isfinite(self.tokens[kept]).all():
            raise ValueError(f"{self.volume_id}: non-finite kept token")

    @property
    def n_p(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0] ** 3

    @property
    def fused_dim(self) -> int:
        return self.tokens.shape[3]

    @property
    def k(self) -> int:
        return self.tokens.shape[3] // 3

    def kept_fraction(self) -> float:
        return float(self.keep.astype(bool).mean())

    def flat_tokens(self) -> np.ndarray:
        """[N_p**3, 3k] view in x-major (x, y, z) flattening order."""
        return self.tokens.reshape(self.n_tokens, self.fused_dim)

    def kept_flat_indices(self) -> np.ndarray:
        """Flat indices (x-major) of kept tokens, ascending = lexicographic (x, y, z)."""
        return np.flatnonzero(self.keep.reshape(-1))

    def kept_tokens(self) -> np.ndarray:
        """Contiguous [n_kept, 3k] float32 matrix of the kept tokens."""
        return np.ascontiguousarray(self.flat_tokens()[self.kept_flat_indices()])


def validate_mask(mask: np.ndarray, H: int | None = None) -> np.ndarray:
    """Check a brain mask is a binary uint8 cube and return it as uint8."""
    if mask.ndim != 3 or len(set(mask.shape)) != 1:
        raise ValueError(f"mask must be a cube, got shape {mask.shape}")
    if H is not None and mask.shape[0] != H:
        raise ValueError(f"mask edge {mask.shape[0]} does not match volume H={H}")
    vals = np.unique(mask)
    if not np.isin(vals, (0, 1)).all():
        raise ValueError(f"mask values must be in {{0, 1}}, got {vals[:10]}")
    return mask.astype(np.uint8, copy=False)
