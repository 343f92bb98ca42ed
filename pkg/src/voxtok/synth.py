"""Deterministic synthetic data: phantom brains, a mock patch encoder, and
slice-averaging sensitivity scenarios.

Everything here is seed-driven so desk-scale end-to-end runs and the
property suites reproduce bit-for-bit. Phantoms are a smooth low-frequency
texture inside a shared ellipsoidal "brain" mask; anomalous volumes carry a
spherical lesion whose intensity offset is jittered per volume so planted
lesions do not act as each other's nearest neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxtok.container import VolumeMeta
from voxtok.mapping import upsample_trilinear
from voxtok.model import SliceFeatureStack


@dataclass(frozen=True)
class SynthSpec:
    H: int = 56
    n_normal: int = 12
    n_anomalous: int = 6
    lesion_radius: tuple[int, int] = (6, 10)
    lesion_delta: float = 0.8
    texture_seed: int = 11
    encoder_seed: int = 7
    voxel_spacing_mm: float = 0.7

    def __post_init__(self):
        if self.H % 14 != 0:
            raise ValueError(f"H must be divisible by 14, got {self.H}")
        lo, hi = self.lesion_radius
        if not 1 <= lo <= hi:
            raise ValueError(f"bad lesion radius range {self.lesion_radius}")
        if hi >= self.H / 2:
            raise ValueError(f"lesion radius {hi} must be < H/2 = {self.H / 2}")


@dataclass
class SynthVolume:
    meta: VolumeMeta
    volume: np.ndarray  # [H]^3 float32
    mask: np.ndarray  # [H]^3 uint8
    gt: np.ndarray  # [H]^3 uint8 lesion voxels


def _ellipsoid_mask(H: int) -> np.ndarray:
    c = (H - 1) / 2.0
    semi = np.array([0.44, 0.40, 0.42]) * H
    x, y, z = np.ogrid[:H, :H, :H]
    r2 = ((x - c) / semi[0]) ** 2 + ((y - c) / semi[1]) ** 2 + ((z - c) / semi[2]) ** 2
    return (r2 <= 1.0).astype(np.uint8)


def _smooth_texture(H: int, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.standard_normal((7, 7, 7)).astype(np.float32)
    return 0.5 + 0.12 * upsample_trilinear(coarse, H)


def _place_lesion(
    mask: np.ndarray, radius: int, rng: np.random.Generator, attempts: int = 200
) -> np.ndarray:
    """Sphere of ``radius`` fully inside the brain mask; raises if none fits."""
    H = mask.shape[0]
    x, y, z = np.ogrid[:H, :H, :H]
    inside = np.argwhere(mask > 0)
    for _ in range(attempts):
        cx, cy, cz = inside[rng.integers(len(inside))]
        sphere = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= radius**2
        if not np.logical_and(sphere, mask == 0).any():
            return sphere.astype(np.uint8)
    raise ValueError(f"lesion of radius {radius} does not fit inside the mask")


def generate_dataset(spec: SynthSpec) -> list[SynthVolume]:
    """Phantom volumes with masks, GT lesion masks, and metadata.

    Normal volumes come first (``n000``...), anomalous after (``a000``...).
    """
    rng = np.random.default_rng(spec.texture_seed)
    mask = _ellipsoid_mask(spec.H)
    out = []
    for i in range(spec.n_normal):
        vol = _smooth_texture(spec.H, rng) * mask
        out.append(
            SynthVolume(
                meta=VolumeMeta(f"n{i:03d}", spec.H, spec.voxel_spacing_mm, "normal"),
                volume=vol.astype(np.float32),
                mask=mask.copy(),
                gt=np.zeros_like(mask),
            )
        )
    lo, hi = spec.lesion_radius
    for i in range(spec.n_anomalous):
        vol = _smooth_texture(spec.H, rng)
        radius = int(rng.integers(lo, hi + 1))
        gt = _place_lesion(mask, radius, rng)
        # jittered, sign-alternating offset: recurring identical lesions would
        # be consistent anomalies by construction
        delta = spec.lesion_delta * (0.75 + 0.5 * rng.random())
        if i % 2 == 1:
            delta = -delta
        vol = (vol + delta * gt) * mask
        out.append(
            SynthVolume(
                meta=VolumeMeta(f"a{i:03d}", spec.H, spec.voxel_spacing_mm, "anomalous"),
                volume=vol.astype(np.float32),
                mask=mask.copy(),
                gt=gt,
            )
        )
    return out


class MockEncoder:
    """Stand-in for a frozen 2D patch encoder: a fixed random linear map over
    flattened p x p patches (plus a bias channel) followed by tanh.

    The tanh keeps features a nonlinear function of pixels; a purely linear
    mock would make the projection property suites vacuous. ``lipschitz_bound``
    is the weight matrix's operator norm (tanh is 1-Lipschitz).
    """

    def __init__(self, p: int, D: int = 64, seed: int | np.random.SeedSequence = 0):
        self.p = p
        self.D = D
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weight = (
            rng.standard_normal((p * p + 1, D), dtype=np.float32) / np.float32(np.sqrt(p * p + 1))
        )
        self.lipschitz_bound = float(np.linalg.svd(self.weight, compute_uv=False)[0])

    def encode_slice(self, slice2d: np.ndarray) -> np.ndarray:
        """[H, H] pixels -> [N_p, N_p, D] patch features."""
        H = slice2d.shape[0]
        if slice2d.shape != (H, H) or H % self.p != 0:
            raise ValueError(f"slice shape {slice2d.shape} not square or not divisible by p={self.p}")
        n_p = H // self.p
        patches = (
            slice2d.astype(np.float32)
            .reshape(n_p, self.p, n_p, self.p)
            .transpose(0, 2, 1, 3)
            .reshape(n_p * n_p, self.p * self.p)
        )
        x = np.concatenate([patches, np.ones((patches.shape[0], 1), dtype=np.float32)], axis=1)
        return np.tanh(x @ self.weight).reshape(n_p, n_p, self.D)


_AXIS_SLICER = {
    "axial": lambda v, h: v[h, :, :],
    "coronal": lambda v, h: v[:, h, :],
    "sagittal": lambda v, h: v[:, :, h],
}


def mock_extract(
    volume: np.ndarray,
    axis: str,
    layer_id: int,
    volume_id: str,
    p: int = 14,
    D: int = 64,
    encoder_seed: int = 0,
) -> SliceFeatureStack:
    """Run the mock encoder over every slice of one axis.

    Distinct ``layer_id`` values get independently seeded encoders, standing
    in for distinct transformer layers.
    """
    H = volume.shape[0]
    if volume.shape != (H, H, H):
        raise ValueError(f"volume must be cubic, got {volume.shape}")
    if H % p != 0:
        raise ValueError(f"H={H} not divisible by p={p}")
    enc = MockEncoder(p=p, D=D, seed=np.random.SeedSequence(encoder_seed, spawn_key=(layer_id,)))
    slicer = _AXIS_SLICER[axis]
    data = np.stack([enc.encode_slice(slicer(volume, h)) for h in range(H)])
    return SliceFeatureStack(volume_id=volume_id, axis=axis, layer_id=layer_id, data=data)


# ---------------------------------------------------------------------------
# slice-averaging sensitivity scenarios
# ---------------------------------------------------------------------------


@dataclass
class SeparationScenario:
    """Normal/anomalous slice-feature pairs with exactly controlled contrast.

    The anomalous slices all shift by one shared vector of norm ``contrast``
    (so the average anomalous difference has that norm exactly) and the
    remaining slices shift by independent random directions of norm
    ``outside_noise``.
    """

    p: int
    anomalous_fraction: float
    contrast: float
    outside_noise: float
    anomalous: tuple[int, ...]
    u_normal: np.ndarray  # [p, D] float64
    u_anomalous: np.ndarray  # [p, D] float64


def build_separation_scenario(
    p: int,
    anomalous_fraction: float,
    contrast: float,
    outside_noise: float,
    seed: int,
    D: int = 64,
) -> SeparationScenario:
    n_anom = anomalous_fraction * p
    if abs(n_anom - round(n_anom)) > 1e-9 or round(n_anom) < 1:
        raise ValueError(
            f"anomalous_fraction={anomalous_fraction} infeasible: "
            f"fraction*p={n_anom} must be a positive integer"
        )
    if contrast < 0 or outside_noise < 0:
        raise ValueError("contrast and outside_noise must be >= 0")
    n_anom = int(round(n_anom))
    rng = np.random.default_rng(seed)
    u_normal = rng.standard_normal((p, D))
    anomalous = np.sort(rng.choice(p, size=n_anom, replace=False))

    shared = rng.standard_normal(D)
    shared *= contrast / np.linalg.norm(shared)
    u_anom = u_normal.copy()
    u_anom[anomalous] += shared
    for t in range(p):
        if t not in anomalous:
            direction = rng.standard_normal(D)
            u_anom[t] += direction * (outside_noise / np.linalg.norm(direction))
    return SeparationScenario(
        p=p,
        anomalous_fraction=n_anom / p,
        contrast=contrast,
        outside_noise=outside_noise,
        anomalous=tuple(int(t) for t in anomalous),
        u_normal=u_normal,
        u_anomalous=u_anom,
    )


def pooled_difference(scenario: SeparationScenario) -> float:
    """Norm of the slice-averaged feature difference between the two variants."""
    return float(
        np.linalg.norm(scenario.u_anomalous.mean(axis=0) - scenario.u_normal.mean(axis=0))
    )


def separation_bound(scenario: SeparationScenario) -> float:
    """Guaranteed lower bound: fraction * contrast - (1 - fraction) * noise.

    Slice averaging can attenuate a localized anomaly at most linearly in the
    fraction of slices it occupies, so a sufficiently distinct anomaly stays
    separated after pooling whenever this bound is positive.
    """
    return (
        scenario.anomalous_fraction * scenario.contrast
        - (1.0 - scenario.anomalous_fraction) * scenario.outside_noise
    )


def jl_dimension(theta: float, n_points: int, beta: float = 1.0) -> int:
    """Projection dimension preserving pairwise distances within (1 +/- theta)
    with probability >= 1 - n^-beta (Achlioptas-style bound)."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    denom = theta**2 / 2.0 - theta**3 / 3.0
    return int(np.ceil((4.0 + 2.0 * beta) * np.log(n_points) / denom))
