"""Volume slice extraction and mask export.

Slices are taken along the three anatomical axes; within each slice, the
row/column coordinates follow the remaining volume axes in ascending order,
matching what the downstream tokenizer expects. Grayscale slices replicate
to the encoder's three channels and normalize with its standard statistics.
Features store as float32 regardless of compute precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from voxtok.container import VolumeMeta, read_container, write_container, write_meta

from vxtk_extractor.encoders import PATCH_SIZE, build_encoder, encoder_spec

AXES = ("axial", "coronal", "sagittal")


@dataclass(frozen=True)
class ExtractorConfig:
    encoder: str = "dinov2-large"
    layers: tuple[int, ...] = (6, 12, 18, 24)
    H: int = 224
    batch_size: int = 8
    device: str = "cpu"
    pretrained: bool = True
    init_seed: int = 0

    def __post_init__(self):
        if self.H % PATCH_SIZE != 0:
            raise ValueError(f"H={self.H} not divisible by encoder patch size {PATCH_SIZE}")
        spec = encoder_spec(self.encoder)
        bad = [l for l in self.layers if not 1 <= l <= spec.num_layers]
        if bad:
            raise ValueError(
                f"layer ids {bad} invalid for {self.encoder} (depth {spec.num_layers})"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def n_p(self) -> int:
        return self.H // PATCH_SIZE


def load_volume(path: str | Path) -> np.ndarray:
    """Read a preprocessed volume: .npy, .npz (key 'volume' or sole array),
    or .vxtk float32."""
    path = Path(path)
    if path.suffix == ".npy":
        vol = np.load(path)
    elif path.suffix == ".npz":
        archive = np.load(path)
        key = "volume" if "volume" in archive else list(archive)[0]
        vol = archive[key]
    elif path.suffix == ".vxtk":
        vol = read_container(path)
    else:
        raise ValueError(f"unsupported volume format {path.suffix!r} (use .npy/.npz/.vxtk)")
    return np.asarray(vol)


def _check_cubic(vol: np.ndarray, H: int, what: str) -> np.ndarray:
    if vol.ndim != 3 or len(set(vol.shape)) != 1:
        raise ValueError(f"{what} must be a cubic volume, got shape {vol.shape}")
    if vol.shape[0] != H:
        raise ValueError(f"{what} edge {vol.shape[0]} does not match configured H={H}")
    return vol


def _axis_slices(volume: np.ndarray, axis: str) -> np.ndarray:
    """[H, H, H] -> [H, H, H] slice stack for one axis, in-slice axes ascending."""
    if axis == "axial":
        return volume
    if axis == "coronal":
        return volume.transpose(1, 0, 2)
    if axis == "sagittal":
        return volume.transpose(2, 0, 1)
    raise ValueError(f"unknown axis {axis!r}")


@dataclass
class ExtractionResult:
    volume_id: str
    files: list[Path] = field(default_factory=list)


def extract_volume(
    volume_file: str | Path,
    mask_file: str | Path | None,
    config: ExtractorConfig,
    out_dir: str | Path,
    volume_id: str | None = None,
    encoder_and_spec=None,
) -> ExtractionResult:
    """Run the frozen encoder over all slices of all three axes and write one
    SliceFeatureStack container per (axis, layer), plus the mask and metadata.

    ``encoder_and_spec`` lets callers reuse a loaded model across volumes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    volume_id = volume_id or Path(volume_file).stem.replace(".", "_")
    volume = _check_cubic(load_volume(volume_file).astype(np.float32), config.H, "volume")

    if encoder_and_spec is None:
        encoder_and_spec = build_encoder(
            config.encoder,
            config.H,
            pretrained=config.pretrained,
            init_seed=config.init_seed,
            device=config.device,
        )
    model, spec = encoder_and_spec
    mean = torch.tensor(spec.mean, dtype=torch.float32).view(1, 3, 1, 1)
    std = torch.tensor(spec.std, dtype=torch.float32).view(1, 3, 1, 1)

    result = ExtractionResult(volume_id=volume_id)
    n_p = config.n_p
    for axis in AXES:
        slices = _axis_slices(volume, axis)
        per_layer = {
            layer: np.empty((config.H, n_p, n_p, 1024), dtype=np.float32)
            for layer in config.layers
        }
        with torch.inference_mode():
            for start in range(0, config.H, config.batch_size):
                stop = min(start + config.batch_size, config.H)
                gray = torch.from_numpy(np.ascontiguousarray(slices[start:stop]))
                pixels = gray.unsqueeze(1).repeat(1, 3, 1, 1)
                pixels = (pixels - mean) / std
                out = model(pixels.to(config.device), output_hidden_states=True)
                for layer in config.layers:
                    # hidden_states[L] is the output of the L-th block
                    # (1-based); token 0 is CLS and is discarded
                    tokens = out.hidden_states[layer][:, 1:, :]
                    grid = tokens.reshape(stop - start, n_p, n_p, 1024)
                    per_layer[layer][start:stop] = grid.to("cpu", torch.float32).numpy()
        for layer in config.layers:
            if not np.isfinite(per_layer[layer]).all():
                raise ValueError(f"{volume_id}/{axis}/{layer}: non-finite features")
            path = out_dir / f"{volume_id}_{axis}_{layer}.vxtk"
            write_container(per_layer[layer], path)
            result.files.append(path)

    if mask_file is not None:
        result.files.append(export_mask(mask_file, out_dir, volume_id=volume_id, H=config.H))
    write_meta(VolumeMeta(volume_id=volume_id, H=config.H), out_dir)
    return result


def export_mask(
    mask_file: str | Path,
    out_dir: str | Path,
    volume_id: str | None = None,
    H: int | None = None,
) -> Path:
    """Write a binary brain mask as a uint8 .vxtk cube; {0, 255} normalizes
    to {0, 1}, anything non-binary is an error."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    volume_id = volume_id or Path(mask_file).stem.replace(".", "_")
    mask = load_volume(mask_file)
    if mask.ndim != 3 or len(set(mask.shape)) != 1:
        raise ValueError(f"mask must be a cubic volume, got shape {mask.shape}")
    if H is not None and mask.shape[0] != H:
        raise ValueError(f"mask edge {mask.shape[0]} does not match H={H}")
    values = set(np.unique(mask).tolist())
    if values <= {0, 1}:
        binary = mask.astype(np.uint8)
    elif values <= {0, 255}:
        binary = (mask > 0).astype(np.uint8)
    else:
        raise ValueError(f"mask is not binary: values {sorted(values)[:8]}")
    path = out_dir / f"{volume_id}_mask.vxtk"
    write_container(binary, path)
    return path
