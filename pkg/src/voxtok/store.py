"""On-disk layout: one .vxtk tensor per file, names keyed by volume id.

    {vid}_{axis}_{layer}.vxtk   slice features     [H, N_p, N_p, D] float32
    {vid}_mask.vxtk             brain mask         [H, H, H] uint8
    {vid}_gt.vxtk               ground-truth mask  [H, H, H] uint8
    {vid}_{layer}_tokens.vxtk   fused tokens       [N_p, N_p, N_p, 3k] float32
    {vid}_keep.vxtk             keep grid          [N_p, N_p, N_p] uint8
    {vid}_{layer}_scores.vxtk   per-layer map      [N_p, N_p, N_p] float32
    {vid}_scores.vxtk           final coarse map   [N_p, N_p, N_p] float32
    {vid}_map.vxtk              full voxel map     [H, H, H] float32
    {vid}.meta.json             volume metadata
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from voxtok.container import read_container, write_container
from voxtok.model import SliceFeatureStack, TokenCollection


def feature_path(d: Path, vid: str, axis: str, layer: int) -> Path:
    return Path(d) / f"{vid}_{axis}_{layer}.vxtk"


def mask_path(d: Path, vid: str) -> Path:
    return Path(d) / f"{vid}_mask.vxtk"


def gt_path(d: Path, vid: str) -> Path:
    return Path(d) / f"{vid}_gt.vxtk"


def tokens_path(d: Path, vid: str, layer: int) -> Path:
    return Path(d) / f"{vid}_{layer}_tokens.vxtk"


def keep_path(d: Path, vid: str) -> Path:
    return Path(d) / f"{vid}_keep.vxtk"


def layer_scores_path(d: Path, vid: str, layer: int) -> Path:
    return Path(d) / f"{vid}_{layer}_scores.vxtk"


def coarse_path(d: Path, vid: str) -> Path:
    return Path(d) / f"{vid}_scores.vxtk"


def map_path(d: Path, vid: str) -> Path:
    return Path(d) / f"{vid}_map.vxtk"


def meta_path(d: Path, vid: str) -> Path:
    return Path(d) / f"{vid}.meta.json"


def discover_volumes(masks_dir: Path, suffix: str = "_mask.vxtk") -> list[str]:
    """Volume ids from ``*{suffix}`` files, sorted for a stable batch order."""
    return sorted(p.name[: -len(suffix)] for p in Path(masks_dir).glob(f"*{suffix}"))


def discover_layers(tokens_dir: Path, vid: str) -> list[int]:
    layers = []
    for p in Path(tokens_dir).glob(f"{vid}_*_tokens.vxtk"):
        tail = p.name[len(vid) + 1 : -len("_tokens.vxtk")]
        if tail.isdigit():
            layers.append(int(tail))
    return sorted(layers)


def load_stack(features_dir: Path, vid: str, axis: str, layer: int) -> SliceFeatureStack:
    data = read_container(feature_path(features_dir, vid, axis, layer))
    return SliceFeatureStack(volume_id=vid, axis=axis, layer_id=layer, data=data)


def save_collection(tokens_dir: Path, coll: TokenCollection) -> None:
    write_container(coll.tokens, tokens_path(tokens_dir, coll.volume_id, coll.layer_id))
    write_container(coll.keep, keep_path(tokens_dir, coll.volume_id))


def load_collection(tokens_dir: Path, vid: str, layer: int) -> TokenCollection:
    tokens = read_container(tokens_path(tokens_dir, vid, layer))
    keep = read_container(keep_path(tokens_dir, vid))
    return TokenCollection(volume_id=vid, layer_id=layer, tokens=tokens, keep=keep)


def load_mask(masks_dir: Path, vid: str) -> np.ndarray:
    return read_container(mask_path(masks_dir, vid))
