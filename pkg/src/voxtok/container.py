"""Binary .vxtk tensor container: read/write plus the JSON metadata sidecar.

File layout (all integers little-endian):

    magic    4 bytes  b"VXTK"
    version  uint16   currently 1
    dtype    uint16   0 = float32, 1 = uint8
    ndims    uint16
    reserved uint16   always 0
    dims     ndims * uint64
    payload  row-major values, last dimension fastest

One tensor per file, no compression. Writes are deterministic: the same
array always produces the same bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"VXTK"
VERSION = 1

DTYPE_FLOAT32 = 0
DTYPE_UINT8 = 1

_CODE_TO_DTYPE = {
    DTYPE_FLOAT32: np.dtype("<f4"),
    DTYPE_UINT8: np.dtype("u1"),
}
_KIND_TO_CODE = {
    np.dtype(np.float32): DTYPE_FLOAT32,
    np.dtype(np.uint8): DTYPE_UINT8,
}

_FIXED_HEADER = struct.Struct("<4sHHHH")


class ContainerError(Exception):
    """Base class for .vxtk format violations."""


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class UnsupportedDtypeError(ContainerError):
    pass


class InvalidDimsError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


def write_container(array: np.ndarray, path: str | Path) -> None:
    """Write ``array`` to ``path`` in the .vxtk format.

    Only float32 and uint8 arrays are supported; every dimension must be
    at least 1.
    """
    arr = np.asarray(array)
    code = _KIND_TO_CODE.get(arr.dtype)
    if code is None:
        raise UnsupportedDtypeError(f"unsupported dtype {arr.dtype}; expected float32 or uint8")
    if arr.ndim == 0:
        raise InvalidDimsError("empty dims list: zero-dimensional tensors are not representable")
    arr = np.ascontiguousarray(arr)
    if any(d < 1 for d in arr.shape):
        raise InvalidDimsError(f"all dims must be >= 1, got {arr.shape}")

    header = _FIXED_HEADER.pack(MAGIC, VERSION, code, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = arr.astype(_CODE_TO_DTYPE[code], copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(payload)


def read_container(path: str | Path) -> np.ndarray:
    """Read a .vxtk file and return its tensor (native byte order).

    Raises a distinct ContainerError subclass for bad magic, unsupported
    version or dtype, invalid dims, and truncated payloads.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _FIXED_HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than fixed header")
    magic, version, code, ndims, reserved = _FIXED_HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if code not in _CODE_TO_DTYPE:
        raise UnsupportedDtypeError(f"{path}: unsupported dtype code {code}")
    if ndims < 1:
        raise InvalidDimsError(f"{path}: ndims must be >= 1, got {ndims}")

    dims_end = _FIXED_HEADER.size + 8 * ndims
    if len(blob) < dims_end:
        raise TruncatedPayloadError(f"{path}: file shorter than dims block")
    dims = struct.unpack_from(f"<{ndims}Q", blob, _FIXED_HEADER.size)
    if any(d < 1 for d in dims):
        raise InvalidDimsError(f"{path}: all dims must be >= 1, got {dims}")

    dtype = _CODE_TO_DTYPE[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - dims_end != expected:
        raise TruncatedPayloadError(
            f"{path}: payload is {len(blob) - dims_end} bytes, expected {expected}"
        )
    arr = np.frombuffer(blob, dtype=dtype, offset=dims_end).reshape(dims)
    # native-endian writable copy; frombuffer views are read-only
    return arr.astype(dtype.newbyteorder("="), copy=True)


VOLUME_LABELS = ("normal", "anomalous", "unknown")


@dataclass(frozen=True)
class VolumeMeta:
    """Per-volume metadata carried by the ``{volume_id}.meta.json`` sidecar."""

    volume_id: str
    H: int
    voxel_spacing_mm: float = 0.7
    label: str = "unknown"

    def __post_init__(self):
        if self.voxel_spacing_mm <= 0:
            raise ValueError(f"voxel_spacing_mm must be > 0, got {self.voxel_spacing_mm}")
        if self.label not in VOLUME_LABELS:
            raise ValueError(f"label must be one of {VOLUME_LABELS}, got {self.label!r}")
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")


def write_meta(meta: VolumeMeta, directory: str | Path) -> Path:
    path = Path(directory) / f"{meta.volume_id}.meta.json"
    payload = {
        "volume_id": meta.volume_id,
        "H": meta.H,
        "voxel_spacing_mm": meta.voxel_spacing_mm,
        "label": meta.label,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_meta(path: str | Path) -> VolumeMeta:
    with open(path) as fh:
        raw = json.load(fh)
    return VolumeMeta(
        volume_id=raw["volume_id"],
        H=int(raw["H"]),
        voxel_spacing_mm=float(raw.get("voxel_spacing_mm", 0.7)),
        label=raw.get("label", "unknown"),
    )
