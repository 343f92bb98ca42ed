"""Binary container format tests: round-trips, size arithmetic, error cases."""

import struct

import numpy as np
import pytest

from voxtok.container import (
    MAGIC,
    BadMagicError,
    InvalidDimsError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    VolumeMeta,
    read_container,
    read_meta,
    write_container,
    write_meta,
)

FIXED_HEADER_BYTES = 12  # magic(4) + version(2) + dtype(2) + ndims(2) + reserved(2)


def _header(magic=MAGIC, version=1, dtype=0, dims=(2, 2)):
    head = struct.pack("<4sHHHH", magic, version, dtype, len(dims), 0)
    return head + struct.pack(f"<{len(dims)}Q", *dims)


def test_roundtrip_identity_float32(tmp_path):
    arr = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    path = tmp_path / "t.vxtk"
    write_container(arr, path)
    back = read_container(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_roundtrip_identity_uint8(tmp_path):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    path = tmp_path / "t.vxtk"
    write_container(arr, path)
    assert np.array_equal(read_container(path), arr)


def test_positional_roundtrip_c_order(tmp_path):
    # last dimension fastest: a 2x2x2x1 grid with values 0..7 keeps positions
    arr = np.arange(8, dtype=np.float32).reshape(2, 2, 2, 1)
    path = tmp_path / "t.vxtk"
    write_container(arr, path)
    back = read_container(path)
    for x in range(2):
        for y in range(2):
            for z in range(2):
                assert back[x, y, z, 0] == arr[x, y, z, 0]
    # on-disk payload order matches x-major flattening
    raw = path.read_bytes()[FIXED_HEADER_BYTES + 4 * 8 :]
    assert np.frombuffer(raw, dtype="<f4").tolist() == list(range(8))


def test_file_size_formula(tmp_path):
    # payload bytes = prod(dims) * itemsize, after the fixed header + dims
    cases = [
        (np.zeros((4, 4, 4), dtype=np.uint8), 64),
        (np.zeros((3, 5), dtype=np.float32), 60),
        (np.zeros((7,), dtype=np.float32), 28),
    ]
    for arr, payload in cases:
        path = tmp_path / "t.vxtk"
        write_container(arr, path)
        assert path.stat().st_size == FIXED_HEADER_BYTES + 8 * arr.ndim + payload


def test_feature_grid_payload_size_arithmetic(tmp_path):
    # header for [224, 16, 16, 1024] float32 demands 224*16*16*1024*4 payload bytes
    expected = 224 * 16 * 16 * 1024 * 4
    assert expected == 234881024
    path = tmp_path / "t.vxtk"
    path.write_bytes(_header(dims=(224, 16, 16, 1024)))
    with pytest.raises(TruncatedPayloadError, match=str(expected)):
        read_container(path)


def test_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((5, 6), dtype=np.float32)
    p1, p2 = tmp_path / "a.vxtk", tmp_path / "b.vxtk"
    write_container(arr, p1)
    write_container(arr.copy(), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "t.vxtk"
    path.write_bytes(_header(magic=b"XXXX") + b"\x00" * 16)
    with pytest.raises(BadMagicError):
        read_container(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "t.vxtk"
    path.write_bytes(_header(version=2) + b"\x00" * 16)
    with pytest.raises(UnsupportedVersionError):
        read_container(path)


def test_unsupported_dtype(tmp_path):
    path = tmp_path / "t.vxtk"
    path.write_bytes(_header(dtype=9) + b"\x00" * 16)
    with pytest.raises(UnsupportedDtypeError):
        read_container(path)
    with pytest.raises(UnsupportedDtypeError):
        write_container(np.zeros((2, 2), dtype=np.int64), path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.vxtk"
    path.write_bytes(_header(dims=(2, 2)) + b"\x00" * 7)  # needs 16
    with pytest.raises(TruncatedPayloadError):
        read_container(path)
    path.write_bytes(_header(dims=(2, 2))[:6])
    with pytest.raises(TruncatedPayloadError):
        read_container(path)


def test_invalid_dims(tmp_path):
    path = tmp_path / "t.vxtk"
    with pytest.raises(InvalidDimsError):
        write_container(np.float32(3.0), path)  # zero-dimensional
    path.write_bytes(struct.pack("<4sHHHH", MAGIC, 1, 0, 0, 0))
    with pytest.raises(InvalidDimsError):
        read_container(path)
    path.write_bytes(_header(dims=(0, 4)))
    with pytest.raises(InvalidDimsError):
        read_container(path)


@pytest.mark.parametrize("dtype", [np.float32, np.uint8])
def test_roundtrip_property_random(tmp_path, dtype):
    rng = np.random.default_rng(7)
    for _ in range(20):
        ndim = int(rng.integers(1, 5))
        shape = tuple(int(rng.integers(1, 6)) for _ in range(ndim))
        if dtype is np.float32:
            arr = rng.standard_normal(shape, dtype=np.float32)
        else:
            arr = rng.integers(0, 256, size=shape, dtype=np.uint8)
        path = tmp_path / "t.vxtk"
        write_container(arr, path)
        back = read_container(path)
        assert back.dtype == np.dtype(dtype)
        assert back.shape == shape
        assert np.array_equal(back, arr)


def test_meta_sidecar_roundtrip(tmp_path):
    meta = VolumeMeta("vol01", H=56, voxel_spacing_mm=0.7, label="anomalous")
    path = write_meta(meta, tmp_path)
    assert path.name == "vol01.meta.json"
    assert read_meta(path) == meta


def test_meta_validation():
    with pytest.raises(ValueError):
        VolumeMeta("v", H=56, voxel_spacing_mm=0.0)
    with pytest.raises(ValueError):
        VolumeMeta("v", H=56, label="weird")
