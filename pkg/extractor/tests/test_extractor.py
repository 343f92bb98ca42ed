"""Unit tests for the extractor: config validation, volume readers, mask
export, slice orientation, and determinism. Small edges (H=28) keep the
encoder forward passes cheap; the full-size contract lives in
test_acceptance.py."""

import numpy as np
import pytest

from voxtok.container import read_container

from vxtk_extractor.cli import main
from vxtk_extractor.encoders import build_encoder
from vxtk_extractor.extract import (
    AXES,
    ExtractorConfig,
    _axis_slices,
    export_mask,
    extract_volume,
    load_volume,
)


def _config(**kw):
    defaults = dict(
        encoder="dinov2-test", layers=(1, 2), H=28, batch_size=14, pretrained=False
    )
    defaults.update(kw)
    return ExtractorConfig(**defaults)


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        _config(H=30)
    with pytest.raises(ValueError, match="invalid"):
        _config(layers=(1, 5))  # test variant is 2 layers deep
    with pytest.raises(ValueError, match="unknown encoder"):
        _config(encoder="vgg16")
    with pytest.raises(ValueError, match="no pretrained checkpoint"):
        build_encoder("dinov2-test", 28, pretrained=True)
    assert ExtractorConfig().n_p == 16  # default H=224, p=14


def test_load_volume_formats(tmp_path):
    vol = np.random.default_rng(0).random((4, 4, 4)).astype(np.float32)
    np.save(tmp_path / "v.npy", vol)
    np.savez(tmp_path / "v.npz", volume=vol)
    from voxtok.container import write_container

    write_container(vol, tmp_path / "v.vxtk")
    for name in ("v.npy", "v.npz", "v.vxtk"):
        assert np.allclose(load_volume(tmp_path / name), vol)
    with pytest.raises(ValueError, match="unsupported volume format"):
        load_volume(tmp_path / "v.nii")


def test_axis_slices_orientation():
    vol = np.arange(27).reshape(3, 3, 3)
    assert np.array_equal(_axis_slices(vol, "axial")[1], vol[1, :, :])
    assert np.array_equal(_axis_slices(vol, "coronal")[1], vol[:, 1, :])
    assert np.array_equal(_axis_slices(vol, "sagittal")[1], vol[:, :, 1])
    # slice counts cover every voxel exactly once per axis
    for axis in AXES:
        assert _axis_slices(vol, axis).shape == (3, 3, 3)


def test_export_mask_binary_and_255(tmp_path):
    mask = np.zeros((6, 6, 6), dtype=np.uint8)
    mask[2:4, 2:4, 2:4] = 1
    np.save(tmp_path / "m.npy", mask)
    path = export_mask(tmp_path / "m.npy", tmp_path / "out")
    assert np.array_equal(read_container(path), mask)

    np.save(tmp_path / "m255.npy", mask * 255)
    path = export_mask(tmp_path / "m255.npy", tmp_path / "out")
    assert np.array_equal(read_container(path), mask)


def test_export_mask_rejects_nonbinary_and_noncube(tmp_path):
    np.save(tmp_path / "bad.npy", np.full((4, 4, 4), 3, dtype=np.uint8))
    with pytest.raises(ValueError, match="not binary"):
        export_mask(tmp_path / "bad.npy", tmp_path / "out")
    np.save(tmp_path / "flat.npy", np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ValueError, match="cubic"):
        export_mask(tmp_path / "flat.npy", tmp_path / "out")


def test_extract_shapes_and_metadata(tmp_path):
    rng = np.random.default_rng(1)
    vol = rng.random((28, 28, 28)).astype(np.float32)
    mask = np.ones((28, 28, 28), dtype=np.uint8)
    np.save(tmp_path / "vol01.npy", vol)
    np.save(tmp_path / "mask01.npy", mask)
    config = _config()
    result = extract_volume(
        tmp_path / "vol01.npy", tmp_path / "mask01.npy", config, tmp_path / "out"
    )
    assert result.volume_id == "vol01"
    for axis in AXES:
        for layer in (1, 2):
            feat = read_container(tmp_path / "out" / f"vol01_{axis}_{layer}.vxtk")
            assert feat.shape == (28, 2, 2, 1024)
            assert feat.dtype == np.float32
            assert np.isfinite(feat).all()
    assert (tmp_path / "out" / "vol01_mask.vxtk").exists()
    assert (tmp_path / "out" / "vol01.meta.json").exists()


def test_constant_volume_gives_identical_slice_features(tmp_path):
    vol = np.zeros((28, 28, 28), dtype=np.float32)
    np.save(tmp_path / "zero.npy", vol)
    extract_volume(tmp_path / "zero.npy", None, _config(layers=(2,)), tmp_path / "out")
    # identical slices give identical feature grids (position embeddings
    # still vary within a slice)
    feat = read_container(tmp_path / "out" / "zero_axial_2.vxtk")
    assert np.allclose(feat, feat[0], atol=1e-5)


def test_extraction_deterministic(tmp_path):
    rng = np.random.default_rng(2)
    vol = rng.random((28, 28, 28)).astype(np.float32)
    np.save(tmp_path / "v.npy", vol)
    config = _config(layers=(2,))
    extract_volume(tmp_path / "v.npy", None, config, tmp_path / "a")
    extract_volume(tmp_path / "v.npy", None, config, tmp_path / "b")
    a = (tmp_path / "a" / "v_axial_2.vxtk").read_bytes()
    b = (tmp_path / "b" / "v_axial_2.vxtk").read_bytes()
    assert a == b


def test_extract_rejects_noncubic(tmp_path):
    np.save(tmp_path / "v.npy", np.zeros((28, 28, 14), dtype=np.float32))
    with pytest.raises(ValueError, match="cubic"):
        extract_volume(tmp_path / "v.npy", None, _config(), tmp_path / "out")


def test_cli_mask_and_errors(tmp_path, capsys):
    mask = np.ones((6, 6, 6), dtype=np.uint8)
    np.save(tmp_path / "m.npy", mask)
    assert main(["mask", "--mask", str(tmp_path / "m.npy"), "--out", str(tmp_path / "o")]) == 0
    np.save(tmp_path / "bad.npy", np.full((4, 4, 4), 7, np.uint8))
    assert main(["mask", "--mask", str(tmp_path / "bad.npy"), "--out", str(tmp_path / "o")]) == 2
    assert "not binary" in capsys.readouterr().err


def test_cli_volume_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    np.save(tmp_path / "s.npy", rng.random((28, 28, 28)).astype(np.float32))
    code = main(
        [
            "volume",
            "--volume", str(tmp_path / "s.npy"),
            "--out", str(tmp_path / "o"),
            "--encoder", "dinov2-test",
            "--layers", "1",
            "--edge", "28",
            "--random-init",
        ]
    )
    assert code == 0
    assert read_container(tmp_path / "o" / "s_axial_1.vxtk").shape == (28, 2, 2, 1024)
