"""Container format: round trips, layout size, and strict rejection."""

import json
import struct

import numpy as np
import pytest

from kgrex import (
    CorruptionError,
    FormatError,
    Manifest,
    SegmentationStore,
    ValidationError,
    read_segmentation,
    read_store,
    write_segmentation,
    write_store,
)
from kgrex.fmstore import FMS_MAGIC

from conftest import make_manifest, make_store


def test_file_size_forced_by_layout(tmp_path):
    store = make_store(np.zeros((2, 3, 2, 2), dtype=np.float32))
    path = tmp_path / "zero.fms"
    write_store(store, path)
    manifest_len = len(store.manifest.to_json().encode())
    # magic + 5 u32 header + payload floats + u64 length + manifest
    assert path.stat().st_size == 4 + 20 + 4 * (2 * 3 * 2 * 2) + 8 + manifest_len


def test_round_trip_bitwise(tmp_path, rng):
    data = rng.random((5, 4, 3, 2)).astype(np.float32)
    preds = ["a", "b", "a", "b", "a"]
    store = make_store(data, labels=["a", "a", "b", "b", "a"], class_names=["a", "b"], preds=preds)
    path = tmp_path / "rt.fms"
    write_store(store, path)
    loaded = read_store(path)
    assert loaded.data.tobytes() == store.data.tobytes()
    assert loaded.manifest == store.manifest
    assert (loaded.n_images, loaded.n_kernels, loaded.height, loaded.width) == (5, 4, 3, 2)


def test_round_trip_randomized(tmp_path, rng):
    for trial in range(10):
        shape = tuple(int(x) for x in rng.integers(1, 5, size=4))
        labels = [str(rng.integers(0, 3)) for _ in range(shape[0])]
        store = make_store(
            rng.random(shape).astype(np.float32), labels=labels, class_names=["0", "1", "2"]
        )
        path = tmp_path / f"r{trial}.fms"
        write_store(store, path)
        loaded = read_store(path)
        assert loaded.data.tobytes() == store.data.tobytes()
        assert loaded.manifest == store.manifest


def test_manifest_length_mismatch_rejected_before_write(tmp_path):
    store = make_store(np.zeros((2, 1, 1, 1), dtype=np.float32))
    store.manifest.true_labels = ["a"]  # now too short
    path = tmp_path / "bad.fms"
    with pytest.raises(ValidationError):
        write_store(store, path)
    assert not path.exists()


def test_label_outside_class_names_rejected():
    store = make_store(np.zeros((1, 1, 1, 1), dtype=np.float32))
    store.manifest.true_labels = ["mystery"]
    with pytest.raises(ValidationError, match="mystery"):
        store.validate()


def test_wrong_magic(tmp_path):
    path = tmp_path / "bad.fms"
    path.write_bytes(b"XXXX" + b"\x00" * 60)
    with pytest.raises(FormatError):
        read_store(path)


def test_bad_version(tmp_path):
    path = tmp_path / "bad.fms"
    path.write_bytes(FMS_MAGIC + struct.pack("<5I", 9, 0, 0, 0, 0) + struct.pack("<Q", 0))
    with pytest.raises(FormatError):
        read_store(path)


def test_nan_payload_names_indices(tmp_path):
    data = np.zeros((2, 3, 2, 2), dtype=np.float32)
    data[1, 2, 0, 1] = np.nan
    store = make_store(np.zeros_like(data))
    store.data = data
    path = tmp_path / "nan.fms"
    with pytest.raises(ValidationError, match=r"image 1, kernel 2"):
        write_store(store, path)
    # same failure when the bytes arrive from disk
    good = make_store(np.zeros((2, 3, 2, 2), dtype=np.float32))
    write_store(good, path)
    raw = bytearray(path.read_bytes())
    offset = 24 + 4 * (1 * 12 + 2 * 4 + 1)  # image 1, kernel 2, row 0, col 1
    raw[offset : offset + 4] = struct.pack("<f", float("nan"))
    path.write_bytes(bytes(raw))
    with pytest.raises(ValidationError, match=r"image 1, kernel 2"):
        read_store(path)


def test_every_single_byte_truncation_rejected(tmp_path, rng):
    store = make_store(rng.random((2, 2, 2, 2)).astype(np.float32))
    path = tmp_path / "t.fms"
    write_store(store, path)
    blob = path.read_bytes()
    bad = tmp_path / "trunc.fms"
    for cut in range(len(blob)):
        bad.write_bytes(blob[:cut])
        with pytest.raises(CorruptionError):
            read_store(bad)


def test_trailing_garbage_rejected(tmp_path):
    store = make_store(np.zeros((1, 1, 1, 1), dtype=np.float32))
    path = tmp_path / "t.fms"
    write_store(store, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CorruptionError):
        read_store(path)


def _make_seg(n=2, h=4, w=4, names=None):
    rasters = np.zeros((n, h, w), dtype=np.uint16)
    rasters[:, :2, :] = 1
    rasters[:, 2:, :2] = 2
    names = names or {0: "unlabeled", 1: "sky", 2: "road"}
    return SegmentationStore.from_data(rasters, names, [f"img{i:04d}" for i in range(n)])


def test_segmentation_round_trip(tmp_path):
    seg = _make_seg()
    path = tmp_path / "m.seg"
    write_segmentation(seg, path)
    loaded = read_segmentation(path)
    assert loaded.rasters.tobytes() == seg.rasters.tobytes()
    assert loaded.concept_names == seg.concept_names
    assert loaded.image_ids == seg.image_ids


def test_segmentation_unknown_concept_index(tmp_path):
    seg = _make_seg()
    seg.rasters = seg.rasters.copy()
    seg.rasters[0, 0, 0] = 7
    with pytest.raises(ValidationError, match="7"):
        write_segmentation(seg, tmp_path / "bad.seg")


def test_segmentation_requires_unlabeled_entry(tmp_path):
    rasters = np.ones((1, 2, 2), dtype=np.uint16)
    seg = SegmentationStore.from_data(rasters, {1: "sky"}, ["img0000"])
    with pytest.raises(ValidationError, match="index 0"):
        write_segmentation(seg, tmp_path / "bad.seg")


def test_segmentation_empty_store_accepted(tmp_path):
    seg = SegmentationStore.from_data(
        np.zeros((0, 3, 3), dtype=np.uint16), {0: "unlabeled"}, []
    )
    path = tmp_path / "empty.seg"
    write_segmentation(seg, path)
    loaded = read_segmentation(path)
    assert loaded.n_images == 0


def test_segmentation_truncation_rejected(tmp_path):
    seg = _make_seg(n=1)
    path = tmp_path / "m.seg"
    write_segmentation(seg, path)
    blob = path.read_bytes()
    bad = tmp_path / "cut.seg"
    for cut in (3, 10, len(blob) // 2, len(blob) - 1):
        bad.write_bytes(blob[:cut])
        with pytest.raises(CorruptionError):
            read_segmentation(bad)


def test_manifest_json_shape():
    m = make_manifest(2, labels=["a", "b"], class_names=["a", "b"])
    parsed = json.loads(m.to_json())
    assert parsed["cnn_predictions"] is None
    assert Manifest.from_json(m.to_json()) == m
