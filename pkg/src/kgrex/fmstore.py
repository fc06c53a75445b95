"""Binary containers for feature maps and segmentation rasters.

Two self-describing little-endian formats carry data between the exporter and
this pipeline:

  .fms  magic ``NSFG`` | u32 version=1 | u32 n_images | u32 n_kernels |
        u32 height | u32 width | f32 payload [image][kernel][row][col] |
        u64 manifest_len | manifest JSON (UTF-8)

  .seg  magic ``NSSG`` | u32 version=1 | u32 n_images | u32 height |
        u32 width | u16 payload [image][row][col] | u64 meta_len |
        JSON {concept_names, image_ids} (UTF-8)

A loaded store is immutable by convention and safe to share across threads;
writing is single-writer. Reads are strict: any truncation raises
CorruptionError rather than yielding a partial store.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

FMS_MAGIC = b"NSFG"
SEG_MAGIC = b"NSSG"
FORMAT_VERSION = 1

_MANIFEST_KEYS = {"image_ids", "true_labels", "cnn_predictions", "class_names", "split_tag"}


@dataclass
class Manifest:
    """Per-image bookkeeping embedded in a feature-map container."""

    image_ids: list[str]
    true_labels: list[str]
    class_names: list[str]
    cnn_predictions: Optional[list[str]] = None
    split_tag: str = "train"

    def to_json(self) -> str:
        payload = {
            "image_ids": list(self.image_ids),
            "true_labels": list(self.true_labels),
            "cnn_predictions": None if self.cnn_predictions is None else list(self.cnn_predictions),
            "class_names": list(self.class_names),
            "split_tag": self.split_tag,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorruptionError(f"manifest JSON is not decodable: {exc}") from None
        if not isinstance(raw, dict):
            raise ValidationError("manifest must be a JSON object")
        missing = _MANIFEST_KEYS - raw.keys()
        if missing:
            raise ValidationError(f"manifest is missing keys: {sorted(missing)}")
        preds = raw["cnn_predictions"]
        return cls(
            image_ids=[str(x) for x in raw["image_ids"]],
            true_labels=[str(x) for x in raw["true_labels"]],
            class_names=[str(x) for x in raw["class_names"]],
            cnn_predictions=None if preds is None else [str(x) for x in preds],
            split_tag=str(raw["split_tag"]),
        )


@dataclass
class FeatureMapStore:
    """4-D activation tensor [image][kernel][row][col] plus its manifest."""

    n_images: int
    n_kernels: int
    height: int
    width: int
    data: np.ndarray
    manifest: Manifest

    @classmethod
    def from_data(cls, data: np.ndarray, manifest: Manifest) -> "FeatureMapStore":
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 4:
            raise ValidationError(f"feature-map data must be 4-D, got shape {data.shape}")
        n, k, h, w = data.shape
        return cls(n, k, h, w, data, manifest)

    def validate(self) -> None:
        expected = (self.n_images, self.n_kernels, self.height, self.width)
        if tuple(self.data.shape) != expected:
            raise ValidationError(f"data shape {self.data.shape} does not match header {expected}")
        if self.data.dtype != np.float32:
            raise ValidationError(f"payload dtype must be float32, got {self.data.dtype}")
        bad = ~np.isfinite(self.data)
        if bad.any():
            i, k, r, c = (int(v) for v in np.argwhere(bad)[0])
            raise ValidationError(
                f"non-finite activation at image {i}, kernel {k} (row {r}, col {c})"
            )
        m = self.manifest
        for name, seq in (("image_ids", m.image_ids), ("true_labels", m.true_labels)):
            if len(seq) != self.n_images:
                raise ValidationError(
                    f"manifest {name} has length {len(seq)}, expected n_images={self.n_images}"
                )
        if m.cnn_predictions is not None and len(m.cnn_predictions) != self.n_images:
            raise ValidationError(
                f"manifest cnn_predictions has length {len(m.cnn_predictions)}, "
                f"expected n_images={self.n_images}"
            )
        classes = set(m.class_names)
        for kind, seq in (("true label", m.true_labels), ("cnn prediction", m.cnn_predictions or [])):
            for idx, lbl in enumerate(seq):
                if lbl not in classes:
                    raise ValidationError(f"{kind} {lbl!r} of image {idx} is not in class_names")


@dataclass
class SegmentationStore:
    """Per-image rasters of 16-bit concept indices at original image resolution."""

    n_images: int
    height: int
    width: int
    rasters: np.ndarray
    concept_names: dict[int, str]
    image_ids: list[str]

    @classmethod
    def from_data(
        cls, rasters: np.ndarray, concept_names: dict[int, str], image_ids: list[str]
    ) -> "SegmentationStore":
        rasters = np.ascontiguousarray(rasters, dtype=np.uint16)
        if rasters.ndim != 3:
            raise ValidationError(f"rasters must be 3-D, got shape {rasters.shape}")
        n, h, w = rasters.shape
        return cls(n, h, w, rasters, dict(concept_names), list(image_ids))

    def validate(self) -> None:
        expected = (self.n_images, self.height, self.width)
        if tuple(self.rasters.shape) != expected:
            raise ValidationError(f"raster shape {self.rasters.shape} does not match header {expected}")
        if self.rasters.dtype != np.uint16:
            raise ValidationError(f"raster dtype must be uint16, got {self.rasters.dtype}")
        if len(self.image_ids) != self.n_images:
            raise ValidationError(
                f"image_ids has length {len(self.image_ids)}, expected n_images={self.n_images}"
            )
        if 0 not in self.concept_names:
            raise ValidationError("concept index 0 (unlabeled) must be present in concept_names")
        present = np.unique(self.rasters) if self.rasters.size else np.empty(0, dtype=np.uint16)
        unknown = sorted(set(int(v) for v in present) - set(self.concept_names))
        if unknown:
            raise ValidationError(f"raster uses concept indices without names: {unknown}")


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CorruptionError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def _check_magic(f: BinaryIO, magic: bytes, kind: str) -> None:
    got = _read_exact(f, len(magic), "magic")
    if got != magic:
        raise FormatError(f"not a {kind} file: magic {got!r} != {magic!r}")


def _check_no_trailing(f: BinaryIO) -> None:
    if f.read(1):
        raise CorruptionError("trailing bytes after the declared payload")


def write_store(store: FeatureMapStore, path) -> None:
    store.validate()
    manifest_bytes = store.manifest.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(FMS_MAGIC)
        f.write(
            struct.pack(
                "<5I", FORMAT_VERSION, store.n_images, store.n_kernels, store.height, store.width
            )
        )
        f.write(np.ascontiguousarray(store.data, dtype="<f4").tobytes())
        f.write(struct.pack("<Q", len(manifest_bytes)))
        f.write(manifest_bytes)


def read_store(path) -> FeatureMapStore:
    with open(path, "rb") as f:
        _check_magic(f, FMS_MAGIC, "feature-map container")
        version, n, k, h, w = struct.unpack("<5I", _read_exact(f, 20, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported container version {version}")
        count = n * k * h * w
        payload = _read_exact(f, 4 * count, "activation payload")
        data = np.frombuffer(payload, dtype="<f4").reshape(n, k, h, w)
        (manifest_len,) = struct.unpack("<Q", _read_exact(f, 8, "manifest length"))
        manifest_bytes = _read_exact(f, manifest_len, "manifest")
        _check_no_trailing(f)
    manifest = Manifest.from_json(manifest_bytes.decode("utf-8"))
    store = FeatureMapStore(n, k, h, w, data, manifest)
    store.validate()
    return store


def write_segmentation(store: SegmentationStore, path) -> None:
    store.validate()
    meta = json.dumps(
        {
            "concept_names": {str(k): v for k, v in store.concept_names.items()},
            "image_ids": list(store.image_ids),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(SEG_MAGIC)
        f.write(struct.pack("<4I", FORMAT_VERSION, store.n_images, store.height, store.width))
        f.write(np.ascontiguousarray(store.rasters, dtype="<u2").tobytes())
        f.write(struct.pack("<Q", len(meta)))
        f.write(meta)


def read_segmentation(path) -> SegmentationStore:
    with open(path, "rb") as f:
        _check_magic(f, SEG_MAGIC, "segmentation container")
        version, n, h, w = struct.unpack("<4I", _read_exact(f, 16, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported container version {version}")
        payload = _read_exact(f, 2 * n * h * w, "raster payload")
        rasters = np.frombuffer(payload, dtype="<u2").reshape(n, h, w)
        (meta_len,) = struct.unpack("<Q", _read_exact(f, 8, "metadata length"))
        meta_bytes = _read_exact(f, meta_len, "metadata")
        _check_no_trailing(f)
    try:
        meta = json.loads(meta_bytes.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"segmentation metadata is not decodable: {exc}") from None
    if not isinstance(meta, dict):
        raise ValidationError("segmentation metadata must be a JSON object")
    missing = {"concept_names", "image_ids"} - set(meta)
    if missing:
        raise ValidationError(f"segmentation metadata is missing keys: {sorted(missing)}")
    try:
        concept_names = {int(k): str(v) for k, v in meta["concept_names"].items()}
    except (TypeError, ValueError, AttributeError):
        raise ValidationError("concept_names must map integer indices to names") from None
    store = SegmentationStore(n, h, w, rasters, concept_names, [str(x) for x in meta["image_ids"]])
    store.validate()
    return store
