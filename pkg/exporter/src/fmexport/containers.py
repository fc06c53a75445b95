"""Writers for the .fms / .seg binary container formats.

Implements the downstream pipeline's file contract directly so this package
stays decoupled from its internals:

  .fms  magic NSFG | u32 version=1 | u32 n_images | u32 n_kernels |
        u32 height | u32 width | f32 payload [image][kernel][row][col] |
        u64 manifest_len | manifest JSON (UTF-8)
  .seg  magic NSSG | u32 version=1 | u32 n_images | u32 height | u32 width |
        u16 payload [image][row][col] | u64 meta_len |
        JSON {concept_names, image_ids} (UTF-8)

All integers little-endian.
"""

from __future__ import annotations

import json
import struct

import numpy as np

FMS_MAGIC = b"NSFG"
SEG_MAGIC = b"NSSG"
VERSION = 1


def write_fms(path, data, image_ids, true_labels, class_names, cnn_predictions, split_tag):
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 4:
        raise ValueError(f"feature-map payload must be 4-D, got {data.shape}")
    n, k, h, w = data.shape
    if not (len(image_ids) == len(true_labels) == n):
        raise ValueError("manifest sequences must cover every image")
    if cnn_predictions is not None and len(cnn_predictions) != n:
        raise ValueError("cnn_predictions must cover every image")
    if not np.isfinite(data).all():
        raise ValueError("activations must be finite")
    manifest = json.dumps(
        {
            "image_ids": list(image_ids),
            "true_labels": list(true_labels),
            "cnn_predictions": None if cnn_predictions is None else list(cnn_predictions),
            "class_names": list(class_names),
            "split_tag": split_tag,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(FMS_MAGIC)
        f.write(struct.pack("<5I", VERSION, n, k, h, w))
        f.write(data.tobytes())
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)


def write_seg(path, rasters, concept_names, image_ids):
    rasters = np.ascontiguousarray(rasters, dtype="<u2")
    if rasters.ndim != 3:
        raise ValueError(f"rasters must be 3-D, got {rasters.shape}")
    n, h, w = rasters.shape
    if len(image_ids) != n:
        raise ValueError("image_ids must cover every raster")
    names = {int(k): str(v) for k, v in dict(concept_names).items()}
    names.setdefault(0, "unlabeled")
    present = set(int(v) for v in np.unique(rasters)) if rasters.size else set()
    unknown = sorted(present - set(names))
    if unknown:
        raise ValueError(f"raster uses concept indices without names: {unknown}")
    meta = json.dumps(
        {"concept_names": {str(k): v for k, v in names.items()}, "image_ids": list(image_ids)},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(SEG_MAGIC)
        f.write(struct.pack("<4I", VERSION, n, h, w))
        f.write(rasters.tobytes())
        f.write(struct.pack("<Q", len(meta)))
        f.write(meta)
