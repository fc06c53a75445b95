"""Dataset access for the exporter.

Two dataset forms are understood:

* the literal name ``digits``: scikit-learn's bundled 8x8 handwritten digits,
  split 80/20 (stratified, seeded) into train and test;
* a directory containing ``images.npy`` (n, H, W) float array, ``labels.npy``
  (n,) integer or string array, and optionally ``masks.npy`` (n, H', W')
  uint16 concept rasters with ``concepts.json`` mapping index -> name.

Images are normalized to [0, 1] on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass
class Split:
    images: np.ndarray  # (n, H, W) float32 in [0, 1]
    labels: list[str]
    image_ids: list[str]


@dataclass
class Dataset:
    name: str
    class_names: list[str]
    train: Split
    test: Split
    masks: Optional[np.ndarray] = None  # aligned with train order when present
    concept_names: Optional[dict[int, str]] = None


def _normalize(images):
    images = np.asarray(images, dtype=np.float32)
    peak = images.max() if images.size else 1.0
    if peak > 0:
        images = images / peak
    return images


def _split_ids(prefix, n):
    return [f"{prefix}{i:05d}" for i in range(n)]


def load_digits_dataset(seed: int) -> Dataset:
    from sklearn.datasets import load_digits
    from sklearn.model_selection import train_test_split

    raw = load_digits()
    images = _normalize(raw.images)
    labels = raw.target
    train_x, test_x, train_y, test_y = train_test_split(
        images, labels, test_size=0.2, stratify=labels, random_state=seed
    )
    class_names = [str(c) for c in sorted(set(int(v) for v in labels))]
    return Dataset(
        name="digits",
        class_names=class_names,
        train=Split(train_x, [str(v) for v in train_y], _split_ids("train", len(train_y))),
        test=Split(test_x, [str(v) for v in test_y], _split_ids("test", len(test_y))),
    )


def load_folder_dataset(path, seed: int, test_frac: float = 0.2) -> Dataset:
    from sklearn.model_selection import train_test_split

    root = Path(path)
    images = _normalize(np.load(root / "images.npy"))
    labels = [str(v) for v in np.load(root / "labels.npy", allow_pickle=True)]
    if images.shape[0] != len(labels):
        raise ValueError("images.npy and labels.npy disagree on the number of samples")
    class_names = sorted(set(labels))
    masks = None
    concept_names = None
    mask_path = root / "masks.npy"
    if mask_path.exists():
        masks = np.load(mask_path).astype(np.uint16)
        if masks.shape[0] != images.shape[0]:
            raise ValueError("masks.npy must align with images.npy")
        concepts_path = root / "concepts.json"
        if not concepts_path.exists():
            raise ValueError("masks.npy requires concepts.json")
        concept_names = {int(k): str(v) for k, v in json.loads(concepts_path.read_text()).items()}
    idx = np.arange(images.shape[0])
    if len(class_names) > 1 and 0.0 < test_frac < 1.0:
        train_idx, test_idx = train_test_split(
            idx, test_size=test_frac, stratify=np.array(labels), random_state=seed
        )
    else:
        cut = max(1, int(round(images.shape[0] * (1.0 - test_frac))))
        train_idx, test_idx = idx[:cut], idx[cut:]
    train = Split(
        images[train_idx],
        [labels[i] for i in train_idx],
        _split_ids("train", len(train_idx)),
    )
    test = Split(
        images[test_idx],
        [labels[i] for i in test_idx],
        _split_ids("test", len(test_idx)),
    )
    masks_train = masks[train_idx] if masks is not None else None
    return Dataset(
        name=root.name,
        class_names=class_names,
        train=train,
        test=test,
        masks=masks_train,
        concept_names=concept_names,
    )


def load_dataset(spec, seed: int) -> Dataset:
    if str(spec) == "digits":
        return load_digits_dataset(seed)
    root = Path(spec)
    if root.is_dir():
        return load_folder_dataset(root, seed)
    raise ValueError(f"unknown dataset {spec!r}: expected 'digits' or a dataset directory")
