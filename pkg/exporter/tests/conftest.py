"""Shared fixtures: a tiny trained model and a synthetic folder dataset."""

import json

import numpy as np
import pytest

from fmexport.data import load_dataset
from fmexport.model import train_small_cnn


@pytest.fixture(scope="session")
def digits():
    return load_dataset("digits", seed=0)


@pytest.fixture(scope="session")
def tiny_model(digits):
    # 1 epoch, 16 kernels: fast enough for unit tests, real enough to export
    model = train_small_cnn(
        digits.train, digits.class_names, epochs=1, seed=0, n_kernels=16, augment=False
    )
    return model


def make_folder_dataset(root, n=12, side=8, with_masks=True):
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    images = rng.random((n, side, side)).astype(np.float32)
    labels = np.array(["even" if i % 2 == 0 else "odd" for i in range(n)])
    np.save(root / "images.npy", images)
    np.save(root / "labels.npy", labels)
    if with_masks:
        masks = np.zeros((n, side, side), dtype=np.uint16)
        masks[:, :, : side // 2] = 1
        masks[:, : side // 2, side // 2 :] = 2
        np.save(root / "masks.npy", masks)
        (root / "concepts.json").write_text(
            json.dumps({"0": "unlabeled", "1": "left_zone", "2": "upper_right"})
        )
    return root
