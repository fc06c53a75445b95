"""A small two-block CNN and its trainer.

Block 1: two 3x3 conv+BN+ReLU stages and a 2x2 max-pool. Block 2: two 3x3
conv+BN+ReLU stages at the pooled resolution; the second stage, named
``features.relu2b``, is the export point. Channel dropout before the linear
head spreads concepts across several kernels, which is what makes kernel
grouping worthwhile downstream.

Training is deterministic for a fixed seed: the seed fixes initialization,
batch order, and dropout masks.
"""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import Split

DEFAULT_KERNELS = 128
DEFAULT_DROPOUT = 0.5
AUGMENT_SHIFTS = ((0, 1), (0, -1), (1, 0), (-1, 0))


class SmallCnn(nn.Module):
    def __init__(self, n_classes: int, image_side: int, n_kernels: int = DEFAULT_KERNELS,
                 dropout: float = DEFAULT_DROPOUT):
        super().__init__()
        if image_side % 2 != 0:
            raise ValueError("image side must be even (one 2x2 pool)")
        side = image_side // 2
        k = n_kernels
        self.features = nn.Sequential(OrderedDict([
            ("conv1a", nn.Conv2d(1, 32, 3, padding=1)),
            ("bn1a", nn.BatchNorm2d(32)),
            ("relu1a", nn.ReLU()),
            ("conv1b", nn.Conv2d(32, 32, 3, padding=1)),
            ("bn1b", nn.BatchNorm2d(32)),
            ("relu1b", nn.ReLU()),
            ("pool1", nn.MaxPool2d(2)),
            ("conv2a", nn.Conv2d(32, k, 3, padding=1)),
            ("bn2a", nn.BatchNorm2d(k)),
            ("relu2a", nn.ReLU()),
            ("conv2b", nn.Conv2d(k, k, 3, padding=1)),
            ("bn2b", nn.BatchNorm2d(k, affine=False)),
            ("relu2b", nn.ReLU()),
        ]))
        self.head = nn.Sequential(OrderedDict([
            ("drop", nn.Dropout2d(dropout)),
            ("flatten", nn.Flatten()),
            ("classify", nn.Linear(k * side * side, n_classes)),
        ]))
        self.n_classes = n_classes
        self.image_side = image_side
        self.n_kernels = k
        self.dropout = dropout

    def forward(self, x):
        return self.head(self.features(x))


def _shift(images: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(images)
    h, w = images.shape[-2:]
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    yd = slice(max(-dy, 0), h + min(-dy, 0))
    xd = slice(max(-dx, 0), w + min(-dx, 0))
    out[..., ys, xs] = images[..., yd, xd]
    return out


def train_small_cnn(
    train: Split,
    class_names: list[str],
    epochs: int,
    seed: int,
    n_kernels: int = DEFAULT_KERNELS,
    dropout: float = DEFAULT_DROPOUT,
    augment: bool = True,
    batch_size: int = 64,
    lr: float = 1e-3,
) -> SmallCnn:
    """Train the two-block CNN; one-pixel-shift augmentation is on by default."""
    torch.manual_seed(seed)
    side = train.images.shape[-1]
    model = SmallCnn(len(class_names), side, n_kernels=n_kernels, dropout=dropout)
    class_index = {c: i for i, c in enumerate(class_names)}
    base = train.images[:, None, :, :]
    targets = np.array([class_index[lbl] for lbl in train.labels], dtype=np.int64)
    if augment:
        stacks = [base] + [_shift(base, dy, dx) for dy, dx in AUGMENT_SHIFTS]
        images = np.concatenate(stacks)
        targets = np.concatenate([targets] * len(stacks))
    else:
        images = base
    x = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
    y = torch.from_numpy(targets)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    model.train()
    for _ in range(epochs):
        order = torch.randperm(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            idx = order[start : start + batch_size]
            optimizer.zero_grad()
            loss_fn(model(x[idx]), y[idx]).backward()
            optimizer.step()
    model.eval()
    return model


def save_checkpoint(model: SmallCnn, class_names: list[str], path) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "class_names": list(class_names),
            "n_classes": model.n_classes,
            "image_side": model.image_side,
            "n_kernels": model.n_kernels,
            "dropout": model.dropout,
        },
        path,
    )


def load_checkpoint(path) -> tuple[SmallCnn, list[str]]:
    blob = torch.load(Path(path), map_location="cpu", weights_only=True)
    model = SmallCnn(
        blob["n_classes"], blob["image_side"], n_kernels=blob["n_kernels"], dropout=blob["dropout"]
    )
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, list(blob["class_names"])
