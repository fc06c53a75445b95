"""Feature-map and segmentation export.

The export point is a convolutional layer's activation site: the layer id
names a Conv2d module (or the activation module itself), and the captured
tensor is the output of the last normalization/activation stage that directly
follows it in execution order, so values are post-ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .containers import write_fms, write_seg
from .data import Split

_FOLLOWER_TYPES = (nn.BatchNorm2d, nn.ReLU)


@dataclass
class ExportJob:
    model: nn.Module
    class_names: list[str]
    split: Split
    split_tag: str
    layer: str
    out_path: str
    batch_size: int = 256


def resolve_capture_module(model: nn.Module, layer: str, sample: torch.Tensor) -> nn.Module:
    """Map a layer id to the module whose output is exported.

    A Conv2d id resolves to the last BatchNorm/ReLU that immediately follows
    it in execution order; a ReLU id resolves to itself.
    """
    modules = dict(model.named_modules())
    if layer not in modules:
        raise ValueError(f"layer {layer!r} not found; available: {sorted(m for m in modules if m)}")
    target = modules[layer]
    if isinstance(target, nn.ReLU):
        return target
    if not isinstance(target, nn.Conv2d):
        raise ValueError(f"layer {layer!r} is {type(target).__name__}, expected Conv2d or ReLU")
    order: list[nn.Module] = []
    hooks = [
        m.register_forward_hook(lambda mod, inp, out: order.append(mod))
        for m in model.modules()
        if len(list(m.children())) == 0
    ]
    try:
        with torch.no_grad():
            model(sample)
    finally:
        for h in hooks:
            h.remove()
    try:
        pos = order.index(target)
    except ValueError:
        raise ValueError(f"layer {layer!r} is never executed by the model") from None
    capture = target
    for follower in order[pos + 1 :]:
        if isinstance(follower, _FOLLOWER_TYPES):
            capture = follower
        else:
            break
    return capture


def capture_maps(model: nn.Module, images: np.ndarray, layer: str, batch_size: int = 256):
    """Forward the images and collect (activations, argmax predictions)."""
    model.eval()
    x = torch.from_numpy(np.ascontiguousarray(images[:, None, :, :], dtype=np.float32))
    capture = resolve_capture_module(model, layer, x[:1])
    grabbed: list[torch.Tensor] = []
    handle = capture.register_forward_hook(lambda mod, inp, out: grabbed.append(out.detach()))
    maps, preds = [], []
    try:
        with torch.no_grad():
            for start in range(0, x.shape[0], batch_size):
                batch = x[start : start + batch_size]
                logits = model(batch)
                maps.append(grabbed.pop().clone())
                preds.append(logits.argmax(dim=1))
    finally:
        handle.remove()
    activations = torch.cat(maps).clamp_min(0.0).numpy()
    return activations, torch.cat(preds).numpy()


def export_features(job: ExportJob) -> np.ndarray:
    """Run the split through the model and write the .fms container."""
    activations, pred_idx = capture_maps(job.model, job.split.images, job.layer, job.batch_size)
    predictions = [job.class_names[i] for i in pred_idx]
    write_fms(
        job.out_path,
        activations,
        image_ids=job.split.image_ids,
        true_labels=job.split.labels,
        class_names=job.class_names,
        cnn_predictions=predictions,
        split_tag=job.split_tag,
    )
    return activations


def export_masks(rasters: np.ndarray, concept_names: dict[int, str],
                 image_ids: list[str], out_path, image_shape: Optional[tuple] = None) -> None:
    """Write segmentation rasters; dims must match the source images when given."""
    rasters = np.asarray(rasters)
    if image_shape is not None and tuple(rasters.shape[-2:]) != tuple(image_shape):
        raise ValueError(
            f"raster dims {rasters.shape[-2:]} do not match image dims {tuple(image_shape)}"
        )
    write_seg(out_path, rasters, concept_names, image_ids)
