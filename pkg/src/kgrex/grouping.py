"""Feature-map norms and similarity-based kernel groups.

Each kernel is summarized per image by the Euclidean norm of its feature map.
A kernel's group is the set of kernels whose mean cosine similarity, taken over
the feature maps of that kernel's most-activating images, exceeds a threshold.
Every function here is pure; group construction is deterministic regardless of
the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import json

import numpy as np

from .errors import ValidationError
from .fmstore import FeatureMapStore

DEFAULT_TOP_M = 10
DEFAULT_SIM_CAP = 4096


@dataclass
class NormTable:
    """Per-image, per-kernel feature-map norms; shape [n_images, n_kernels]."""

    values: np.ndarray


@dataclass
class KernelGrouping:
    """One member set per kernel, plus the threshold that produced them.

    ``sim`` is the full pairwise similarity matrix when it was materialized
    (kernel counts up to the cap), else None.
    """

    groups: list[list[int]]
    theta_s: float
    sim: Optional[np.ndarray] = None


def feature_norm(feature_map) -> float:
    """Euclidean norm over all entries of one feature map."""
    arr = np.asarray(feature_map, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValidationError("feature map contains non-finite values")
    return float(np.linalg.norm(arr.ravel()))


def norm_table(store: FeatureMapStore) -> NormTable:
    """Norms of every (image, kernel) feature map in the store."""
    data = store.data
    n = data.shape[0]
    values = np.empty(data.shape[:2], dtype=np.float64)
    # Chunked so the float64 upcast never holds more than ~128 MB at once.
    per_image = max(1, int(np.prod(data.shape[1:])))
    step = max(1, (1 << 24) // per_image)
    for start in range(0, n, step):
        block = data[start : start + step].astype(np.float64)
        if not np.isfinite(block).all():
            raise ValidationError("store contains non-finite activations")
        values[start : start + step] = np.sqrt((block * block).sum(axis=(2, 3)))
    return NormTable(values=values)


def top_activating_images(norms: NormTable, kernel: int, m: int = DEFAULT_TOP_M) -> list[int]:
    """Indices of the m images with the largest norm for ``kernel``.

    Descending by norm; ties broken by ascending image index.
    """
    values = norms.values
    n = values.shape[0]
    if not 0 <= kernel < values.shape[1]:
        raise ValidationError(f"kernel index {kernel} out of range")
    if not 1 <= m <= n:
        raise ValidationError(f"m={m} must be between 1 and n_images={n}")
    col = values[:, kernel]
    order = np.lexsort((np.arange(n), -col))
    return [int(i) for i in order[:m]]


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two equal-shape maps; 0 if either is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a.ravel())
    nb = np.linalg.norm(b.ravel())
    if na == 0.0 or nb == 0.0:
        return 0.0
    cos = float(np.dot(a.ravel(), b.ravel()) / (na * nb))
    return float(min(1.0, max(-1.0, cos)))


def kernel_similarity(
    store: FeatureMapStore,
    norms: NormTable,
    k_hat: int,
    k_prime: int,
    m: int = DEFAULT_TOP_M,
) -> float:
    """Mean cosine similarity of k_prime against k_hat over k_hat's top images.

    Directional: the image selection follows k_hat. With fewer than m images
    available, all images are used. Self-similarity is 1 by construction.
    """
    n, n_kernels = norms.values.shape
    if n < 1:
        raise ValidationError("store has no images")
    for k in (k_hat, k_prime):
        if not 0 <= k < n_kernels:
            raise ValidationError(f"kernel index {k} out of range")
    if k_prime == k_hat:
        return 1.0
    top = top_activating_images(norms, k_hat, min(m, n))
    sims = np.array(
        [cosine_similarity(store.data[g, k_hat], store.data[g, k_prime]) for g in top]
    )
    return float(sims.mean())


def _similarity_rows(store, norms, kernels, top_m, cache):
    """Vectorized sim rows for the given seed kernels; one row of length K each."""
    values = norms.values
    n, n_kernels = values.shape
    rows = []
    for k_hat in kernels:
        top = top_activating_images(norms, k_hat, min(top_m, n))
        sims = np.empty((len(top), n_kernels))
        for j, g in enumerate(top):
            maps = cache.get(g)
            if maps is None:
                maps = store.data[g].reshape(n_kernels, -1).astype(np.float64)
                cache[g] = maps
            denom = values[g, :] * values[g, k_hat]
            dots = maps @ maps[k_hat]
            with np.errstate(invalid="ignore", divide="ignore"):
                cos = np.where(denom > 0.0, dots / denom, 0.0)
            sims[j] = np.clip(cos, -1.0, 1.0)
        row = sims.mean(axis=0)
        row[k_hat] = 1.0
        rows.append(row)
    return rows


def build_groups(
    store: FeatureMapStore,
    norms: NormTable,
    theta_s: float,
    top_m: int = DEFAULT_TOP_M,
    sim_cap: int = DEFAULT_SIM_CAP,
    threads: int = 1,
) -> KernelGrouping:
    """Group every kernel with all kernels strictly above the similarity threshold.

    Exactly one group per kernel; the seed kernel is always a member. The full
    K x K matrix is materialized only when K <= sim_cap.
    """
    if not 0.0 <= theta_s < 1.0:
        raise ValidationError(f"theta_s must be in [0, 1), got {theta_s}")
    n, n_kernels = norms.values.shape
    if n < 1:
        raise ValidationError("store has no images")
    cache: dict[int, np.ndarray] = {}
    keep_matrix = n_kernels <= sim_cap

    def compute(k_hat):
        return _similarity_rows(store, norms, [k_hat], top_m, cache)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(compute, range(n_kernels)))
    else:
        rows = [compute(k) for k in range(n_kernels)]

    groups = []
    for k_hat, row in enumerate(rows):
        members = set(np.nonzero(row > theta_s)[0].tolist())
        members.add(k_hat)
        groups.append(sorted(int(k) for k in members))
    sim = np.vstack(rows) if keep_matrix else None
    return KernelGrouping(groups=groups, theta_s=float(theta_s), sim=sim)


def grouping_to_json(grouping: KernelGrouping) -> str:
    payload = {"theta_s": grouping.theta_s, "groups": [list(g) for g in grouping.groups]}
    return json.dumps(payload, sort_keys=True)


def grouping_from_json(text: str) -> KernelGrouping:
    raw = json.loads(text)
    if not isinstance(raw, dict) or "theta_s" not in raw or "groups" not in raw:
        raise ValidationError("grouping JSON must contain theta_s and groups")
    groups = [sorted(int(k) for k in g) for g in raw["groups"]]
    for idx, g in enumerate(groups):
        if idx not in g:
            raise ValidationError(f"group {idx} does not contain its own kernel")
    return KernelGrouping(groups=groups, theta_s=float(raw["theta_s"]), sim=None)
