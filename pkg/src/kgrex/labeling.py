"""Concept labels for rule-set predicates via activation/segmentation overlap.

For a kernel group, the score of a concept is the fraction of the group's
activation support that falls inside that concept's segmentation region,
averaged per kernel over the group's top-scoring images and then averaged over
the group's kernels. A predicate's label joins every concept whose normalized
score sits within ``margin`` of the top concept, each suffixed with a counter
that is unique among groups sharing the concept.
"""

from __future__ import annotations

import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import lp
from .binarize import group_norm_table
from .errors import ValidationError
from .fmstore import FeatureMapStore, SegmentationStore
from .grouping import KernelGrouping, NormTable

DEFAULT_TOP_M = 10
MAX_LABEL_CONCEPTS = 4
# Float-noise slack on the inclusive margin comparison.
_MARGIN_EPS = 1e-12


def resize_activation(feature_map, height: int, width: int) -> np.ndarray:
    """Corner-anchored bilinear upsampling of a feature map to image resolution."""
    src = np.asarray(feature_map, dtype=np.float64)
    if src.ndim != 2:
        raise ValidationError(f"feature map must be 2-D, got shape {src.shape}")
    if height <= 0 or width <= 0:
        raise ValidationError("target dimensions must be positive")
    src_h, src_w = src.shape
    if height < src_h or width < src_w:
        raise ValidationError(
            f"target {height}x{width} is smaller than the source {src_h}x{src_w}"
        )
    ys = np.linspace(0.0, src_h - 1.0, height)
    xs = np.linspace(0.0, src_w - 1.0, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = (1.0 - wx) * src[np.ix_(y0, x0)] + wx * src[np.ix_(y0, x1)]
    bottom = (1.0 - wx) * src[np.ix_(y1, x0)] + wx * src[np.ix_(y1, x1)]
    return (1.0 - wy) * top + wy * bottom


def mask_support(resized, epsilon_frac: float = 0.0) -> np.ndarray:
    """Pixels strictly above epsilon_frac times the map's maximum."""
    arr = np.asarray(resized, dtype=np.float64)
    if not 0.0 <= epsilon_frac < 1.0:
        raise ValidationError("epsilon_frac must be in [0, 1)")
    peak = arr.max() if arr.size else 0.0
    return arr > epsilon_frac * peak


def iou_c(support: np.ndarray, raster: np.ndarray, concept: int) -> float:
    """Fraction of the support set lying inside the concept's region; 0 on empty support."""
    support = np.asarray(support, dtype=bool)
    raster = np.asarray(raster)
    if support.shape != raster.shape:
        raise ValidationError(f"shape mismatch: support {support.shape} vs raster {raster.shape}")
    total = int(support.sum())
    if total == 0:
        return 0.0
    inside = int((raster[support] == concept).sum())
    return inside / total


@dataclass
class ConceptScoreTable:
    """Per-group concept scores (mean over kernels of per-kernel image means)."""

    scores: dict[int, dict[str, float]]
    m: int


def group_concept_scores(
    store: FeatureMapStore,
    norms: NormTable,
    grouping: KernelGrouping,
    seg: SegmentationStore,
    m: int = DEFAULT_TOP_M,
    group_ids: Optional[list[int]] = None,
    epsilon_frac: float = 0.0,
    threads: int = 1,
) -> ConceptScoreTable:
    """Score concepts for each listed group over its top-m segmented images.

    Only images with a segmentation raster participate; when fewer than m are
    available all of them are used. Concepts absent from an image contribute 0
    to that image's term of the per-kernel mean.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    seg_index = {img_id: j for j, img_id in enumerate(seg.image_ids)}
    rows = [
        (i, seg_index[img_id])
        for i, img_id in enumerate(store.manifest.image_ids)
        if img_id in seg_index
    ]
    if not rows:
        raise ValidationError("no segmented images overlap the store")
    store_rows = [r[0] for r in rows]
    seg_rows = [r[1] for r in rows]
    sub_norms = NormTable(values=norms.values[store_rows, :])
    table = group_norm_table(sub_norms, grouping)
    m_eff = min(m, len(rows))
    if group_ids is None:
        group_ids = list(range(len(grouping.groups)))

    def score_group(gid: int) -> dict[str, float]:
        if not 0 <= gid < len(grouping.groups):
            raise ValidationError(f"group id {gid} out of range")
        col = table.values[:, gid]
        order = np.lexsort((np.arange(col.shape[0]), -col))[:m_eff]
        members = grouping.groups[gid]
        totals: dict[int, float] = defaultdict(float)
        for kernel in members:
            for local in order:
                raster = seg.rasters[seg_rows[int(local)]]
                resized = resize_activation(store.data[store_rows[int(local)], kernel], seg.height, seg.width)
                support = mask_support(resized, epsilon_frac)
                for concept in np.unique(raster):
                    concept = int(concept)
                    if concept == 0:
                        continue
                    totals[concept] += iou_c(support, raster, concept)
        denom = m_eff * len(members)
        return {
            seg.concept_names[c]: totals[c] / denom for c in sorted(totals)
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score_group, group_ids))
    else:
        results = [score_group(g) for g in group_ids]
    return ConceptScoreTable(scores=dict(zip(group_ids, results)), m=m)


def sanitize_concept(name: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_]+", "_", name).strip("_")
    return cleaned or "concept"


class LabelAssigner:
    """Stateful labeler: concept counters are global across the groups it labels."""

    def __init__(self, margin: float, max_concepts: int = MAX_LABEL_CONCEPTS):
        if margin < 0:
            raise ValidationError("margin must be >= 0")
        self.margin = margin
        self.max_concepts = max_concepts
        self._counters: dict[str, int] = defaultdict(int)

    def assign(self, scores: Mapping[str, float]) -> str:
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        total = sum(v for _, v in ranked if v > 0)
        if total <= 0:
            return self._suffixed("unknown")
        top = ranked[0][1] / total
        parts = []
        for concept, value in ranked:
            if len(parts) >= self.max_concepts:
                break
            if value <= 0:
                break
            if value / total >= top - self.margin - _MARGIN_EPS:
                parts.append(self._suffixed(sanitize_concept(concept)))
        return "_".join(parts)

    def _suffixed(self, concept: str) -> str:
        self._counters[concept] += 1
        part = f"{concept}{self._counters[concept]}"
        # abN is reserved for abnormality predicates.
        if lp.AB_PATTERN.fullmatch(part):
            part = "c_" + part
        return part


def assign_label(scores: Mapping[str, float], margin: float) -> str:
    """One-off labeling of a single group (counters start fresh)."""
    return LabelAssigner(margin).assign(scores)


def build_assignment(score_table: ConceptScoreTable, margin: float) -> dict[int, str]:
    """Labels for every scored group, processed in ascending group-id order."""
    assigner = LabelAssigner(margin)
    return {gid: assigner.assign(score_table.scores[gid]) for gid in sorted(score_table.scores)}


def relabel_program(program: lp.Program, assignment: Mapping[str, str]) -> lp.Program:
    """Rename every feature predicate via the assignment; abN literals are untouched."""
    feature_preds = program.feature_predicates()
    missing = [p for p in feature_preds if p not in assignment]
    if missing:
        raise ValidationError(f"no label assigned for predicates: {missing}")
    rules = []
    for rule in program.rules:
        body = tuple(
            lit if lit.ab_id is not None else lp.Literal(assignment[lit.predicate], lit.negated)
            for lit in rule.body
        )
        rules.append(lp.Rule(head_class=rule.head_class, head_ab=rule.head_ab, body=body))
    relabeled = lp.Program(rules)
    relabeled.validate()
    return relabeled
