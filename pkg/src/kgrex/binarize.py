"""Group-norm tables and their binarization.

The group norm of an image is the mean of its member-kernel norms. Each group
column gets one threshold, alpha * mean + gamma * population standard
deviation, computed on the training table and frozen for inference. A bit is 1
only when the value strictly exceeds the threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import json

import numpy as np

from .errors import ValidationError
from .grouping import KernelGrouping, NormTable

DEFAULT_ALPHA = 0.6
DEFAULT_GAMMA = 0.7


@dataclass
class GroupNormTable:
    """Per-image group norms; one column per kernel group."""

    values: np.ndarray
    group_ids: list[int]


@dataclass
class ThresholdVector:
    """Frozen per-group binarization thresholds and the weights that built them."""

    theta: np.ndarray
    alpha: float
    gamma: float


@dataclass
class BinTable:
    """0/1 group activations per image, optionally with class labels."""

    bits: np.ndarray
    group_ids: list[int]
    labels: Optional[list[str]] = None


def group_norm_table(norms: NormTable, grouping: KernelGrouping) -> GroupNormTable:
    values = norms.values
    n, n_kernels = values.shape
    if len(grouping.groups) != n_kernels:
        raise ValidationError(
            f"grouping has {len(grouping.groups)} groups but the table has {n_kernels} kernels"
        )
    out = np.empty((n, n_kernels), dtype=np.float64)
    for j, members in enumerate(grouping.groups):
        if not members:
            raise ValidationError(f"group {j} is empty")
        if min(members) < 0 or max(members) >= n_kernels:
            raise ValidationError(f"group {j} references a kernel out of range")
        out[:, j] = values[:, members].mean(axis=1)
    return GroupNormTable(values=out, group_ids=list(range(n_kernels)))


def compute_threshold(column, alpha: float, gamma: float) -> float:
    """alpha * mean + gamma * population (1/n) standard deviation of a column."""
    col = np.asarray(column, dtype=np.float64)
    if col.ndim != 1 or col.size == 0:
        raise ValidationError("threshold needs a non-empty 1-D column")
    if not (np.isfinite(col).all() and np.isfinite(alpha) and np.isfinite(gamma)):
        raise ValidationError("threshold inputs must be finite")
    return float(alpha * col.mean() + gamma * col.std())


def binarize_train(
    table: GroupNormTable, alpha: float, gamma: float, labels: Optional[list[str]] = None
) -> tuple[BinTable, ThresholdVector]:
    """Threshold each column on its own train statistics; returns bits and thresholds."""
    if not (np.isfinite(alpha) and np.isfinite(gamma)):
        raise ValidationError("alpha and gamma must be finite")
    values = table.values
    if values.shape[0] == 0:
        raise ValidationError("cannot binarize an empty table")
    theta = alpha * values.mean(axis=0) + gamma * values.std(axis=0)
    bits = (values > theta).astype(np.uint8)
    _check_labels(labels, values.shape[0])
    return (
        BinTable(bits=bits, group_ids=list(table.group_ids), labels=labels),
        ThresholdVector(theta=theta, alpha=float(alpha), gamma=float(gamma)),
    )


def binarize_test(
    table: GroupNormTable, thresholds: ThresholdVector, labels: Optional[list[str]] = None
) -> BinTable:
    """Apply frozen training thresholds to a new table (same strict > rule)."""
    values = table.values
    if values.shape[1] != thresholds.theta.shape[0]:
        raise ValidationError(
            f"table has {values.shape[1]} columns but thresholds cover {thresholds.theta.shape[0]}"
        )
    _check_labels(labels, values.shape[0])
    bits = (values > thresholds.theta).astype(np.uint8)
    return BinTable(bits=bits, group_ids=list(table.group_ids), labels=labels)


def _check_labels(labels, n_rows):
    if labels is not None and len(labels) != n_rows:
        raise ValidationError(f"{len(labels)} labels for {n_rows} rows")


def write_bintable_csv(table: BinTable, path) -> None:
    """One row per image, group-id columns then "label"; the rule-learner input contract."""
    if table.labels is None:
        raise ValidationError("labels are required to write the learner CSV")
    _check_labels(table.labels, table.bits.shape[0])
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([str(g) for g in table.group_ids] + ["label"])
        for row, label in zip(table.bits, table.labels):
            writer.writerow([int(b) for b in row] + [label])


def read_bintable_csv(path) -> BinTable:
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("empty CSV") from None
        if not header or header[-1] != "label":
            raise ValidationError('last CSV column must be "label"')
        try:
            group_ids = [int(h) for h in header[:-1]]
        except ValueError:
            raise ValidationError("feature columns must be integer group ids") from None
        rows, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValidationError(f"row {line_no} has {len(row)} fields, expected {len(header)}")
            bits = []
            for v in row[:-1]:
                if v not in ("0", "1"):
                    raise ValidationError(f"row {line_no} has non-binary value {v!r}")
                bits.append(int(v))
            rows.append(bits)
            labels.append(row[-1])
    bits = np.array(rows, dtype=np.uint8) if rows else np.zeros((0, len(group_ids)), dtype=np.uint8)
    return BinTable(bits=bits, group_ids=group_ids, labels=labels)


def thresholds_to_json(thresholds: ThresholdVector, group_ids: list[int]) -> str:
    payload = {
        "alpha": thresholds.alpha,
        "gamma": thresholds.gamma,
        "group_ids": [int(g) for g in group_ids],
        "theta": [float(t) for t in thresholds.theta],
    }
    return json.dumps(payload, sort_keys=True)


def thresholds_from_json(text: str) -> tuple[ThresholdVector, list[int]]:
    raw = json.loads(text)
    missing = {"alpha", "gamma", "group_ids", "theta"} - set(raw)
    if missing:
        raise ValidationError(f"thresholds JSON is missing keys: {sorted(missing)}")
    theta = np.asarray(raw["theta"], dtype=np.float64)
    group_ids = [int(g) for g in raw["group_ids"]]
    if theta.shape[0] != len(group_ids):
        raise ValidationError("theta and group_ids lengths differ")
    return ThresholdVector(theta=theta, alpha=float(raw["alpha"]), gamma=float(raw["gamma"])), group_ids
