"""Rule learner: sequential covering with default rules and learned exceptions.

From a binary feature table with class labels, the learner induces an ordered
decision list of normal-logic-program rules. Each rule is grown greedily, one
literal at a time, until its false positives fall under ``ratio`` times its
true positives; residual false positives are then handled by recursively
learning exception rules on the swapped example sets, attached as negated
``abN`` literals. Covering stops for a class once the remaining positives drop
under ``tail`` times the training-set size.

Everything is deterministic: literal candidates are ranked by a signed,
coverage-weighted Gini gain and ties are broken by (feature index, positive
polarity first); classes are processed by descending frequency, name-ascending
on ties; abnormality ids are numbered globally in creation order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import lp
from .binarize import BinTable
from .errors import ValidationError


@dataclass
class FoldParams:
    ratio: float = 0.8
    tail: float = 5e-3
    max_exception_depth: int = 4

    def __post_init__(self):
        if self.ratio < 0:
            raise ValidationError("ratio must be >= 0")
        if self.tail < 0:
            raise ValidationError("tail must be >= 0")
        if self.max_exception_depth < 0:
            raise ValidationError("max_exception_depth must be >= 0")


@dataclass
class RuleAudit:
    """Creation-time bookkeeping for one emitted rule, for contract checks."""

    pos_index: np.ndarray
    neg_index: np.ndarray


@dataclass
class FoldResult:
    program: lp.Program
    class_names: list[str]
    feature_names: list[str]
    train_predictions: list[Optional[str]]
    audits: list[RuleAudit]


def heuristic_score(tp: int, fn: int, fp: int, tn: int) -> float:
    """Signed, coverage-weighted Gini impurity reduction for one literal split.

    Positive when the covered side is enriched in positive examples; literals
    anti-correlated with the class score negative, so a greedy search never
    prefers them over doing nothing. A split that leaves both sides at the
    parent class ratio scores 0.
    """
    if min(tp, fn, fp, tn) < 0:
        raise ValidationError("counts must be non-negative")
    total = tp + fn + fp + tn
    if total == 0:
        return 0.0
    pos, neg = tp + fn, fp + tn
    cov, unc = tp + fp, fn + tn
    g_parent = 2.0 * pos * neg / (total * total)
    g_cov = 2.0 * tp * fp / (cov * cov) if cov else 0.0
    g_unc = 2.0 * fn * tn / (unc * unc) if unc else 0.0
    gain = g_parent - (cov / total) * g_cov - (unc / total) * g_unc
    assoc = tp * tn - fp * fn
    if assoc > 0:
        return gain
    if assoc < 0:
        return -gain
    return 0.0


@dataclass
class _Draft:
    class_name: Optional[str]
    ab_id: Optional[int]
    body: list[tuple[int, bool]]
    exceptions: list["_Draft"] = field(default_factory=list)
    audit: Optional[RuleAudit] = None


class _Learner:
    def __init__(self, X: np.ndarray, params: FoldParams, n_total: int):
        self.X = X
        self.params = params
        self.min_cover = max(1.0, params.tail * n_total)
        self.next_ab = 1
        self.ab_drafts: list[_Draft] = []

    def cover(self, pos_idx: np.ndarray, neg_idx: np.ndarray, depth: int, class_name) -> list[_Draft]:
        drafts: list[_Draft] = []
        remaining, negatives = pos_idx, neg_idx
        while remaining.size >= self.min_cover:
            draft, default_pos, full_pos = self._learn_rule(remaining, negatives, depth, class_name)
            if draft is None:
                if default_pos is None or default_pos.size == 0:
                    break  # nothing with enough coverage can be grown
                # Ratio unmet after exhausting literals: discard the rule and
                # retire its positives so covering terminates.
                remaining = _setdiff(remaining, default_pos)
                continue
            drafts.append(draft)
            next_remaining = _setdiff(remaining, full_pos)
            if next_remaining.size == remaining.size:
                # Exceptions ate the whole default coverage; retire those
                # positives anyway to guarantee progress.
                next_remaining = _setdiff(remaining, default_pos)
            remaining = next_remaining
            # Rows the new rule captures never reach later rules of the
            # decision list, so they leave the negative stream as well.
            negatives = negatives[~self.full_mask(draft, negatives)]
        return drafts

    def _learn_rule(self, pos_idx, neg_idx, depth, class_name):
        body: list[tuple[int, bool]] = []
        used: set[int] = set()
        cur_pos, cur_neg = pos_idx, neg_idx
        while True:
            lit = self._best_literal(cur_pos, cur_neg, used)
            if lit is None:
                break
            col, negated = lit
            body.append(lit)
            used.add(col)
            cur_pos = cur_pos[self._lit_mask(cur_pos, col, negated)]
            cur_neg = cur_neg[self._lit_mask(cur_neg, col, negated)]
            if cur_neg.size <= self.params.ratio * cur_pos.size:
                break
        tp, fp = cur_pos.size, cur_neg.size
        if tp < self.min_cover:
            return None, None, None
        if fp > self.params.ratio * tp:
            return None, cur_pos, None
        if depth == 0:
            draft = _Draft(class_name=class_name, ab_id=None, body=body)
        else:
            draft = _Draft(class_name=None, ab_id=self.next_ab, body=body)
            self.next_ab += 1
            self.ab_drafts.append(draft)
        draft.audit = RuleAudit(pos_index=pos_idx.copy(), neg_index=neg_idx.copy())
        if fp > 0 and depth < self.params.max_exception_depth:
            draft.exceptions = self.cover(cur_neg, cur_pos, depth + 1, None)
        keep = np.ones(cur_pos.size, dtype=bool)
        for ex in draft.exceptions:
            keep &= ~self.full_mask(ex, cur_pos)
        return draft, cur_pos, cur_pos[keep]

    def _lit_mask(self, idx, col, negated):
        want = 0 if negated else 1
        return self.X[idx, col] == want

    def full_mask(self, draft: _Draft, idx: np.ndarray) -> np.ndarray:
        """Rows of ``idx`` covered by the whole rule: default body and no firing exception."""
        mask = np.ones(idx.size, dtype=bool)
        for col, negated in draft.body:
            mask &= self._lit_mask(idx, col, negated)
        for ex in draft.exceptions:
            mask &= ~self.full_mask(ex, idx)
        return mask

    def _best_literal(self, pos_idx, neg_idx, used):
        n_pos, n_neg = pos_idx.size, neg_idx.size
        if n_pos == 0:
            return None
        n_features = self.X.shape[1]
        pos_ones = self.X[pos_idx].sum(axis=0)
        neg_ones = self.X[neg_idx].sum(axis=0) if n_neg else np.zeros(n_features, dtype=np.int64)
        best, best_score = None, 0.0
        for col in range(n_features):
            if col in used:
                continue
            for negated in (False, True):
                tp = int(n_pos - pos_ones[col]) if negated else int(pos_ones[col])
                if tp < self.min_cover:
                    continue  # would make the rule fall under the coverage floor
                fp = int(n_neg - neg_ones[col]) if negated else int(neg_ones[col])
                score = heuristic_score(tp, n_pos - tp, fp, n_neg - fp)
                if score > best_score:
                    best, best_score = (col, negated), score
        return best


def _setdiff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if b.size == 0:
        return a
    return a[~np.isin(a, b)]


def _as_examples(examples) -> np.ndarray:
    arr = np.asarray(examples)
    if arr.ndim != 2:
        raise ValidationError(f"examples must be a 2-D bit table, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValidationError("non-binary feature value in examples")
    return arr.astype(np.uint8)


def _draft_to_rule(draft: _Draft, feature_names: list[str]) -> lp.Rule:
    body = [lp.Literal(feature_names[col], negated) for col, negated in draft.body]
    body += [lp.Literal(f"ab{ex.ab_id}", True) for ex in draft.exceptions]
    return lp.Rule(head_class=draft.class_name, head_ab=draft.ab_id, body=tuple(body))


def _assemble(target_drafts, ab_drafts, feature_names):
    rules, audits = [], []
    for draft in list(target_drafts) + list(ab_drafts):
        rules.append(_draft_to_rule(draft, feature_names))
        audits.append(draft.audit)
    program = lp.Program(rules)
    program.validate(require_defined_abs=True)
    return program, audits


def fold_learn_class(
    pos,
    neg,
    params: Optional[FoldParams] = None,
    depth: int = 0,
    class_name: str = "pos",
    feature_names: Optional[list[str]] = None,
) -> list[lp.Rule]:
    """Learn rules separating ``pos`` from ``neg``; the one-class entry point.

    With depth > 0 the rules get abnormality heads, mirroring the recursive
    exception-learning call. Returns an empty sequence when the feature set is
    empty or no rule satisfies the coverage and ratio bounds.
    """
    params = params or FoldParams()
    pos_arr, neg_arr = _as_examples(pos), _as_examples(neg)
    if pos_arr.shape[1] != neg_arr.shape[1]:
        raise ValidationError("positive and negative examples disagree on feature count")
    n_features = pos_arr.shape[1]
    if n_features == 0:
        return []
    X = np.vstack([pos_arr, neg_arr])
    learner = _Learner(X, params, n_total=X.shape[0])
    pos_idx = np.arange(pos_arr.shape[0])
    neg_idx = np.arange(pos_arr.shape[0], X.shape[0])
    drafts = learner.cover(pos_idx, neg_idx, depth, class_name)
    names = feature_names or [str(i) for i in range(n_features)]
    if depth == 0:
        program, _ = _assemble(drafts, learner.ab_drafts, names)
        return program.rules
    # depth > 0 mirrors the recursive exception call: every draft already has
    # an abnormality head and is registered in creation order.
    return [_draft_to_rule(d, names) for d in learner.ab_drafts]


def fold_learn(table: BinTable, params: Optional[FoldParams] = None) -> FoldResult:
    """One-vs-rest rule induction over a labeled bit table.

    Classes are processed in descending training frequency (name order on
    ties) and their rules concatenated in that order, forming the decision
    list. Abnormality numbering is global across classes.
    """
    params = params or FoldParams()
    bits = _as_examples(table.bits)
    if bits.shape[0] == 0:
        raise ValidationError("empty training table")
    if table.labels is None or len(table.labels) != bits.shape[0]:
        raise ValidationError("training table must carry one label per row")
    labels = [str(l) for l in table.labels]
    counts = Counter(labels)
    if len(counts) < 2:
        raise ValidationError(f"need at least 2 classes, got {sorted(counts)}")
    class_order = sorted(counts, key=lambda c: (-counts[c], c))

    learner = _Learner(bits, params, n_total=bits.shape[0])
    label_arr = np.array(labels)
    target_drafts: list[_Draft] = []
    all_rows = np.arange(bits.shape[0])
    captured = np.zeros(bits.shape[0], dtype=bool)
    for cls in class_order:
        # Rows already captured by earlier rules never reach this class's
        # rules under decision-list evaluation, so they sit out its training.
        pos_idx = np.nonzero((label_arr == cls) & ~captured)[0]
        neg_idx = np.nonzero((label_arr != cls) & ~captured)[0]
        drafts = learner.cover(pos_idx, neg_idx, 0, cls)
        target_drafts.extend(drafts)
        for draft in drafts:
            captured |= learner.full_mask(draft, all_rows)

    feature_names = [str(g) for g in table.group_ids]
    if len(feature_names) != bits.shape[1]:
        raise ValidationError("group_ids do not match the table width")
    program, audits = _assemble(target_drafts, learner.ab_drafts, feature_names)

    predictions: list[Optional[str]] = [None] * bits.shape[0]
    unassigned = np.ones(bits.shape[0], dtype=bool)
    for draft in target_drafts:
        fires = learner.full_mask(draft, all_rows) & unassigned
        for i in np.nonzero(fires)[0]:
            predictions[int(i)] = draft.class_name
        unassigned &= ~fires
    return FoldResult(
        program=program,
        class_names=class_order,
        feature_names=feature_names,
        train_predictions=predictions,
        audits=audits,
    )
