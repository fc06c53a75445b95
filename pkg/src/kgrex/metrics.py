"""Evaluation quantities for a rule-set classifier.

Abstentions (None predictions) count as wrong for accuracy and as mismatches
for fidelity. Rule-set statistics: n_rules counts every rule including
abnormality definitions; unique predicates counts distinct feature predicates
only (abN is bookkeeping, not a kernel group); size counts every body literal
occurrence, abN included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

from . import lp
from .errors import ValidationError


@dataclass
class EvalReport:
    accuracy: float
    fidelity: Optional[float]
    n_rules: int
    n_unique_predicates: int
    size: int
    n_abstain: int
    n_examples: int


def _check_aligned(a: Sequence, b: Sequence, what: str):
    if len(a) != len(b):
        raise ValidationError(f"{what}: lengths differ ({len(a)} vs {len(b)})")
    if len(a) == 0:
        raise ValidationError(f"{what}: empty sequences")


def accuracy(predictions: Sequence[Optional[str]], truth: Sequence[str]) -> float:
    _check_aligned(predictions, truth, "accuracy")
    hits = sum(1 for p, t in zip(predictions, truth) if p is not None and p == t)
    return hits / len(truth)


def fidelity(nesy_predictions: Sequence[Optional[str]], cnn_predictions: Sequence[str]) -> float:
    """Fraction of instances where the rule-set agrees with the source network."""
    _check_aligned(nesy_predictions, cnn_predictions, "fidelity")
    hits = sum(1 for p, c in zip(nesy_predictions, cnn_predictions) if p is not None and p == c)
    return hits / len(cnn_predictions)


def ruleset_stats(program: lp.Program) -> tuple[int, int, int]:
    n_rules = len(program.rules)
    unique = {lit.predicate for r in program.rules for lit in r.body if lit.ab_id is None}
    size = sum(len(r.body) for r in program.rules)
    return n_rules, len(unique), size


def evaluate(
    predictions: Sequence[Optional[str]],
    truth: Sequence[str],
    cnn_predictions: Optional[Sequence[str]],
    program: lp.Program,
) -> EvalReport:
    n_rules, n_unique, size = ruleset_stats(program)
    return EvalReport(
        accuracy=accuracy(predictions, truth),
        fidelity=None if cnn_predictions is None else fidelity(predictions, cnn_predictions),
        n_rules=n_rules,
        n_unique_predicates=n_unique,
        size=size,
        n_abstain=sum(1 for p in predictions if p is None),
        n_examples=len(predictions),
    )


_COUNTING_NOTE = (
    "Pred. counts distinct feature predicates (abN bookkeeping excluded); "
    "Size counts every body literal across all rules, abN included."
)


def report_json(report: EvalReport) -> str:
    return json.dumps(
        {
            "accuracy": report.accuracy,
            "fidelity": report.fidelity,
            "n_rules": report.n_rules,
            "n_unique_predicates": report.n_unique_predicates,
            "size": report.size,
            "n_abstain": report.n_abstain,
            "n_examples": report.n_examples,
            "conventions": _COUNTING_NOTE,
        },
        sort_keys=True,
    )


def report_text(report: EvalReport) -> str:
    fid = "n/a" if report.fidelity is None else f"{report.fidelity:.4f}"
    header = f"{'Fid.':<8}{'Acc.':<8}{'Pred.':<8}{'Rules':<8}{'Size':<8}{'Abstain':<9}{'N':<8}"
    row = (
        f"{fid:<8}{report.accuracy:<8.4f}{report.n_unique_predicates:<8d}"
        f"{report.n_rules:<8d}{report.size:<8d}{report.n_abstain:<9d}{report.n_examples:<8d}"
    )
    return header + "\n" + row + "\n" + "# " + _COUNTING_NOTE + "\n"
