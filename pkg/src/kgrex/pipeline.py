"""End-to-end pipeline stages behind the CLI.

Every stage is a pure function of (config, input files): rerunning a stage
with the same inputs produces byte-identical artifacts, and running the whole
pipeline equals running the stages one by one into the same output directory.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import labeling, lp, metrics
from .binarize import (
    BinTable,
    binarize_test,
    binarize_train,
    group_norm_table,
    thresholds_from_json,
    thresholds_to_json,
    write_bintable_csv,
)
from .errors import ValidationError
from .fmstore import read_segmentation, read_store
from .foldsem import FoldParams, FoldResult, fold_learn
from .grouping import build_groups, grouping_from_json, grouping_to_json, norm_table
from .metrics import EvalReport

ABSTAIN_MARKER = "__abstain__"

ARTIFACTS = {
    "grouping": "grouping.json",
    "thresholds": "thresholds.json",
    "bintable": "bintable_train.csv",
    "ruleset": "ruleset.lp",
    "labeled_ruleset": "ruleset_labeled.lp",
    "assignment": "label_assignment.json",
    "predictions": "predictions.csv",
    "report_train": "report_train.json",
    "report": "report.json",
    "report_text": "report.txt",
}


@dataclass
class PipelineConfig:
    alpha: float = 0.6
    gamma: float = 0.7
    theta_s: float = 0.8
    ratio: float = 0.8
    tail: float = 5e-3
    margin: float = 0.05
    top_m_grouping: int = 10
    top_m_labeling: int = 10
    epsilon_frac: float = 0.0
    seed: int = 0
    train: Optional[str] = None
    test: Optional[str] = None
    seg: Optional[str] = None
    out: str = "out"


_CONFIG_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)}


def load_config(path) -> PipelineConfig:
    """JSON config with exactly the PipelineConfig keys; unknown keys are rejected."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    return PipelineConfig(**raw)


def apply_overrides(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    updates = {k: v for k, v in overrides.items() if v is not None}
    unknown = sorted(set(updates) - _CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"unknown config overrides: {unknown}")
    return dataclasses.replace(cfg, **updates)


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Optional[str], what: str) -> str:
    if not path:
        raise ValidationError(f"{what} path is required")
    return path


def _read_train(cfg):
    return read_store(_require(cfg.train, "train store"))


def cmd_group(cfg: PipelineConfig, threads: int = 1):
    """Compute kernel groups from the train store and write grouping.json."""
    store = _read_train(cfg)
    norms = norm_table(store)
    grouping = build_groups(
        store, norms, cfg.theta_s, top_m=cfg.top_m_grouping, threads=threads
    )
    out = _out_dir(cfg)
    (out / ARTIFACTS["grouping"]).write_text(grouping_to_json(grouping), encoding="utf-8")
    return grouping


def _load_or_group(cfg, store, norms, threads):
    path = _out_dir(cfg) / ARTIFACTS["grouping"]
    if path.exists():
        grouping = grouping_from_json(path.read_text(encoding="utf-8"))
        if len(grouping.groups) != store.n_kernels:
            raise ValidationError(
                f"{path} covers {len(grouping.groups)} kernels, store has {store.n_kernels}"
            )
        return grouping
    grouping = build_groups(store, norms, cfg.theta_s, top_m=cfg.top_m_grouping, threads=threads)
    path.write_text(grouping_to_json(grouping), encoding="utf-8")
    return grouping


def cmd_learn(cfg: PipelineConfig, threads: int = 1) -> tuple[FoldResult, EvalReport]:
    """Binarize the train store, induce the rule-set, and report training metrics."""
    store = _read_train(cfg)
    norms = norm_table(store)
    grouping = _load_or_group(cfg, store, norms, threads)
    table = group_norm_table(norms, grouping)
    bins, thresholds = binarize_train(
        table, cfg.alpha, cfg.gamma, labels=list(store.manifest.true_labels)
    )
    out = _out_dir(cfg)
    write_bintable_csv(bins, out / ARTIFACTS["bintable"])
    (out / ARTIFACTS["thresholds"]).write_text(
        thresholds_to_json(thresholds, bins.group_ids), encoding="utf-8"
    )
    result = fold_learn(bins, FoldParams(ratio=cfg.ratio, tail=cfg.tail))
    (out / ARTIFACTS["ruleset"]).write_text(lp.serialize(result.program), encoding="utf-8")
    report = metrics.evaluate(
        result.train_predictions,
        list(store.manifest.true_labels),
        store.manifest.cnn_predictions,
        result.program,
    )
    (out / ARTIFACTS["report_train"]).write_text(metrics.report_json(report), encoding="utf-8")
    return result, report


def _facts_for_program(program: lp.Program, bins: BinTable, row: int, out: Path) -> dict[str, int]:
    facts = {str(g): int(b) for g, b in zip(bins.group_ids, bins.bits[row])}
    needed = set(program.feature_predicates())
    if needed <= set(facts):
        return facts
    # Labeled rule-set: translate raw group-id facts through the assignment.
    assignment_path = out / ARTIFACTS["assignment"]
    if assignment_path.exists():
        assignment = json.loads(assignment_path.read_text(encoding="utf-8"))
        relabeled = {assignment[g]: bit for g, bit in facts.items() if g in assignment}
        if needed <= set(relabeled):
            return relabeled
    missing = sorted(needed - set(facts))
    raise ValidationError(
        f"rule-set predicates {missing} have no facts; for a labeled rule-set the "
        f"label assignment must be present in the output directory"
    )


def _test_bins(cfg: PipelineConfig, test_path: Optional[str]) -> tuple[BinTable, object]:
    store = read_store(_require(test_path or cfg.test, "test store"))
    out = _out_dir(cfg)
    grouping_path = out / ARTIFACTS["grouping"]
    thresholds_path = out / ARTIFACTS["thresholds"]
    for p in (grouping_path, thresholds_path):
        if not p.exists():
            raise ValidationError(f"{p.name} not found under {out}; run group/learn first")
    grouping = grouping_from_json(grouping_path.read_text(encoding="utf-8"))
    thresholds, group_ids = thresholds_from_json(thresholds_path.read_text(encoding="utf-8"))
    if len(grouping.groups) != store.n_kernels:
        raise ValidationError(
            f"grouping covers {len(grouping.groups)} kernels, test store has {store.n_kernels}"
        )
    table = group_norm_table(norm_table(store), grouping)
    bins = binarize_test(table, thresholds, labels=list(store.manifest.true_labels))
    bins.group_ids = group_ids
    return bins, store


def _load_program(cfg: PipelineConfig, ruleset_path: Optional[str]) -> lp.Program:
    path = Path(ruleset_path) if ruleset_path else _out_dir(cfg) / ARTIFACTS["ruleset"]
    if not path.exists():
        raise ValidationError(f"rule-set {path} not found")
    return lp.parse(path.read_text(encoding="utf-8"))


def cmd_infer(
    cfg: PipelineConfig,
    ruleset_path: Optional[str] = None,
    test_path: Optional[str] = None,
) -> tuple[list[Optional[str]], EvalReport]:
    """Classify the test store with frozen thresholds and report the metrics."""
    program = _load_program(cfg, ruleset_path)
    bins, store = _test_bins(cfg, test_path)
    out = _out_dir(cfg)
    predictions = [
        lp.classify(_facts_for_program(program, bins, i, out), program)
        for i in range(bins.bits.shape[0])
    ]
    lines = ["image_id,prediction,true_label"]
    for img_id, pred, true in zip(store.manifest.image_ids, predictions, store.manifest.true_labels):
        lines.append(f"{img_id},{pred if pred is not None else ABSTAIN_MARKER},{true}")
    (out / ARTIFACTS["predictions"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    report = metrics.evaluate(
        predictions,
        list(store.manifest.true_labels),
        store.manifest.cnn_predictions,
        program,
    )
    (out / ARTIFACTS["report"]).write_text(metrics.report_json(report), encoding="utf-8")
    (out / ARTIFACTS["report_text"]).write_text(metrics.report_text(report), encoding="utf-8")
    return predictions, report


def cmd_label(
    cfg: PipelineConfig,
    ruleset_path: Optional[str] = None,
    threads: int = 1,
) -> dict[int, str]:
    """Label the rule-set's predicates from segmentation rasters."""
    program = _load_program(cfg, ruleset_path)
    seg = read_segmentation(_require(cfg.seg, "segmentation store"))
    store = _read_train(cfg)
    norms = norm_table(store)
    grouping = _load_or_group(cfg, store, norms, threads)
    feature_preds = program.feature_predicates()
    if not feature_preds:
        raise ValidationError("rule-set has no feature predicates to label")
    if not all(p.isdigit() for p in feature_preds):
        raise ValidationError("rule-set predicates are not raw group ids (already labeled?)")
    group_ids = [int(p) for p in feature_preds]
    scores = labeling.group_concept_scores(
        store,
        norms,
        grouping,
        seg,
        m=cfg.top_m_labeling,
        group_ids=group_ids,
        epsilon_frac=cfg.epsilon_frac,
        threads=threads,
    )
    assignment = labeling.build_assignment(scores, cfg.margin)
    out = _out_dir(cfg)
    (out / ARTIFACTS["assignment"]).write_text(
        json.dumps({str(g): lbl for g, lbl in assignment.items()}, sort_keys=True),
        encoding="utf-8",
    )
    labeled = labeling.relabel_program(program, {str(g): lbl for g, lbl in assignment.items()})
    (out / ARTIFACTS["labeled_ruleset"]).write_text(lp.serialize(labeled), encoding="utf-8")
    return assignment


def cmd_justify(
    cfg: PipelineConfig,
    image_id: str,
    ruleset_path: Optional[str] = None,
    test_path: Optional[str] = None,
    query_class: Optional[str] = None,
    full_depth: bool = False,
) -> str:
    """Goal-directed justification text for one test image's classification."""
    program = _load_program(cfg, ruleset_path)
    bins, store = _test_bins(cfg, test_path)
    out = _out_dir(cfg)
    try:
        row = store.manifest.image_ids.index(image_id)
    except ValueError:
        raise ValidationError(f"unknown image id {image_id!r}") from None
    facts = _facts_for_program(program, bins, row, out)
    tree = lp.justify(facts, program, query_class=query_class, full_depth=full_depth)
    header = f"% image {image_id}: predicted {tree.root_class if tree.root_class else ABSTAIN_MARKER}\n"
    text = header + tree.render_text()
    safe_id = re.sub(r"[^A-Za-z0-9_.-]+", "_", image_id)
    (out / f"justification_{safe_id}.txt").write_text(text, encoding="utf-8")
    return text


def cmd_pipeline(cfg: PipelineConfig, threads: int = 1) -> dict[str, str]:
    """group -> learn -> infer -> label; returns the artifact paths that were written."""
    out = _out_dir(cfg)
    cmd_group(cfg, threads=threads)
    cmd_learn(cfg, threads=threads)
    produced = ["grouping", "bintable", "thresholds", "ruleset", "report_train"]
    if cfg.test:
        cmd_infer(cfg)
        produced += ["predictions", "report", "report_text"]
    if cfg.seg:
        cmd_label(cfg, threads=threads)
        produced += ["assignment", "labeled_ruleset"]
    return {name: str(out / ARTIFACTS[name]) for name in produced}
