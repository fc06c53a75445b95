"""Interpretable rule-set extraction from CNN last-layer feature maps.

The pipeline: group similar kernels by feature-map cosine similarity, binarize
per-image kernel-group norms against train-set thresholds, induce an ordered
default-rule program from the bit table, optionally label its predicates with
segmentation concepts, then classify and justify predictions with the program
alone.
"""

from .binarize import (
    BinTable,
    GroupNormTable,
    ThresholdVector,
    binarize_test,
    binarize_train,
    compute_threshold,
    group_norm_table,
)
from .errors import (
    CorruptionError,
    FormatError,
    ParseError,
    PipelineError,
    StratificationError,
    ValidationError,
)
from .fmstore import (
    FeatureMapStore,
    Manifest,
    SegmentationStore,
    read_segmentation,
    read_store,
    write_segmentation,
    write_store,
)
from .foldsem import FoldParams, FoldResult, fold_learn, fold_learn_class, heuristic_score
from .grouping import (
    KernelGrouping,
    NormTable,
    build_groups,
    cosine_similarity,
    feature_norm,
    kernel_similarity,
    norm_table,
    top_activating_images,
)
from .labeling import (
    ConceptScoreTable,
    LabelAssigner,
    assign_label,
    build_assignment,
    group_concept_scores,
    iou_c,
    mask_support,
    relabel_program,
    resize_activation,
)
from .lp import JustificationTree, Literal, Program, Rule, classify, justify, parse, serialize
from .metrics import EvalReport, accuracy, evaluate, fidelity, ruleset_stats
from .pipeline import PipelineConfig, cmd_group, cmd_infer, cmd_justify, cmd_label, cmd_learn, cmd_pipeline

__version__ = "0.1.0"
