"""Deterministic evaluation for single-frame infrared small target detection.

The package computes pixel-level metrics (IoU, nIoU, the pixel PR curve and
its integral HSE-P, ROC-AUC), target-level metrics (centroid-matched Pd/Fa,
the multi-threshold sweep and its integral HSE-T), and their product fusion
HSE, plus a small verified numeric kernel for the semantic-fusion and
gradient-sharing training contract, and a seeded synthetic corpus generator.
"""

from .engine import EvalConfig, evaluate, evaluate_manifest
from .errors import CorpusLoadError, PlacementError, UndefinedMetricError
from .manifest import CorpusItem, load_corpus, parse_manifest, write_manifest
from .mask_ops import ProbMap, TargetSet, binarize, centroid, label_components
from .pixel_metrics import (
    PRCurve,
    ScoreHistogram,
    accumulate,
    hse_p,
    iou,
    niou,
    pixel_pr_curve,
    roc_auc,
)
from .report import emit_report
from .synth import ErrorModeSpec, SceneSpec, build_roc_demo, gen_scene, perturb
from .target_metrics import (
    MatchResult,
    PdFaResult,
    TargetPRPoint,
    fuse_percent,
    hse,
    hse_t,
    match_targets,
    pd_fa,
    target_pr_at_threshold,
    uniform_thresholds,
)

__version__ = "0.1.0"

__all__ = [
    "EvalConfig",
    "evaluate",
    "evaluate_manifest",
    "CorpusLoadError",
    "PlacementError",
    "UndefinedMetricError",
    "CorpusItem",
    "load_corpus",
    "parse_manifest",
    "write_manifest",
    "ProbMap",
    "TargetSet",
    "binarize",
    "centroid",
    "label_components",
    "PRCurve",
    "ScoreHistogram",
    "accumulate",
    "hse_p",
    "iou",
    "niou",
    "pixel_pr_curve",
    "roc_auc",
    "emit_report",
    "ErrorModeSpec",
    "SceneSpec",
    "build_roc_demo",
    "gen_scene",
    "perturb",
    "MatchResult",
    "PdFaResult",
    "TargetPRPoint",
    "fuse_percent",
    "hse",
    "hse_t",
    "match_targets",
    "pd_fa",
    "target_pr_at_threshold",
    "uniform_thresholds",
    "__version__",
]
