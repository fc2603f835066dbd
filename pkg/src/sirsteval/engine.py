"""Corpus evaluation: parallel per-image statistics, deterministic reduce.

Workers only ever produce integer count vectors per image; the reduction
runs over images sorted by image_id after all results are collected, so the
final report bytes are independent of worker count, scheduling, and
manifest entry order.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .errors import UndefinedMetricError
from .manifest import CorpusItem, ManifestEntry, load_entry, parse_manifest
from .mask_ops import ProbMap, extract_targets
from .pixel_metrics import (
    DEFAULT_BINS,
    ScoreHistogram,
    hse_p,
    pixel_pr_curve,
    quantize_to_bins,
    roc_auc,
)
from .target_metrics import (
    DEFAULT_TAU,
    FA_VALIDITY_LIMIT,
    TargetPRPoint,
    hse_t_from_points,
    match_targets,
    uniform_thresholds,
    validate_thresholds,
)
from . import report as report_mod


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation parameters; execution knobs do not influence results."""

    thresholds: tuple[float, ...] = field(default_factory=uniform_thresholds)
    tau: float = DEFAULT_TAU
    connectivity: int = 8
    fixed_threshold: float = 0.5
    histogram_bins: int = DEFAULT_BINS
    workers: int = 1
    report_scale: str = "percent"

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", validate_thresholds(self.thresholds))
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity!r}")
        if not 0.0 <= self.fixed_threshold <= 1.0:
            raise ValueError("fixed_threshold must lie in [0, 1]")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be at least 2")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.report_scale not in ("unit", "percent"):
            raise ValueError(f"report_scale must be 'unit' or 'percent', got {self.report_scale!r}")


@dataclass
class ImageStats:
    """Per-image integer statistics; merging these is the whole reduction."""

    image_id: str
    hist_levels: np.ndarray
    hist_pos: np.ndarray
    hist_neg: np.ndarray
    lossy: bool
    n_gt: int
    thr_match: np.ndarray
    thr_pred: np.ndarray
    fixed_match: int
    fixed_pred: int
    fp_pixels: int
    total_pixels: int
    intersection: int
    union: int
    pred_digest: str
    gt_digest: str


def _array_digest(values: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(str(values.shape).encode())
    digest.update(np.ascontiguousarray(values).tobytes())
    return digest.hexdigest()


def compute_image_stats(
    image_id: str,
    prob: ProbMap,
    gt: np.ndarray,
    cfg: EvalConfig,
    pred_digest: str | None = None,
    gt_digest: str | None = None,
) -> ImageStats:
    values = prob.values
    gt = np.asarray(gt, dtype=bool)
    if values.shape != gt.shape:
        raise ValueError(
            f"{image_id}: prediction shape {values.shape} != ground truth shape {gt.shape}"
        )

    idx, lossy = quantize_to_bins(values, cfg.histogram_bins)
    flat_idx = idx.ravel()
    flat_gt = gt.ravel()
    pos_full = np.bincount(flat_idx[flat_gt], minlength=cfg.histogram_bins)
    neg_full = np.bincount(flat_idx[~flat_gt], minlength=cfg.histogram_bins)
    occupied = np.flatnonzero((pos_full > 0) | (neg_full > 0))

    gt_targets = extract_targets(gt, cfg.connectivity)

    # For losslessly quantized maps, two thresholds with no occupied
    # confidence level in between produce the same mask; reuse those counts
    # instead of relabeling. Key: index of the first occupied level above t.
    occupied_values = occupied / (cfg.histogram_bins - 1)
    count_cache: dict[int, tuple[int, int]] = {}

    def counts_at(threshold: float) -> tuple[int, int]:
        key = int(np.searchsorted(occupied_values, threshold, side="right")) if not lossy else -1
        if key >= 0 and key in count_cache:
            return count_cache[key]
        pred_targets = extract_targets(values > threshold, cfg.connectivity)
        result = match_targets(pred_targets, gt_targets, cfg.tau)
        counts = (result.n_match, result.n_pred)
        if key >= 0:
            count_cache[key] = counts
        return counts

    thr_match = np.empty(len(cfg.thresholds), dtype=np.int64)
    thr_pred = np.empty(len(cfg.thresholds), dtype=np.int64)
    for j, t in enumerate(cfg.thresholds):
        thr_match[j], thr_pred[j] = counts_at(t)

    fixed_mask = values > cfg.fixed_threshold
    fixed_match, fixed_pred = counts_at(cfg.fixed_threshold)

    return ImageStats(
        image_id=image_id,
        hist_levels=occupied,
        hist_pos=pos_full[occupied],
        hist_neg=neg_full[occupied],
        lossy=lossy,
        n_gt=len(gt_targets),
        thr_match=thr_match,
        thr_pred=thr_pred,
        fixed_match=fixed_match,
        fixed_pred=fixed_pred,
        fp_pixels=int(np.logical_and(fixed_mask, ~gt).sum()),
        total_pixels=int(gt.size),
        intersection=int(np.logical_and(fixed_mask, gt).sum()),
        union=int(np.logical_or(fixed_mask, gt).sum()),
        pred_digest=pred_digest if pred_digest is not None else _array_digest(values),
        gt_digest=gt_digest if gt_digest is not None else _array_digest(gt),
    )


def _stats_from_item(args: tuple[CorpusItem, EvalConfig]) -> ImageStats:
    item, cfg = args
    return compute_image_stats(item.image_id, item.prob, item.gt, cfg, item.pred_digest, item.gt_digest)


def _stats_from_entry(args: tuple[ManifestEntry, EvalConfig]) -> ImageStats:
    entry, cfg = args
    return _stats_from_item((load_entry(entry), cfg))


def _parallel_map(fn, args_list: list, workers: int) -> list:
    if workers <= 1 or len(args_list) <= 1:
        return [fn(args) for args in args_list]
    # One chunk per worker: per-image work is uniform enough that finer
    # chunks only add result-pipe churn.
    chunksize = -(-len(args_list) // workers)
    with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("fork")) as pool:
        return list(pool.map(fn, args_list, chunksize=chunksize))


def _normalize_corpus(corpus) -> list[CorpusItem]:
    items: list[CorpusItem] = []
    for index, element in enumerate(corpus):
        if isinstance(element, CorpusItem):
            items.append(element)
            continue
        prob, gt = element
        if not isinstance(prob, ProbMap):
            prob = ProbMap(np.asarray(prob, dtype=np.float64))
        gt = np.asarray(gt, dtype=bool)
        items.append(
            CorpusItem(
                image_id=f"img_{index:05d}",
                prob=prob,
                gt=gt,
                pred_digest=_array_digest(prob.values),
                gt_digest=_array_digest(gt),
            )
        )
    return items


def reduce_stats(stats: list[ImageStats], cfg: EvalConfig) -> dict:
    """Fold per-image statistics into the metric report dictionary."""
    if not stats:
        raise ValueError("cannot evaluate an empty corpus")
    stats = sorted(stats, key=lambda s: s.image_id)

    hist = ScoreHistogram(bins=cfg.histogram_bins)
    for s in stats:
        # Levels are unique within one image, so plain fancy-index add works.
        hist.pos_counts[s.hist_levels] += s.hist_pos
        hist.neg_counts[s.hist_levels] += s.hist_neg
        hist.lossy_quantization = hist.lossy_quantization or s.lossy

    n_gt_total = sum(s.n_gt for s in stats)
    thr_match = np.sum([s.thr_match for s in stats], axis=0)
    thr_pred = np.sum([s.thr_pred for s in stats], axis=0)
    fixed_match = sum(s.fixed_match for s in stats)
    fp_pixels = sum(s.fp_pixels for s in stats)
    total_pixels = sum(s.total_pixels for s in stats)
    intersection = sum(s.intersection for s in stats)
    union = sum(s.union for s in stats)

    warnings: list[str] = []
    undefined: list[str] = []
    if hist.lossy_quantization:
        warnings.append(
            "lossy-quantization: some confidences were not exactly representable "
            f"in {cfg.histogram_bins} bins"
        )

    per_image_iou = []
    for s in stats:
        if s.union == 0:
            per_image_iou.append(1.0)
            warnings.append(f"empty-vs-empty: image {s.image_id} has no predicted or true pixels")
        else:
            per_image_iou.append(s.intersection / s.union)
    niou_value = float(np.mean(per_image_iou))
    iou_value = 1.0 if union == 0 else intersection / union

    fa = fp_pixels / total_pixels
    metrics: dict[str, object] = {
        "iou": iou_value,
        "niou": niou_value,
        "fa": fa,
        "fa_valid": bool(fa <= FA_VALIDITY_LIMIT),
    }

    if n_gt_total == 0:
        undefined.extend(["pd", "hse_t", "hse"])
        metrics["pd"] = None
        points: list[TargetPRPoint] = []
        hse_t_value = None
    else:
        metrics["pd"] = fixed_match / n_gt_total
        points = [
            TargetPRPoint(
                threshold=t,
                precision=0.0 if thr_pred[j] == 0 else float(thr_match[j] / thr_pred[j]),
                recall=float(thr_match[j] / n_gt_total),
                n_match=int(thr_match[j]),
                n_pred=int(thr_pred[j]),
                n_gt=n_gt_total,
            )
            for j, t in enumerate(cfg.thresholds)
        ]
        hse_t_value, negative_increment = hse_t_from_points(points)
        if negative_increment:
            warnings.append(
                "non-monotone-recall: recall increased with threshold somewhere in the sweep "
                "(negative increments were integrated as-is)"
            )

    try:
        curve = pixel_pr_curve(hist)
        hse_p_value = hse_p(curve)
    except UndefinedMetricError:
        curve = None
        hse_p_value = None
        undefined.append("hse_p")
        if "hse" not in undefined:
            undefined.append("hse")
    metrics["hse_p"] = hse_p_value
    metrics["hse_t"] = hse_t_value
    metrics["hse"] = (
        hse_p_value * hse_t_value if hse_p_value is not None and hse_t_value is not None else None
    )

    try:
        metrics["roc_auc"] = roc_auc(hist)
    except UndefinedMetricError:
        metrics["roc_auc"] = None
        undefined.append("roc_auc")

    digests = {s.image_id: {"pred": s.pred_digest, "gt": s.gt_digest} for s in stats}
    return report_mod.build_report(
        cfg=cfg,
        metrics=metrics,
        target_points=points,
        pixel_curve=curve,
        warnings=warnings,
        undefined=undefined,
        digests=digests,
        counts={
            "n_images": len(stats),
            "n_gt_targets": n_gt_total,
            "fp_pixels": fp_pixels,
            "total_pixels": total_pixels,
        },
    )


def evaluate(corpus, cfg: EvalConfig | None = None) -> dict:
    """Evaluate an in-memory corpus of (ProbMap, gt mask) pairs or items."""
    cfg = cfg or EvalConfig()
    items = _normalize_corpus(corpus)
    stats = _parallel_map(_stats_from_item, [(item, cfg) for item in items], cfg.workers)
    return reduce_stats(stats, cfg)


def evaluate_manifest(manifest_path, cfg: EvalConfig | None = None) -> dict:
    """Evaluate a manifest; workers load their own images to keep IPC small."""
    cfg = cfg or EvalConfig()
    entries = parse_manifest(manifest_path)
    if not entries:
        raise ValueError(f"manifest {manifest_path} lists no corpus entries")
    stats = _parallel_map(_stats_from_entry, [(entry, cfg) for entry in entries], cfg.workers)
    report = reduce_stats(stats, cfg)
    report["inputs"]["manifest"] = str(manifest_path)
    return report
