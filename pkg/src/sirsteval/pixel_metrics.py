"""Pixel-level metrics: IoU/nIoU, the pixel PR curve, HSE-P, and ROC-AUC.

All threshold-sweep metrics are computed from a fixed-bin score histogram so
that corpora of any size stream in constant memory, parallel accumulation is
an integer reduction, and 8/16-bit quantized inputs are handled exactly
(integer arithmetic everywhere except the final divisions).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError
from .mask_ops import ProbMap, as_prob_values

DEFAULT_BINS = 65536

# Tolerance for deciding that value * (bins - 1) is an exact bin index.
# 8- and 16-bit sources land within ~1e-11 of an integer at 65536 bins.
_EXACT_BIN_TOL = 1e-9


@dataclass
class ScoreHistogram:
    """Joint histogram of (confidence bin, ground-truth label) pixel counts.

    Bin b represents the confidence value ``b / (bins - 1)``. Merging two
    histograms is plain integer addition, hence associative and commutative;
    per-worker private histograms can be combined in any order.
    """

    bins: int = DEFAULT_BINS
    pos_counts: np.ndarray = field(default=None)  # type: ignore[assignment]
    neg_counts: np.ndarray = field(default=None)  # type: ignore[assignment]
    lossy_quantization: bool = False

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise ValueError(f"need at least 2 bins, got {self.bins}")
        if self.pos_counts is None:
            self.pos_counts = np.zeros(self.bins, dtype=np.int64)
        if self.neg_counts is None:
            self.neg_counts = np.zeros(self.bins, dtype=np.int64)
        for counts in (self.pos_counts, self.neg_counts):
            if counts.shape != (self.bins,):
                raise ValueError("count arrays must have one entry per bin")

    @property
    def total_pixels(self) -> int:
        return int(self.pos_counts.sum() + self.neg_counts.sum())

    def bin_value(self, index) -> np.ndarray:
        """Confidence value represented by a bin index."""
        return np.asarray(index, dtype=np.float64) / (self.bins - 1)

    def merge(self, other: "ScoreHistogram") -> "ScoreHistogram":
        if other.bins != self.bins:
            raise ValueError(f"bin count mismatch: {self.bins} vs {other.bins}")
        return ScoreHistogram(
            bins=self.bins,
            pos_counts=self.pos_counts + other.pos_counts,
            neg_counts=self.neg_counts + other.neg_counts,
            lossy_quantization=self.lossy_quantization or other.lossy_quantization,
        )


def quantize_to_bins(values: np.ndarray, bins: int) -> tuple[np.ndarray, bool]:
    """Map confidences in [0, 1] to bin indices; flag inexact mappings.

    Exact whenever ``v * (bins - 1)`` is an integer, which holds for all
    8/16-bit sources at the default 65536 bins (255 and 65535 divide 65535).
    """
    scaled = np.asarray(values, dtype=np.float64) * (bins - 1)
    idx = np.rint(scaled)
    lossy = bool(np.any(np.abs(scaled - idx) > _EXACT_BIN_TOL))
    return idx.astype(np.int64), lossy


def accumulate(p: "ProbMap | np.ndarray", gt: np.ndarray, hist: ScoreHistogram) -> ScoreHistogram:
    """Add one (prediction, ground truth) pair's pixels into ``hist``.

    Counts are added in place and ``hist`` is returned. Accumulation order
    never affects the result.
    """
    values = as_prob_values(p)
    gt = np.asarray(gt, dtype=bool)
    if values.shape != gt.shape:
        raise ValueError(f"prediction shape {values.shape} != ground truth shape {gt.shape}")
    idx, lossy = quantize_to_bins(values, hist.bins)
    flat_idx = idx.ravel()
    flat_gt = gt.ravel()
    hist.pos_counts += np.bincount(flat_idx[flat_gt], minlength=hist.bins)
    hist.neg_counts += np.bincount(flat_idx[~flat_gt], minlength=hist.bins)
    if lossy:
        hist.lossy_quantization = True
    return hist


@dataclass(frozen=True)
class PRCurve:
    """Pixel precision-recall curve sampled at every achievable operating point.

    Point k holds the confusion of the mask ``value > thresholds[k]``; under
    strict-inequality binarization that mask equals "value >= level" for the
    next occupied confidence level above the threshold. Thresholds increase
    strictly and recall is non-increasing along the curve.
    """

    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray

    def __post_init__(self) -> None:
        n = self.thresholds.shape[0]
        if self.precisions.shape[0] != n or self.recalls.shape[0] != n:
            raise ValueError("curve columns must have equal length")
        if n > 1:
            if not np.all(np.diff(self.thresholds) > 0):
                raise ValueError("thresholds must increase strictly")
            if np.any(np.diff(self.recalls) > 0):
                raise ValueError("recall must be non-increasing in threshold")

    def __len__(self) -> int:
        return int(self.thresholds.shape[0])


def pixel_pr_curve(hist: ScoreHistogram) -> PRCurve:
    """Precision-recall points of a score histogram under strict thresholds.

    One point is emitted per occupied confidence level above zero; its
    recorded threshold is the previous occupied level (or 0.0), so feeding
    the threshold back through strict binarization reproduces the point's
    confusion counts exactly. Pixels at confidence exactly 0 can never be
    predicted positive and therefore generate no point.
    """
    total_pos = int(hist.pos_counts.sum())
    if total_pos == 0:
        raise UndefinedMetricError("recall is undefined: histogram holds no positive pixels")

    occupied = np.flatnonzero((hist.pos_counts > 0) | (hist.neg_counts > 0))
    # Suffix sums over occupied levels, then drop the level-0 point.
    tp = np.cumsum(hist.pos_counts[occupied][::-1])[::-1]
    pp = np.cumsum((hist.pos_counts + hist.neg_counts)[occupied][::-1])[::-1]

    prev_level = np.concatenate(([0], occupied[:-1]))
    keep = occupied > 0
    if not np.any(keep):
        # Every pixel sits at confidence 0; no threshold can include any.
        return PRCurve(
            thresholds=np.empty(0, dtype=np.float64),
            precisions=np.empty(0, dtype=np.float64),
            recalls=np.empty(0, dtype=np.float64),
        )

    tp = tp[keep]
    pp = pp[keep]
    thresholds = hist.bin_value(prev_level[keep])
    precisions = tp / pp
    recalls = tp / total_pos
    return PRCurve(thresholds=thresholds, precisions=precisions, recalls=recalls)


def hse_p(curve: PRCurve) -> float:
    """Area under precision-as-a-function-of-recall by the step rule.

    With points ordered by increasing threshold (recall non-increasing),
    the area is sum(P_k * (R_k - R_next_k)) where the recall after the
    last point closes to 0. An empty curve (nothing ever predicted
    positive) integrates to 0.
    """
    if len(curve) == 0:
        return 0.0
    recall_next = np.concatenate((curve.recalls[1:], [0.0]))
    return float(np.sum(curve.precisions * (curve.recalls - recall_next)))


def hse_p_from_histogram(hist: ScoreHistogram) -> float:
    return hse_p(pixel_pr_curve(hist))


def roc_auc(hist: ScoreHistogram) -> float:
    """Area under the ROC curve with ties counted half.

    Computed as the Mann-Whitney statistic over the histogram, which equals
    the trapezoidal area under TPR vs FPR across all occupied levels. The
    numerator stays in exact integer arithmetic.
    """
    total_pos = int(hist.pos_counts.sum())
    total_neg = int(hist.neg_counts.sum())
    if total_pos == 0 or total_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs at least one positive and one negative pixel")
    neg_below = np.cumsum(hist.neg_counts) - hist.neg_counts
    # 2 * sum(pos_b * (neg_below_b + neg_b / 2)), kept integral.
    twice_num = int(np.sum(hist.pos_counts * (2 * neg_below + hist.neg_counts)))
    return twice_num / (2.0 * total_pos * total_neg)


def roc_points(hist: ScoreHistogram) -> np.ndarray:
    """(threshold, fpr, tpr) rows at each occupied level, for curve dumps."""
    total_pos = int(hist.pos_counts.sum())
    total_neg = int(hist.neg_counts.sum())
    if total_pos == 0 or total_neg == 0:
        raise UndefinedMetricError("ROC points need at least one positive and one negative pixel")
    occupied = np.flatnonzero((hist.pos_counts > 0) | (hist.neg_counts > 0))
    tp = np.cumsum(hist.pos_counts[occupied][::-1])[::-1]
    fp = np.cumsum(hist.neg_counts[occupied][::-1])[::-1]
    prev_level = np.concatenate(([0], occupied[:-1]))
    keep = occupied > 0
    thresholds = hist.bin_value(prev_level[keep])
    return np.stack([thresholds, fp[keep] / total_neg, tp[keep] / total_pos], axis=1)


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two masks; 1.0 when both are empty."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    intersection = int(np.logical_and(pred, gt).sum())
    return intersection / union


def niou(pairs) -> float:
    """Mean of per-image IoU over a corpus of (prediction, gt) mask pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("nIoU over an empty corpus is undefined")
    return float(np.mean([iou(pred, gt) for pred, gt in pairs]))
