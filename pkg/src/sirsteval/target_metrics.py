"""Target-level metrics: centroid matching, Pd/Fa, the threshold sweep, and HSE.

A predicted component counts as a detection when its centroid lies within
``tau`` pixels (Euclidean) of an unmatched ground-truth centroid; matching is
greedy and one-to-one, scanning both sides in label order so results are
deterministic. Counts are pooled over the corpus before any division.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError
from .mask_ops import ProbMap, TargetSet, binarize, label_components

DEFAULT_TAU = 3.0
FA_VALIDITY_LIMIT = 1e-4


def uniform_thresholds(count: int = 19) -> tuple[float, ...]:
    """``count`` evenly spaced interior thresholds, e.g. 19 -> 0.05..0.95."""
    if count < 1:
        raise ValueError(f"threshold count must be >= 1, got {count}")
    return tuple(j / (count + 1) for j in range(1, count + 1))


def validate_thresholds(values) -> tuple[float, ...]:
    """Check a threshold set: strictly increasing, inside the open (0, 1)."""
    out = tuple(float(v) for v in values)
    if not out:
        raise ValueError("threshold set must not be empty")
    if any(not 0.0 < v < 1.0 for v in out):
        raise ValueError("thresholds must lie strictly inside (0, 1)")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError("thresholds must be strictly increasing")
    return out


@dataclass(frozen=True)
class MatchResult:
    """One-to-one centroid matches between predicted and true targets."""

    matches: tuple[tuple[int, int, float], ...]  # (gt_id, pred_id, distance)
    n_match: int
    n_pred: int
    n_gt: int


@dataclass(frozen=True)
class TargetPRPoint:
    threshold: float
    precision: float
    recall: float
    n_match: int
    n_pred: int
    n_gt: int


@dataclass(frozen=True)
class PdFaResult:
    pd: float
    fa: float
    fa_valid: bool  # False once Fa exceeds the 1e-4 validity limit
    n_match: int
    n_gt: int
    fp_pixels: int
    total_pixels: int


def match_targets(pred: TargetSet, gt: TargetSet, tau: float) -> MatchResult:
    """Greedily pair ground-truth and predicted centroids within ``tau``.

    Ground-truth targets are visited in label order; each claims the first
    still-unmatched predicted target (again in label order) whose centroid
    distance is <= tau. Every id appears in at most one match.
    """
    if tau <= 0:
        raise ValueError(f"matching tolerance tau must be positive, got {tau!r}")
    n_pred = len(pred)
    n_gt = len(gt)
    matches: list[tuple[int, int, float]] = []
    if n_pred and n_gt:
        claimed = np.zeros(n_pred, dtype=bool)
        deltas = gt.centroids[:, None, :] - pred.centroids[None, :, :]
        distances = np.sqrt(np.sum(deltas * deltas, axis=2))
        for i in range(n_gt):
            candidates = (distances[i] <= tau) & ~claimed
            if candidates.any():
                j = int(np.argmax(candidates))
                claimed[j] = True
                matches.append((int(gt.ids[i]), int(pred.ids[j]), float(distances[i, j])))
    return MatchResult(matches=tuple(matches), n_match=len(matches), n_pred=n_pred, n_gt=n_gt)


def count_matches_for_masks(
    pred_mask: np.ndarray, gt_mask: np.ndarray, tau: float, connectivity: int
) -> tuple[int, int, int]:
    """(n_match, n_pred, n_gt) for one binary prediction/ground-truth pair."""
    _, pred_targets = label_components(pred_mask, connectivity)
    _, gt_targets = label_components(gt_mask, connectivity)
    result = match_targets(pred_targets, gt_targets, tau)
    return result.n_match, result.n_pred, result.n_gt


def pd_fa(
    corpus,
    tau: float = DEFAULT_TAU,
    connectivity: int = 8,
) -> PdFaResult:
    """Probability of detection and false-alarm rate at a fixed threshold.

    ``corpus`` is an iterable of (prediction mask, ground-truth mask) pairs
    already binarized at the operating threshold. Pd pools matched and true
    target counts over the corpus; Fa counts predicted-positive pixels that
    do not lie on any ground-truth-positive pixel, per total pixel.
    """
    n_match = 0
    n_gt = 0
    fp_pixels = 0
    total_pixels = 0
    n_pairs = 0
    for pred_mask, gt_mask in corpus:
        pred_mask = np.asarray(pred_mask, dtype=bool)
        gt_mask = np.asarray(gt_mask, dtype=bool)
        if pred_mask.shape != gt_mask.shape:
            raise ValueError(f"mask shapes differ: {pred_mask.shape} vs {gt_mask.shape}")
        m, _, g = count_matches_for_masks(pred_mask, gt_mask, tau, connectivity)
        n_match += m
        n_gt += g
        fp_pixels += int(np.logical_and(pred_mask, ~gt_mask).sum())
        total_pixels += pred_mask.size
        n_pairs += 1
    if n_pairs == 0:
        raise ValueError("Pd/Fa over an empty corpus is undefined")
    if n_gt == 0:
        raise UndefinedMetricError("Pd is undefined: corpus holds no ground-truth targets")
    fa = fp_pixels / total_pixels
    return PdFaResult(
        pd=n_match / n_gt,
        fa=fa,
        fa_valid=fa <= FA_VALIDITY_LIMIT,
        n_match=n_match,
        n_gt=n_gt,
        fp_pixels=fp_pixels,
        total_pixels=total_pixels,
    )


def target_pr_at_threshold(
    corpus,
    threshold: float,
    tau: float = DEFAULT_TAU,
    connectivity: int = 8,
) -> TargetPRPoint:
    """Pooled target precision/recall after binarizing the corpus at one t.

    Precision is defined as 0 when nothing is predicted (division-by-zero
    guard); recall is undefined when the corpus has no true target.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold!r}")
    n_match = 0
    n_pred = 0
    n_gt = 0
    for prob, gt_mask in corpus:
        m, p, g = count_matches_for_masks(binarize(prob, threshold), gt_mask, tau, connectivity)
        n_match += m
        n_pred += p
        n_gt += g
    if n_gt == 0:
        raise UndefinedMetricError("target recall is undefined: corpus holds no ground-truth targets")
    precision = 0.0 if n_pred == 0 else n_match / n_pred
    return TargetPRPoint(
        threshold=threshold,
        precision=precision,
        recall=n_match / n_gt,
        n_match=n_match,
        n_pred=n_pred,
        n_gt=n_gt,
    )


def target_pr_sweep(
    corpus,
    thresholds,
    tau: float = DEFAULT_TAU,
    connectivity: int = 8,
) -> list[TargetPRPoint]:
    """Target PR points at every threshold of an ascending threshold set."""
    thresholds = validate_thresholds(thresholds)
    corpus = list(corpus)
    return [target_pr_at_threshold(corpus, t, tau, connectivity) for t in thresholds]


def hse_t_from_points(points) -> tuple[float, bool]:
    """Discrete integral of target PR pairs over ascending thresholds.

    Returns ``(score, had_negative_increment)``. The recall after the last
    threshold closes to 0, so an everywhere-perfect detector integrates to
    exactly 1. Recall increments are used as-is; they can go negative in
    pathological corpora (components that split as the threshold rises),
    which is reported via the flag rather than clamped away.
    """
    points = list(points)
    if not points:
        raise ValueError("cannot integrate an empty threshold sweep")
    recalls = np.array([pt.recall for pt in points], dtype=np.float64)
    precisions = np.array([pt.precision for pt in points], dtype=np.float64)
    recall_next = np.concatenate((recalls[1:], [0.0]))
    increments = recalls - recall_next
    score = float(np.sum(precisions * increments))
    return score, bool(np.any(increments < 0))


def hse_t(
    corpus,
    thresholds,
    tau: float = DEFAULT_TAU,
    connectivity: int = 8,
) -> float:
    """Target-level robustness score over a multi-threshold sweep."""
    score, _ = hse_t_from_points(target_pr_sweep(corpus, thresholds, tau, connectivity))
    return score


def hse(hse_p_score: float, hse_t_score: float) -> float:
    """Fuse the pixel-level and target-level scores by their product."""
    for name, value in (("hse_p", hse_p_score), ("hse_t", hse_t_score)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return hse_p_score * hse_t_score


def fuse_percent(hse_p_pct: float, hse_t_pct: float) -> float:
    """Product fusion on the 0-100 reporting scale: (P * T) / 100."""
    return hse_p_pct * hse_t_pct / 100.0
