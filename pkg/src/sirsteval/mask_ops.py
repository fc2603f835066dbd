"""Probability maps, binary masks, and deterministic connected components.

The canonical in-memory forms are plain numpy arrays: probability maps are
``(H, W)`` float64 grids in [0, 1] (wrapped in :class:`ProbMap` to carry the
source quantization), masks are ``(H, W)`` bool arrays, and label maps are
``(H, W)`` int32 arrays where 0 is background and components are numbered
1..K in raster-scan first-encounter order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

FOUR_CONNECTED = 4
EIGHT_CONNECTED = 8

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


def connectivity_structure(connectivity: int) -> np.ndarray:
    """3x3 neighbor structure for a 4- or 8-connected pixel grid."""
    if connectivity == FOUR_CONNECTED:
        return _STRUCTURE_4
    if connectivity == EIGHT_CONNECTED:
        return _STRUCTURE_8
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity!r}")


@dataclass(frozen=True)
class ProbMap:
    """A single-channel map of detection confidences in [0, 1].

    ``bit_depth`` records the source quantization (8 or 16) when the values
    came from a quantized export (``level / (2**depth - 1)``), or ``None``
    for continuous-valued maps. Downstream histogramming uses it to decide
    whether binning is exact.
    """

    values: np.ndarray
    bit_depth: int | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"probability map must be 2-D and non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("probability map contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("probability map values must lie in [0, 1]")
        if self.bit_depth not in (None, 8, 16):
            raise ValueError(f"bit_depth must be 8, 16 or None, got {self.bit_depth!r}")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_levels(cls, levels: np.ndarray, bit_depth: int) -> "ProbMap":
        """Build from integer quantization levels (``level / max_level``)."""
        if bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth!r}")
        max_level = (1 << bit_depth) - 1
        levels = np.asarray(levels)
        if levels.min() < 0 or levels.max() > max_level:
            raise ValueError(f"levels out of range for {bit_depth}-bit input")
        return cls(levels.astype(np.float64) / max_level, bit_depth=bit_depth)


@dataclass(frozen=True)
class TargetSet:
    """Per-component centroids and areas extracted from a label map.

    Component ``ids[i]`` is the label value; ``centroids[i]`` is the
    (row, col) arithmetic mean of the component's pixel coordinates and
    ``areas[i]`` its pixel count. Records are ordered by label id.
    """

    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int32))
    centroids: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.float64))
    areas: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.ids.shape[0])


def as_prob_values(p: "ProbMap | np.ndarray") -> np.ndarray:
    """Return the (H, W) float64 value grid of a map or array."""
    if isinstance(p, ProbMap):
        return p.values
    return np.asarray(p, dtype=np.float64)


def binarize(p: "ProbMap | np.ndarray", threshold: float) -> np.ndarray:
    """Threshold a probability map with strict inequality (value > t)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold!r}")
    return as_prob_values(p) > threshold


def centroid(pixels) -> tuple[float, float]:
    """Arithmetic mean (row, col) of a non-empty set of pixel coordinates."""
    coords = np.asarray(list(pixels) if not isinstance(pixels, np.ndarray) else pixels, dtype=np.float64)
    if coords.size == 0:
        raise ValueError("centroid of an empty pixel set is undefined")
    coords = coords.reshape(-1, 2)
    return float(coords[:, 0].mean()), float(coords[:, 1].mean())


def _raw_components(mask: np.ndarray, connectivity: int):
    """scipy labeling plus the raster-first-encounter reordering permutation.

    Returns (raw label map, count, order, raw-label areas and centroid sums),
    where ``order[k]`` is the raw label (minus one) of the k-th component in
    first-encounter order.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    raw, count = ndimage.label(mask, structure=connectivity_structure(connectivity))
    if count == 0:
        return raw, 0, None, None, None, None

    flat = raw.ravel()
    nonzero = np.flatnonzero(flat)
    labels_nz = flat[nonzero]

    # First raster index of each raw label: reversed assignment keeps the
    # smallest index because later (earlier-in-raster) writes win.
    first_index = np.zeros(count + 1, dtype=np.int64)
    first_index[labels_nz[::-1]] = nonzero[::-1]
    order = np.argsort(first_index[1:], kind="stable")

    width = mask.shape[1]
    rows = (nonzero // width).astype(np.float64)
    cols = (nonzero % width).astype(np.float64)
    areas_raw = np.bincount(labels_nz, minlength=count + 1)[1:].astype(np.int64)
    row_sums_raw = np.bincount(labels_nz, weights=rows, minlength=count + 1)[1:]
    col_sums_raw = np.bincount(labels_nz, weights=cols, minlength=count + 1)[1:]
    return raw, count, order, areas_raw, row_sums_raw, col_sums_raw


def _targets_from_raw(count, order, areas_raw, row_sums_raw, col_sums_raw) -> TargetSet:
    areas = areas_raw[order]
    centroids = np.empty((count, 2), dtype=np.float64)
    centroids[:, 0] = row_sums_raw[order] / areas
    centroids[:, 1] = col_sums_raw[order] / areas
    return TargetSet(
        ids=np.arange(1, count + 1, dtype=np.int32),
        centroids=centroids,
        areas=areas,
    )


def extract_targets(mask: np.ndarray, connectivity: int = EIGHT_CONNECTED) -> TargetSet:
    """Component centroids and areas in raster first-encounter order.

    Identical to :func:`label_components` without materializing the
    renumbered label map; preferred in per-threshold sweeps.
    """
    _, count, order, areas_raw, row_sums_raw, col_sums_raw = _raw_components(mask, connectivity)
    if count == 0:
        return TargetSet()
    return _targets_from_raw(count, order, areas_raw, row_sums_raw, col_sums_raw)


def label_components(mask: np.ndarray, connectivity: int = EIGHT_CONNECTED) -> tuple[np.ndarray, TargetSet]:
    """Label connected foreground components and extract their targets.

    Labels are renumbered so that component k is the k-th component whose
    first pixel appears in raster-scan order, which makes reports and the
    greedy matcher byte-stable across runs.
    """
    raw, count, order, areas_raw, row_sums_raw, col_sums_raw = _raw_components(mask, connectivity)
    if count == 0:
        return np.zeros(raw.shape, dtype=np.int32), TargetSet()
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    labels = remap[raw]
    return labels, _targets_from_raw(count, order, areas_raw, row_sums_raw, col_sums_raw)
