"""Seeded synthetic scene generator for disk targets on noisy backgrounds.

Every output is a pure function of (spec, seed): placement uses integer
arithmetic and all randomness comes from the counter-based Philox generator,
so corpora are bit-identical across runs and platforms. Generated maps are
quantized to the 8-bit grid, which keeps downstream histogram metrics exact.

Ground-truth targets are hard disks; probability maps may taper or degrade,
ground truth never does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PlacementError
from .mask_ops import ProbMap, label_components

# Minimum clearance so separately placed blobs never touch, even diagonally.
_PLACEMENT_GAP = 2
# Keep-out distance between injected false alarms and true target pixels;
# generous enough that matching at the usual tolerances cannot pair them.
_FALSE_ALARM_CLEARANCE = 8.0
_MAX_TRIES_PER_BLOB = 500

ATTENUATION_FACTOR = 0.4  # confidence multiplier for eroded boundary pixels


@dataclass(frozen=True)
class SceneSpec:
    """Geometry of one synthetic scene."""

    height: int
    width: int
    n_targets: int
    radius_range: tuple[int, int] = (2, 4)
    background_noise_level: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("scene extents must be positive")
        if self.n_targets < 0:
            raise ValueError("n_targets must be non-negative")
        rmin, rmax = self.radius_range
        if rmin < 1 or rmax < rmin:
            raise ValueError(f"invalid radius range {self.radius_range!r}")
        if not 0.0 <= self.background_noise_level <= 1.0:
            raise ValueError("background_noise_level must lie in [0, 1]")


@dataclass(frozen=True)
class ErrorModeSpec:
    """Controlled degradations applied to an ideal probability map."""

    miss_fraction: float = 0.0
    false_alarm_count: int = 0
    false_alarm_confidence: float = 0.6
    erosion_pixels: int = 0
    confidence_jitter: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.miss_fraction <= 1.0:
            raise ValueError("miss_fraction must lie in [0, 1]")
        if self.false_alarm_count < 0:
            raise ValueError("false_alarm_count must be non-negative")
        if not 0.0 <= self.false_alarm_confidence <= 1.0:
            raise ValueError("false_alarm_confidence must lie in [0, 1]")
        if self.erosion_pixels < 0:
            raise ValueError("erosion_pixels must be non-negative")
        if self.confidence_jitter < 0:
            raise ValueError("confidence_jitter must be non-negative")


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def quantize8(values: np.ndarray) -> np.ndarray:
    """Snap confidences to the 8-bit grid (round-half-to-even, like rint)."""
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0) / 255.0


def _disk_pixels(height: int, width: int, row: int, col: int, radius: int) -> tuple[np.ndarray, np.ndarray]:
    rr, cc = np.ogrid[:height, :width]
    inside = (rr - row) ** 2 + (cc - col) ** 2 <= radius * radius
    return np.nonzero(inside)


def _place_disks(
    rng: np.random.Generator,
    height: int,
    width: int,
    count: int,
    radius_range: tuple[int, int],
    keep_out: list[tuple[int, int, int]] | None = None,
    what: str = "target",
) -> list[tuple[int, int, int]]:
    """Sample non-overlapping (row, col, radius) disk placements.

    ``keep_out`` lists already-placed disks that the new ones must clear by
    the false-alarm clearance instead of the plain gap.
    """
    placed: list[tuple[int, int, int]] = []
    rmin, rmax = radius_range
    for _ in range(count):
        for _ in range(_MAX_TRIES_PER_BLOB):
            radius = int(rng.integers(rmin, rmax + 1))
            if height - 2 * radius <= 0 or width - 2 * radius <= 0:
                continue
            row = int(rng.integers(radius, height - radius))
            col = int(rng.integers(radius, width - radius))
            ok = all(
                (row - r0) ** 2 + (col - c0) ** 2 >= (radius + rad0 + _PLACEMENT_GAP) ** 2
                for r0, c0, rad0 in placed
            )
            if ok and keep_out:
                ok = all(
                    (row - r0) ** 2 + (col - c0) ** 2
                    >= (radius + rad0 + _FALSE_ALARM_CLEARANCE) ** 2
                    for r0, c0, rad0 in keep_out
                )
            if ok:
                placed.append((row, col, radius))
                break
        else:
            raise PlacementError(
                f"could not place {what} blob {len(placed) + 1}/{count} "
                f"in a {height}x{width} scene"
            )
    return placed


def gen_scene(spec: SceneSpec) -> tuple[np.ndarray, ProbMap]:
    """Generate (ground-truth mask, ideal probability map) for one scene.

    Targets are disjoint hard disks at confidence 1.0; the background is
    Gaussian noise clipped to [0, background_noise_level], quantized to the
    8-bit grid.
    """
    rng = _rng(spec.seed)
    disks = _place_disks(rng, spec.height, spec.width, spec.n_targets, spec.radius_range)
    gt = np.zeros((spec.height, spec.width), dtype=bool)
    for row, col, radius in disks:
        gt[_disk_pixels(spec.height, spec.width, row, col, radius)] = True

    sigma = spec.background_noise_level
    if sigma > 0:
        noise = np.clip(rng.normal(0.0, sigma, size=gt.shape), 0.0, sigma)
    else:
        noise = np.zeros(gt.shape)
    values = np.where(gt, 1.0, quantize8(noise))
    return gt, ProbMap(values, bit_depth=8)


def perturb(ideal: ProbMap, gt: np.ndarray, errors: ErrorModeSpec, seed: int) -> ProbMap:
    """Apply the degradation pipeline: misses, false alarms, erosion, jitter.

    Steps run in that fixed order, each drawing from one seeded stream, and
    the result is re-quantized to the 8-bit grid.
    """
    gt = np.asarray(gt, dtype=bool)
    values = ideal.values.copy()
    if values.shape != gt.shape:
        raise ValueError(f"map shape {values.shape} != ground truth shape {gt.shape}")
    rng = _rng(seed)

    labels, targets = label_components(gt, connectivity=8)
    n_missed = int(round(errors.miss_fraction * len(targets)))
    if n_missed > 0:
        dropped = rng.choice(targets.ids, size=n_missed, replace=False)
        values[np.isin(labels, dropped)] = 0.0

    if errors.false_alarm_count > 0:
        keep_out = [
            (int(round(r)), int(round(c)), int(np.ceil(np.sqrt(a / np.pi))))
            for (r, c), a in zip(targets.centroids, targets.areas)
        ]
        disks = _place_disks(
            rng,
            gt.shape[0],
            gt.shape[1],
            errors.false_alarm_count,
            (1, 1),
            keep_out=keep_out,
            what="false alarm",
        )
        for row, col, radius in disks:
            pix = _disk_pixels(gt.shape[0], gt.shape[1], row, col, radius)
            values[pix] = np.maximum(values[pix], errors.false_alarm_confidence)

    if errors.erosion_pixels > 0:
        inner = ndimage.binary_erosion(
            gt, structure=np.ones((3, 3), dtype=bool), iterations=errors.erosion_pixels
        )
        boundary = gt & ~inner
        values[boundary] *= ATTENUATION_FACTOR

    if errors.confidence_jitter > 0:
        values = values + rng.normal(0.0, errors.confidence_jitter, size=values.shape)

    return ProbMap(quantize8(values), bit_depth=8)


# ---------------------------------------------------------------------------
# Class-imbalance demonstration: two corpora over the same ground truth whose
# ROC-AUC ordering contradicts their pixel-PR ordering. The "flood" corpus
# buries the scene in false-positive blobs yet keeps a near-perfect AUC
# because negatives vastly outnumber positives; the "clean" corpus has a
# fraction of completely missed target pixels, which AUC punishes harder
# than the flood of false alarms.
# ---------------------------------------------------------------------------

DEMO_SCENES = 16
DEMO_HEIGHT = 96
DEMO_WIDTH = 96
DEMO_TARGETS_PER_SCENE = 3
DEMO_TARGET_RADIUS = (2, 3)
DEMO_NOISE_SIGMA = 0.012  # raw sigma of |N(0, s)| background noise
DEMO_NOISE_CLIP = 0.03

FLOOD_CORE_CONF = 235 / 255  # bright target interior
FLOOD_RIM_CONF = 140 / 255  # dimmer one-pixel target rim
FLOOD_FALSE_ALARMS = 36  # radius-1 blobs per scene
CLEAN_CORE_CONF = 217 / 255
CLEAN_RIM_CONF = 115 / 255
CLEAN_FALSE_ALARMS = 3
FALSE_ALARM_CONF = 191 / 255  # moderate confidence, between the rim levels
CLEAN_DROP_FRACTION = 0.025  # target pixels zeroed out in the clean corpus


def _demo_background(rng: np.random.Generator, shape) -> np.ndarray:
    return quantize8(np.clip(np.abs(rng.normal(0.0, DEMO_NOISE_SIGMA, size=shape)), 0.0, DEMO_NOISE_CLIP))


def build_roc_demo(seed: int = 2024) -> tuple[list[tuple[ProbMap, np.ndarray]], list[tuple[ProbMap, np.ndarray]]]:
    """Build the (flooded, clean) corpora; both share identical ground truth.

    Construction parameters are fixed module constants; the shipped check
    asserts the ordering properties, not any particular score value.
    """
    root = np.random.SeedSequence(seed)
    flooded: list[tuple[ProbMap, np.ndarray]] = []
    clean: list[tuple[ProbMap, np.ndarray]] = []
    for child in root.spawn(DEMO_SCENES):
        rng = np.random.Generator(np.random.Philox(child))
        target_disks = _place_disks(
            rng, DEMO_HEIGHT, DEMO_WIDTH, DEMO_TARGETS_PER_SCENE, DEMO_TARGET_RADIUS
        )
        gt = np.zeros((DEMO_HEIGHT, DEMO_WIDTH), dtype=bool)
        for row, col, radius in target_disks:
            gt[_disk_pixels(DEMO_HEIGHT, DEMO_WIDTH, row, col, radius)] = True
        core = ndimage.binary_erosion(gt, structure=np.ones((3, 3), dtype=bool))
        rim = gt & ~core

        fa_flood = _place_disks(
            rng, DEMO_HEIGHT, DEMO_WIDTH, FLOOD_FALSE_ALARMS, (1, 1),
            keep_out=target_disks, what="false alarm",
        )
        fa_clean = fa_flood[:CLEAN_FALSE_ALARMS]

        flood_vals = _demo_background(rng, gt.shape)
        flood_vals[core] = FLOOD_CORE_CONF
        flood_vals[rim] = FLOOD_RIM_CONF
        for row, col, radius in fa_flood:
            pix = _disk_pixels(DEMO_HEIGHT, DEMO_WIDTH, row, col, radius)
            flood_vals[pix] = FALSE_ALARM_CONF

        clean_vals = _demo_background(rng, gt.shape)
        clean_vals[core] = CLEAN_CORE_CONF
        clean_vals[rim] = CLEAN_RIM_CONF
        for row, col, radius in fa_clean:
            pix = _disk_pixels(DEMO_HEIGHT, DEMO_WIDTH, row, col, radius)
            clean_vals[pix] = FALSE_ALARM_CONF
        # A small fraction of target pixels is missed outright.
        target_idx = np.flatnonzero(gt.ravel())
        n_drop = int(round(CLEAN_DROP_FRACTION * target_idx.size))
        if n_drop:
            dropped = rng.choice(target_idx, size=n_drop, replace=False)
            clean_flat = clean_vals.ravel()
            clean_flat[dropped] = 0.0
            clean_vals = clean_flat.reshape(clean_vals.shape)

        flooded.append((ProbMap(flood_vals, bit_depth=8), gt))
        clean.append((ProbMap(clean_vals, bit_depth=8), gt))
    return flooded, clean
