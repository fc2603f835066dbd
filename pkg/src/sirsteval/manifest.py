"""Corpus manifests: line-delimited ``image_id <TAB> pred_path <TAB> gt_path``.

Paths are resolved relative to the manifest's directory. Lines starting with
'#' are comments; blank lines are skipped. Entries are sorted by image_id at
load time so downstream aggregation never depends on file order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorpusLoadError
from .mask_ops import ProbMap
from .pgm import read_gray_image

FORMAT_VERSION = "1"


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    pred_path: Path
    gt_path: Path


@dataclass(frozen=True)
class CorpusItem:
    """One loaded evaluation pair plus provenance digests."""

    image_id: str
    prob: ProbMap
    gt: np.ndarray
    pred_digest: str
    gt_digest: str


def parse_manifest(manifest_path) -> list[ManifestEntry]:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    errors: list[tuple[str, str]] = []
    for lineno, line in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            errors.append((f"line {lineno}", f"expected 3 tab-separated fields, got {len(parts)}"))
            continue
        image_id, pred, gt = (part.strip() for part in parts)
        if image_id in seen:
            errors.append((image_id, "duplicate image_id"))
            continue
        seen.add(image_id)
        entries.append(ManifestEntry(image_id, root / pred, root / gt))
    if errors:
        raise CorpusLoadError(errors)
    entries.sort(key=lambda e: e.image_id)
    return entries


def write_manifest(manifest_path, rows) -> None:
    """Write (image_id, pred_relpath, gt_relpath) rows."""
    manifest_path = Path(manifest_path)
    lines = [f"# sirsteval corpus manifest v{FORMAT_VERSION}"]
    lines += [f"{image_id}\t{pred}\t{gt}" for image_id, pred, gt in rows]
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_entry(entry: ManifestEntry) -> CorpusItem:
    """Load one prediction/ground-truth pair.

    Predictions are normalized to [0, 1] by their maxval (255 or 65535);
    any other maxval is rejected as an unsupported bit depth. Ground truth
    is binarized at level > 0.
    """
    for path in (entry.pred_path, entry.gt_path):
        if not path.is_file():
            raise FileNotFoundError(f"missing file: {path}")
    pred_levels, pred_maxval = read_gray_image(entry.pred_path)
    gt_levels, _ = read_gray_image(entry.gt_path)
    if pred_levels.shape != gt_levels.shape:
        raise ValueError(
            f"dimension mismatch: prediction {pred_levels.shape} vs ground truth {gt_levels.shape}"
        )
    if pred_maxval == 255:
        prob = ProbMap.from_levels(pred_levels, 8)
    elif pred_maxval == 65535:
        prob = ProbMap.from_levels(pred_levels, 16)
    else:
        raise ValueError(f"unsupported prediction bit depth (maxval {pred_maxval})")
    return CorpusItem(
        image_id=entry.image_id,
        prob=prob,
        gt=gt_levels > 0,
        pred_digest=_sha256_file(entry.pred_path),
        gt_digest=_sha256_file(entry.gt_path),
    )


def load_corpus(manifest_path) -> list[CorpusItem]:
    """Load every manifest entry, reporting all broken entries at once."""
    entries = parse_manifest(manifest_path)
    items: list[CorpusItem] = []
    errors: list[tuple[str, str]] = []
    for entry in entries:
        try:
            items.append(load_entry(entry))
        except (OSError, ValueError) as exc:
            errors.append((entry.image_id, str(exc)))
    if errors:
        raise CorpusLoadError(errors)
    return items
