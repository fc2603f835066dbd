"""Metric report assembly and emission (JSON and CSV).

Reports are plain dictionaries with a fixed key order so that serialized
output is byte-stable. Scores are carried on the unit scale in ``metrics``
and on the 0-100 table scale in ``metrics_percent`` (with the false-alarm
rate additionally expressed per million pixels); every percent figure is
exactly 100x its unit counterpart.
"""

from __future__ import annotations

import json
from pathlib import Path

FORMAT_VERSION = "1"

# Upper bound on pixel PR points embedded in a report; the full curve is
# available through the curve-dump command.
PIXEL_CURVE_MAX_SAMPLES = 1024

_PERCENT_KEYS = ("iou", "niou", "pd", "hse_p", "hse_t", "hse", "roc_auc")


def _sample_curve(curve) -> list[dict]:
    if curve is None or len(curve) == 0:
        return []
    n = len(curve)
    stride = max(1, -(-n // PIXEL_CURVE_MAX_SAMPLES))  # ceil division
    index = list(range(0, n, stride))
    if index[-1] != n - 1:
        index.append(n - 1)
    return [
        {
            "threshold": float(curve.thresholds[i]),
            "precision": float(curve.precisions[i]),
            "recall": float(curve.recalls[i]),
        }
        for i in index
    ]


def build_report(cfg, metrics, target_points, pixel_curve, warnings, undefined, digests, counts) -> dict:
    metrics_percent: dict[str, object] = {}
    for key in _PERCENT_KEYS:
        value = metrics.get(key)
        metrics_percent[key] = None if value is None else 100.0 * value
    metrics_percent["fa_per_million"] = metrics["fa"] * 1e6
    metrics_percent["fa_valid"] = metrics["fa_valid"]

    return {
        "format_version": FORMAT_VERSION,
        "config": {
            "thresholds": list(cfg.thresholds),
            "tau": cfg.tau,
            "connectivity": cfg.connectivity,
            "fixed_threshold": cfg.fixed_threshold,
            "histogram_bins": cfg.histogram_bins,
            "report_scale": cfg.report_scale,
        },
        "inputs": {
            "manifest": None,
            "n_images": counts["n_images"],
            "digests": digests,
        },
        "counts": {
            "n_gt_targets": counts["n_gt_targets"],
            "fp_pixels": counts["fp_pixels"],
            "total_pixels": counts["total_pixels"],
        },
        "metrics": dict(metrics),
        "metrics_percent": metrics_percent,
        "target_pr": [
            {
                "threshold": p.threshold,
                "precision": p.precision,
                "recall": p.recall,
                "n_match": p.n_match,
                "n_pred": p.n_pred,
            }
            for p in target_points
        ],
        "pixel_pr": _sample_curve(pixel_curve),
        "warnings": list(warnings),
        "undefined": list(undefined),
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def report_to_csv(report: dict) -> str:
    """One summary row plus one row per sweep threshold.

    Summary scores are printed on the configured report scale (percent by
    default, matching published tables).
    """
    percent = report["config"]["report_scale"] == "percent"
    block = report["metrics_percent"] if percent else report["metrics"]
    fa_value = block["fa_per_million"] if percent else report["metrics"]["fa"]
    fa_header = "fa_per_million" if percent else "fa"
    header = [
        "row", "threshold", "iou", "niou", "pd", fa_header, "fa_valid",
        "hse_p", "hse_t", "hse", "roc_auc", "precision", "recall", "n_match", "n_pred",
    ]
    summary = [
        "summary", "",
        _fmt(block["iou"]), _fmt(block["niou"]), _fmt(block["pd"]), _fmt(fa_value),
        _fmt(block["fa_valid"]), _fmt(block["hse_p"]), _fmt(block["hse_t"]),
        _fmt(block["hse"]), _fmt(block["roc_auc"]), "", "", "", "",
    ]
    lines = [",".join(header), ",".join(summary)]
    for point in report["target_pr"]:
        lines.append(
            ",".join(
                [
                    "threshold", _fmt(point["threshold"]), "", "", "", "", "", "", "", "", "",
                    _fmt(point["precision"]), _fmt(point["recall"]),
                    str(point["n_match"]), str(point["n_pred"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def emit_report(report: dict, fmt: str, path) -> None:
    """Serialize a report to ``path``; identical reports yield identical bytes."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unsupported report format {fmt!r} (need json or csv)")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write report to {path}: {exc}") from exc
