"""Command-line front end.

Exit codes: 0 success, 1 corpus load error, 2 corpus with undefined metrics,
3 property-demo or invariant-suite failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .engine import EvalConfig, evaluate, evaluate_manifest
from .errors import CorpusLoadError, PlacementError, UndefinedMetricError
from .manifest import load_corpus, write_manifest
from .mask_ops import binarize
from .pgm import write_pgm
from .pixel_metrics import ScoreHistogram, accumulate, hse_p, pixel_pr_curve, roc_auc, roc_points
from .report import emit_report, report_to_csv, report_to_json
from .synth import ErrorModeSpec, SceneSpec, build_roc_demo, gen_scene, perturb
from .target_metrics import fuse_percent, uniform_thresholds
from .nn import run_invariant_suite

EXIT_OK = 0
EXIT_LOAD_ERROR = 1
EXIT_UNDEFINED = 2
EXIT_PROPERTY_FAILED = 3


def _parse_thresholds(text: str) -> tuple[float, ...]:
    """Either a count ('19') or an explicit comma list ('0.25,0.5,0.75')."""
    if "," in text or "." in text:
        return tuple(float(part) for part in text.split(",") if part.strip())
    return uniform_thresholds(int(text))


def _add_eval_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau", type=float, default=3.0, help="centroid match tolerance in pixels")
    parser.add_argument("--thresholds", type=str, default="19",
                        help="sweep size (count) or explicit comma-separated list")
    parser.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    parser.add_argument("--fixed-threshold", type=float, default=0.5,
                        help="operating threshold for IoU/Pd/Fa")
    parser.add_argument("--bins", type=int, default=65536, help="score histogram bins")
    parser.add_argument("--workers", type=int, default=1)


def _config_from_args(args: argparse.Namespace, report_scale: str = "percent") -> EvalConfig:
    return EvalConfig(
        thresholds=_parse_thresholds(args.thresholds),
        tau=args.tau,
        connectivity=args.connectivity,
        fixed_threshold=args.fixed_threshold,
        histogram_bins=args.bins,
        workers=args.workers,
        report_scale=report_scale,
    )


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args, report_scale=args.scale)
    try:
        report = evaluate_manifest(args.manifest, cfg)
    except (CorpusLoadError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    if args.out:
        emit_report(report, args.format, args.out)
    else:
        text = report_to_json(report) if args.format == "json" else report_to_csv(report)
        sys.stdout.write(text)
    if report["undefined"]:
        print(f"warning: undefined metrics: {', '.join(report['undefined'])}", file=sys.stderr)
        return EXIT_UNDEFINED
    return EXIT_OK


def _cmd_curve(args: argparse.Namespace) -> int:
    """Dump full pixel PR, ROC, and target PR samples for external plotting."""
    cfg = _config_from_args(args)
    try:
        corpus = load_corpus(args.manifest)
    except (CorpusLoadError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    hist = ScoreHistogram(bins=cfg.histogram_bins)
    for item in corpus:
        accumulate(item.prob, item.gt, hist)
    lines = ["curve,threshold,x,y"]
    try:
        curve = pixel_pr_curve(hist)
        for t, prec, rec in zip(curve.thresholds, curve.precisions, curve.recalls):
            lines.append(f"pr,{t!r},{rec!r},{prec!r}")
        for t, fpr, tpr in roc_points(hist):
            lines.append(f"roc,{t!r},{fpr!r},{tpr!r}")
    except UndefinedMetricError as exc:
        print(f"warning: {exc}", file=sys.stderr)
    report = evaluate(corpus, cfg)
    for point in report["target_pr"]:
        lines.append(f"target_pr,{point['threshold']!r},{point['recall']!r},{point['precision']!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_gen(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    errors = ErrorModeSpec(
        miss_fraction=args.miss_fraction,
        false_alarm_count=args.false_alarms,
        false_alarm_confidence=args.false_alarm_confidence,
        erosion_pixels=args.erosion,
        confidence_jitter=args.jitter,
    )
    rows = []
    try:
        for index in range(args.images):
            spec = SceneSpec(
                height=args.height,
                width=args.width,
                n_targets=args.targets,
                radius_range=(args.radius_min, args.radius_max),
                background_noise_level=args.noise,
                seed=args.seed + index,
            )
            gt, ideal = gen_scene(spec)
            pred = perturb(ideal, gt, errors, seed=args.seed + 100_000 + index)
            image_id = f"img_{index:05d}"
            pred_name = f"{image_id}_pred.pgm"
            gt_name = f"{image_id}_gt.pgm"
            write_pgm(out_dir / pred_name, np.rint(pred.values * 255).astype(np.uint8))
            write_pgm(out_dir / gt_name, np.where(gt, 255, 0).astype(np.uint8))
            rows.append((image_id, pred_name, gt_name))
    except PlacementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    write_manifest(out_dir / "manifest.tsv", rows)
    print(f"wrote {len(rows)} image pairs and manifest.tsv to {out_dir}")
    return EXIT_OK


def _cmd_demo_roc(args: argparse.Namespace) -> int:
    """Build the imbalance demo and assert its defining ordering properties."""
    flooded, clean = build_roc_demo(args.seed)

    def pixel_scores(corpus) -> tuple[float, float, int]:
        hist = ScoreHistogram()
        fp = 0
        for prob, gt in corpus:
            accumulate(prob, gt, hist)
            fp += int(np.logical_and(binarize(prob, 0.5), ~gt).sum())
        return roc_auc(hist), hse_p(pixel_pr_curve(hist)), fp

    auc_flood, ap_flood, fp_flood = pixel_scores(flooded)
    auc_clean, ap_clean, fp_clean = pixel_scores(clean)
    ratio = fp_flood / max(fp_clean, 1)

    print("case            roc_auc   hse_p     fp_pixels")
    print(f"flooded (I)     {auc_flood:.4f}    {100 * ap_flood:6.2f}    {fp_flood}")
    print(f"clean   (II)    {auc_clean:.4f}    {100 * ap_clean:6.2f}    {fp_clean}")
    print(f"fp pixel ratio: {ratio:.1f}x")

    checks = [
        ("roc_auc(I) > roc_auc(II)", auc_flood > auc_clean),
        ("hse_p(I) < hse_p(II)", ap_flood < ap_clean),
        ("both AUCs > 0.97", auc_flood > 0.97 and auc_clean > 0.97),
        ("fp pixel ratio >= 10", ratio >= 10.0),
    ]
    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok = ok and passed
    return EXIT_OK if ok else EXIT_PROPERTY_FAILED


def _cmd_nn_check(args: argparse.Namespace) -> int:
    results = run_invariant_suite(seed=args.seed)
    ok = True
    for name, passed, detail in results:
        suffix = f"  ({detail})" if detail else ""
        print(f"{'PASS' if passed else 'FAIL'}  {name}{suffix}")
        ok = ok and passed
    return EXIT_OK if ok else EXIT_PROPERTY_FAILED


def _cmd_fuse(args: argparse.Namespace) -> int:
    print(f"{fuse_percent(args.hse_p, args.hse_t):.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sirsteval",
        description="Deterministic evaluation for infrared small target detection outputs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a corpus manifest and emit a metric report")
    p_eval.add_argument("--manifest", required=True)
    _add_eval_config_flags(p_eval)
    p_eval.add_argument("--format", choices=("json", "csv"), default="json")
    p_eval.add_argument("--out", type=str, default=None, help="report path (stdout when omitted)")
    p_eval.add_argument("--scale", choices=("unit", "percent"), default="percent")
    p_eval.set_defaults(func=_cmd_eval)

    p_curve = sub.add_parser("curve", help="dump PR/ROC curve samples for external plotting")
    p_curve.add_argument("--manifest", required=True)
    _add_eval_config_flags(p_curve)
    p_curve.add_argument("--out", type=str, default=None)
    p_curve.set_defaults(func=_cmd_curve)

    p_gen = sub.add_parser("gen", help="generate a seeded synthetic corpus")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--images", type=int, default=10)
    p_gen.add_argument("--height", type=int, default=256)
    p_gen.add_argument("--width", type=int, default=256)
    p_gen.add_argument("--targets", type=int, default=3)
    p_gen.add_argument("--radius-min", type=int, default=2)
    p_gen.add_argument("--radius-max", type=int, default=4)
    p_gen.add_argument("--noise", type=float, default=0.1)
    p_gen.add_argument("--miss-fraction", type=float, default=0.0)
    p_gen.add_argument("--false-alarms", type=int, default=0)
    p_gen.add_argument("--false-alarm-confidence", type=float, default=0.6)
    p_gen.add_argument("--erosion", type=int, default=0)
    p_gen.add_argument("--jitter", type=float, default=0.0)
    p_gen.set_defaults(func=_cmd_gen)

    p_demo = sub.add_parser(
        "demo-roc",
        help="show that ROC-AUC and the pixel PR integral can rank two detectors oppositely",
    )
    p_demo.add_argument("--seed", type=int, default=2024)
    p_demo.set_defaults(func=_cmd_demo_roc)

    p_nn = sub.add_parser("nn-check", help="run the fusion/distillation kernel invariant suite")
    p_nn.add_argument("--seed", type=int, default=7)
    p_nn.set_defaults(func=_cmd_nn_check)

    p_fuse = sub.add_parser("fuse", help="fuse pixel- and target-level scores (0-100 scale)")
    p_fuse.add_argument("hse_p", type=float)
    p_fuse.add_argument("hse_t", type=float)
    p_fuse.set_defaults(func=_cmd_fuse)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
