import json

import numpy as np
import pytest

from sirsteval.engine import EvalConfig, evaluate, evaluate_manifest
from sirsteval.manifest import write_manifest
from sirsteval.pgm import write_pgm
from sirsteval.report import emit_report, report_to_csv, report_to_json
from sirsteval.synth import ErrorModeSpec, SceneSpec, gen_scene, perturb

from oracles import naive_corpus_metrics


def perfect_corpus(n=3, size=48, targets=2):
    pairs = []
    for seed in range(n):
        gt, ideal = gen_scene(SceneSpec(height=size, width=size, n_targets=targets, seed=seed,
                                        background_noise_level=0.0))
        pairs.append((ideal, gt))
    return pairs


def degraded_corpus(n=4, size=48, targets=3, seed0=100):
    pairs = []
    for seed in range(seed0, seed0 + n):
        gt, ideal = gen_scene(SceneSpec(height=size, width=size, n_targets=targets, seed=seed,
                                        background_noise_level=0.15))
        pred = perturb(
            ideal, gt,
            ErrorModeSpec(miss_fraction=0.3, false_alarm_count=2, false_alarm_confidence=0.7,
                          erosion_pixels=1),
            seed=seed + 5000,
        )
        pairs.append((pred, gt))
    return pairs


def write_corpus(tmp_path, pairs):
    rows = []
    for i, (prob, gt) in enumerate(pairs):
        image_id = f"img_{i:04d}"
        write_pgm(tmp_path / f"{image_id}_p.pgm", np.rint(prob.values * 255).astype(np.uint8))
        write_pgm(tmp_path / f"{image_id}_g.pgm", np.where(gt, 255, 0).astype(np.uint8))
        rows.append((image_id, f"{image_id}_p.pgm", f"{image_id}_g.pgm"))
    manifest = tmp_path / "manifest.tsv"
    write_manifest(manifest, rows)
    return manifest


def test_perfect_corpus_all_metrics_one():
    cfg = EvalConfig(thresholds=(0.25, 0.5, 0.75))
    report = evaluate(perfect_corpus(), cfg)
    m = report["metrics"]
    assert m["iou"] == 1.0
    assert m["niou"] == 1.0
    assert m["pd"] == 1.0
    assert m["fa"] == 0.0
    assert m["fa_valid"] is True
    assert m["hse_p"] == 1.0
    assert m["hse_t"] == 1.0
    assert m["hse"] == 1.0
    assert report["metrics_percent"]["hse"] == 100.0
    assert report["undefined"] == []


def test_degraded_corpus_matches_naive_oracle():
    thresholds = (0.2, 0.4, 0.6, 0.8)
    cfg = EvalConfig(thresholds=thresholds, tau=3.0, connectivity=8, fixed_threshold=0.5)
    pairs = degraded_corpus()
    report = evaluate(pairs, cfg)
    want = naive_corpus_metrics(pairs, thresholds, tau=3.0, connectivity=8, fixed_threshold=0.5)
    got = report["metrics"]
    for key, expected in want.items():
        assert got[key] == pytest.approx(expected, abs=1e-12), key


def test_scale_coherence():
    report = evaluate(degraded_corpus(), EvalConfig(thresholds=(0.3, 0.6)))
    for key in ("iou", "niou", "pd", "hse_p", "hse_t", "hse", "roc_auc"):
        assert report["metrics_percent"][key] == 100.0 * report["metrics"][key]
    assert report["metrics_percent"]["fa_per_million"] == report["metrics"]["fa"] * 1e6


def test_hse_is_product_within_ulp():
    report = evaluate(degraded_corpus(), EvalConfig(thresholds=(0.3, 0.6)))
    m = report["metrics"]
    assert m["hse"] == m["hse_p"] * m["hse_t"]


def test_worker_count_does_not_change_bytes(tmp_path):
    manifest = write_corpus(tmp_path, degraded_corpus(n=6))
    r1 = evaluate_manifest(manifest, EvalConfig(workers=1))
    r2 = evaluate_manifest(manifest, EvalConfig(workers=4))
    assert report_to_json(r1) == report_to_json(r2)
    assert report_to_csv(r1) == report_to_csv(r2)


def test_manifest_order_does_not_change_bytes(tmp_path):
    pairs = degraded_corpus(n=4)
    manifest = write_corpus(tmp_path, pairs)
    report_sorted = evaluate_manifest(manifest, EvalConfig())
    lines = manifest.read_text().splitlines()
    manifest.write_text("\n".join([lines[0]] + list(reversed(lines[1:]))) + "\n")
    report_reversed = evaluate_manifest(manifest, EvalConfig())
    assert report_to_json(report_sorted) == report_to_json(report_reversed)


def test_evaluate_empty_corpus_rejected():
    with pytest.raises(ValueError):
        evaluate([], EvalConfig())


def test_zero_gt_corpus_marks_target_metrics_undefined():
    rng = np.random.default_rng(0)
    values = rng.integers(0, 256, size=(16, 16)) / 255.0
    gt = np.zeros((16, 16), bool)
    report = evaluate([(values, gt)], EvalConfig(thresholds=(0.5,)))
    assert set(report["undefined"]) == {"pd", "hse_t", "hse", "hse_p", "roc_auc"}
    assert report["metrics"]["pd"] is None
    assert report["metrics"]["fa"] is not None  # still defined


def test_emit_report_byte_stable(tmp_path):
    report = evaluate(perfect_corpus(n=2), EvalConfig(thresholds=(0.5,)))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(report, "json", a)
    emit_report(report, "json", b)
    assert a.read_bytes() == b.read_bytes()
    parsed = json.loads(a.read_text())
    assert parsed["metrics"]["hse"] == 1.0
    with pytest.raises(ValueError):
        emit_report(report, "xml", tmp_path / "c.xml")


def test_csv_row_count_is_one_plus_thresholds(tmp_path):
    thresholds = tuple(uniform / 10 for uniform in range(1, 8))
    report = evaluate(perfect_corpus(n=2), EvalConfig(thresholds=thresholds))
    csv_text = report_to_csv(report)
    rows = [line for line in csv_text.strip().splitlines() if line]
    assert len(rows) == 1 + 1 + len(thresholds)  # header + summary + sweep
    assert rows[1].startswith("summary,")
    assert all(row.startswith("threshold,") for row in rows[2:])


def test_report_json_round_trips(tmp_path):
    report = evaluate(degraded_corpus(n=2), EvalConfig(thresholds=(0.4, 0.7)))
    path = tmp_path / "r.json"
    emit_report(report, "json", path)
    assert json.loads(path.read_text()) == json.loads(report_to_json(report))


def test_lossy_quantization_warning():
    values = np.full((4, 4), 0.123456789)
    gt = np.zeros((4, 4), bool)
    gt[0, 0] = True
    report = evaluate([(values, gt)], EvalConfig(thresholds=(0.5,)))
    assert any("lossy" in w for w in report["warnings"])


def test_per_image_digests_present(tmp_path):
    manifest = write_corpus(tmp_path, perfect_corpus(n=2))
    report = evaluate_manifest(manifest, EvalConfig(thresholds=(0.5,)))
    digests = report["inputs"]["digests"]
    assert set(digests) == {"img_0000", "img_0001"}
    assert all(len(d["pred"]) == 64 and len(d["gt"]) == 64 for d in digests.values())
    assert report["inputs"]["manifest"] == str(manifest)
