"""The file-based reference pipeline used by golden and acceptance
tests: synth -> eval each detector -> fuse with mAP-proportional
weights -> eval the ensemble. Every step goes through the CLI so the
recorded values include serialization effects."""

from __future__ import annotations

import json
from pathlib import Path

from cytodet.cli import main

GOLDEN_PATH = Path(__file__).parent / "golden" / "riva_seed42.json"


def run_reference_pipeline(base: Path, images: int = 200, seed: int = 42,
                           threads: int = 1) -> dict:
    scenario_dir = base / "scenario"
    code = main([
        "synth", "--riva-profile", "--seed", str(seed), "--images", str(images),
        "--out-dir", str(scenario_dir),
    ])
    assert code == 0, "synth failed"
    gt_path = scenario_dir / "gt.json"
    det_files = sorted(scenario_dir.glob("det_*.json"))
    assert det_files, "synth produced no detector files"

    individual: dict[str, float] = {}
    for det_file in det_files:
        model_id = det_file.stem[len("det_"):]
        out_dir = base / f"reports_{model_id}"
        code = main([
            "eval", "--gt", str(gt_path), "--det", str(det_file),
            "--model-id", model_id, "--out-dir", str(out_dir),
            "--no-figures", "--threads", str(threads),
        ])
        assert code == 0, f"eval failed for {model_id}"
        summary = json.loads((out_dir / f"metrics_{model_id}.json").read_text())
        individual[model_id] = summary["map_50_95"]

    weights = [individual[f.stem[len("det_"):]] for f in det_files]
    fused_path = base / "fused.json"
    code = main([
        "fuse", *[str(f) for f in det_files],
        "--gt", str(gt_path),
        "--weights", *[repr(w) for w in weights],
        "--iou", "0.7", "--min-conf", "0.001",
        "--out", str(fused_path), "--threads", str(threads),
    ])
    assert code == 0, "fuse failed"

    ensemble_dir = base / "reports_ensemble"
    code = main([
        "eval", "--gt", str(gt_path), "--det", str(fused_path),
        "--model-id", "ensemble", "--out-dir", str(ensemble_dir),
        "--no-figures", "--threads", str(threads),
    ])
    assert code == 0, "ensemble eval failed"
    summary = json.loads((ensemble_dir / "metrics_ensemble.json").read_text())

    return {
        "seed": seed,
        "images": images,
        "individual_map_50_95": individual,
        "fusion_weights": dict(zip(individual, weights)),
        "ensemble_map_50_95": summary["map_50_95"],
        "paths": {
            "gt": str(gt_path),
            "detectors": [str(f) for f in det_files],
            "fused": str(fused_path),
            "ensemble_metrics": str(ensemble_dir / "metrics_ensemble.json"),
        },
    }


def load_golden() -> dict:
    return json.loads(GOLDEN_PATH.read_text())
