"""Command-line entry point.

Subcommands: ``fuse``, ``eval``, ``pr``, ``weights``, ``synth``. Flag
defaults reproduce the reference configuration (fusion IoU 0.7,
confidence floor 0.001, PR IoU 0.5), so the zero-flag invocation runs
the published setup. Output is file-first; stdout carries a short
machine-parseable summary. Exit codes: 0 success, 1 data/validation
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .datamodel import GroundTruthSet, ModelRun
from .errors import CytodetError
from .formats import (
    emit_detections,
    emit_ground_truth,
    emit_metrics_report,
    emit_weight_table,
    parse_detections,
    parse_detections_csv,
    parse_ground_truth,
    shared_detection_catalog,
)
from .fusion import FusionConfig, fuse_dataset
from .metrics import EvalConfig, average_precision, map_50_95
from .synth import ScenarioConfig, generate, riva_profile
from .weights import (
    counts_from_ground_truth,
    image_sampling_weights,
    loss_weights,
    sampler_weights,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flag combination detected after argparse; exits 2."""


def _read(path: str | Path, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CytodetError(f"cannot read {what} file {path}: {e}") from e


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise CytodetError(f"cannot write {path}: {e}") from e


def _load_gt(path: str) -> GroundTruthSet:
    return parse_ground_truth(_read(path, "ground-truth"))


def _load_run(path: str, model_id: str | None, catalog=None) -> ModelRun:
    p = Path(path)
    model_id = model_id or p.stem
    text = _read(p, "detections")
    if p.suffix.lower() == ".csv":
        if catalog is None:
            raise CytodetError(
                f"CSV detections ({p}) need a ground-truth file for class names"
            )
        return parse_detections_csv(text, model_id, catalog)
    return parse_detections(text, model_id, catalog)


def _apply_config_file(args: argparse.Namespace, keys: list[str]) -> None:
    """Fill unset flags from the --config JSON; explicit flags win."""
    if not getattr(args, "config", None):
        return
    doc = json.loads(_read(args.config, "config"))
    if not isinstance(doc, dict):
        raise CytodetError(f"config file {args.config} must be a JSON object")
    for key in keys:
        if getattr(args, key, None) is None and key in doc:
            setattr(args, key, doc[key])


def _summary_line(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


# ---------------------------------------------------------------- fuse


def cmd_fuse(args: argparse.Namespace) -> int:
    _apply_config_file(args, ["iou", "min_conf", "weights", "out"])
    iou_thr = 0.7 if args.iou is None else float(args.iou)
    min_conf = 0.001 if args.min_conf is None else float(args.min_conf)
    out = Path(args.out if args.out is not None else "fused.json")

    if args.weights is not None and len(args.weights) != len(args.detections):
        raise UsageError(
            f"{len(args.weights)} weights given for {len(args.detections)} "
            f"detection files"
        )

    if args.gt:
        catalog = _load_gt(args.gt).catalog
    else:
        # Without ground truth, class identity must still agree across
        # the input files: build one catalog from all of them.
        json_texts = [
            _read(p, "detections")
            for p in args.detections
            if Path(p).suffix.lower() != ".csv"
        ]
        catalog = shared_detection_catalog(json_texts) if json_texts else None
    runs = [_load_run(path, None, catalog) for path in args.detections]
    config = FusionConfig(
        iou_fuse_threshold=iou_thr,
        min_confidence=min_conf,
        model_weights=tuple(float(w) for w in args.weights) if args.weights else None,
        weight_normalization=not args.no_normalize_weights,
    )
    fused = fuse_dataset(runs, config, max_workers=args.threads)
    _write(out, emit_detections(fused))

    effective = config.resolved_weights(runs)
    per_class: dict[str, int] = {}
    for det in fused.detections:
        per_class[det.class_id.name] = per_class.get(det.class_id.name, 0) + 1
    _summary_line(
        {
            "command": "fuse",
            "out": str(out),
            "input_detections": {r.model_id: len(r) for r in runs},
            "output_detections": len(fused),
            "output_per_class": per_class,
            "effective_weights": {
                r.model_id: w for r, w in zip(runs, effective)
            },
            "iou": iou_thr,
            "min_conf": min_conf,
        }
    )
    return 0


# ---------------------------------------------------------------- eval


def _write_report(report, out_dir: Path, stem: str, figures: bool) -> list[Path]:
    summary, tables = emit_metrics_report(report)
    written = []
    summary_path = out_dir / f"metrics_{stem}.json"
    _write(summary_path, summary)
    written.append(summary_path)
    for class_name, csv_text in tables.items():
        table_path = out_dir / f"pr_{stem}_{class_name}.csv"
        _write(table_path, csv_text)
        written.append(table_path)
    if figures:
        from .plotting import render_pr_figure

        figure_path = out_dir / f"pr_curves_{stem}.png"
        out_dir.mkdir(parents=True, exist_ok=True)
        render_pr_figure(report, figure_path)
        written.append(figure_path)
    return written


def cmd_eval(args: argparse.Namespace) -> int:
    _apply_config_file(args, ["min_conf", "out_dir", "max_dets"])
    min_conf = 0.001 if args.min_conf is None else float(args.min_conf)
    out_dir = Path(args.out_dir if args.out_dir is not None else "reports")

    gts = _load_gt(args.gt)
    run = _load_run(args.det, args.model_id, gts.catalog)
    config = EvalConfig(
        min_confidence=min_conf,
        interpolation="trapezoid" if args.trapezoid else "coco101",
        max_detections_per_image=args.max_dets,
    )
    report = map_50_95(run, gts, config, max_workers=args.threads)
    written = _write_report(report, out_dir, run.model_id, not args.no_figures)
    for path in written:
        print(f"wrote {path}")
    print(f"{report.map_50_95:.6f}")
    return 0


# ------------------------------------------------------------------ pr


def cmd_pr(args: argparse.Namespace) -> int:
    _apply_config_file(args, ["iou", "min_conf", "out_dir"])
    pr_iou = 0.5 if args.iou is None else float(args.iou)
    if not 0.0 < pr_iou <= 1.0:
        raise UsageError(f"--iou must be in (0, 1], got {pr_iou}")
    min_conf = 0.001 if args.min_conf is None else float(args.min_conf)
    out_dir = Path(args.out_dir if args.out_dir is not None else "reports")

    gts = _load_gt(args.gt)
    run = _load_run(args.det, args.model_id, gts.catalog)
    config = EvalConfig(
        min_confidence=min_conf,
        pr_iou=pr_iou,
        interpolation="trapezoid" if args.trapezoid else "coco101",
    )
    report = map_50_95(run, gts, config, max_workers=args.threads)
    per_class_ap = {
        name: average_precision(report.pr_curves[name], config.interpolation)
        for name in report.evaluated_classes
    }
    summary = {
        "command": "pr",
        "iou": pr_iou,
        "per_class_ap": per_class_ap,
        "class_mean_ap": sum(per_class_ap.values()) / len(per_class_ap),
        "pooled_ap": report.pooled_ap50,
        "f1_optimal": {
            "threshold": report.f1.threshold,
            "micro_f1": report.f1.micro_f1,
            "per_class": {
                name: {"precision": p, "recall": r}
                for name, (p, r) in report.f1.per_class.items()
            },
        },
    }
    stem = f"{run.model_id}_iou{pr_iou:g}"
    written = _write_report(report, out_dir, stem, not args.no_figures)
    summary_path = out_dir / f"pr_summary_{stem}.json"
    _write(summary_path, json.dumps(summary, indent=2))
    written.append(summary_path)
    for path in written:
        print(f"wrote {path}")
    _summary_line(
        {
            "command": "pr",
            "pooled_ap": report.pooled_ap50,
            "f1_threshold": report.f1.threshold,
        }
    )
    return 0


# ------------------------------------------------------------- weights


def cmd_weights(args: argparse.Namespace) -> int:
    _apply_config_file(args, ["scheme", "log_base", "out"])
    out = Path(args.out if args.out is not None else "weights.json")

    gts = _load_gt(args.gt)
    catalog = counts_from_ground_truth(gts)
    if args.scheme == "loss-log":
        base = math_base(args.log_base)
        table = loss_weights(catalog, log_base=base)
        images = None
    else:
        table = sampler_weights(catalog)
        images = image_sampling_weights(gts, table, per_instance=args.per_instance)
    _write(out, emit_weight_table(table, images))
    _summary_line(
        {
            "command": "weights",
            "scheme": table.scheme,
            "out": str(out),
            "weights": {e.name: e.weight for e in table.entries},
        }
    )
    return 0


def math_base(raw) -> float:
    import math

    if raw is None or raw == "e":
        return math.e
    return float(raw)


# --------------------------------------------------------------- synth


def cmd_synth(args: argparse.Namespace) -> int:
    if args.riva_profile and args.config:
        raise UsageError("give either --riva-profile or --config, not both")
    if not args.riva_profile and not args.config:
        raise UsageError("one of --riva-profile or --config is required")

    if args.riva_profile:
        config = riva_profile(
            num_images=args.images if args.images is not None else 200,
            seed=args.seed if args.seed is not None else 42,
        )
    else:
        doc = json.loads(_read(args.config, "scenario config"))
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.images is not None:
            doc["num_images"] = args.images
        config = ScenarioConfig.from_dict(doc)

    scenario = generate(config)
    out_dir = Path(args.out_dir)
    sizes = {
        image_id: config.image_size
        for image_id in scenario.ground_truth.boxes_by_image
    }
    _write(out_dir / "gt.json", emit_ground_truth(scenario.ground_truth, sizes))
    for run in scenario.runs:
        _write(out_dir / f"det_{run.model_id}.json", emit_detections(run))
    _write(
        out_dir / "scenario_config.json",
        json.dumps(config.to_dict(), indent=2),
    )
    _summary_line(
        {
            "command": "synth",
            "out_dir": str(out_dir),
            "images": config.num_images,
            "objects": sum(
                len(v) for v in scenario.ground_truth.boxes_by_image.values()
            ),
            "detections": {run.model_id: len(run) for run in scenario.runs},
            "seed": config.seed,
        }
    )
    return 0


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cytodet",
        description="Detection-ensemble toolkit: fuse model outputs, evaluate "
        "mAP50-95, compute imbalance weights, generate synthetic scenarios.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; explicit flags win")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (results are thread-count independent)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("fuse", help="weighted boxes fusion of detection files")
    p.add_argument("detections", nargs="+", help="detection files (COCO results JSON)")
    p.add_argument("--weights", type=float, nargs="+",
                   help="per-model fusion weights (default: all 1)")
    p.add_argument("--gt", help="optional ground truth for class names/validation")
    p.add_argument("--iou", type=float, default=None,
                   help="fusion IoU threshold (default 0.7)")
    p.add_argument("--min-conf", type=float, default=None, dest="min_conf",
                   help="effective-confidence floor (default 0.001)")
    p.add_argument("--no-normalize-weights", action="store_true",
                   help="apply raw weights instead of mean-1 normalized ones")
    p.add_argument("--out", default=None, help="fused output file (default fused.json)")
    common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="challenge-protocol mAP50-95 evaluation")
    p.add_argument("--gt", required=True, help="ground-truth COCO JSON")
    p.add_argument("--det", required=True, help="detections file (JSON or CSV)")
    p.add_argument("--model-id", default=None, help="run label (default: file stem)")
    p.add_argument("--min-conf", type=float, default=None, dest="min_conf",
                   help="evaluation confidence floor (default 0.001)")
    p.add_argument("--max-dets", type=int, default=None,
                   help="per-image detection cap (default unlimited)")
    p.add_argument("--trapezoid", action="store_true",
                   help="raw trapezoidal AUC instead of 101-point interpolation")
    p.add_argument("--out-dir", default=None, dest="out_dir",
                   help="report directory (default reports/)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PR-curve figure rendering")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pr", help="PR tables, AP and F1-optimal threshold at one IoU")
    p.add_argument("--gt", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--model-id", default=None)
    p.add_argument("--iou", type=float, default=None, help="matching IoU (default 0.5)")
    p.add_argument("--min-conf", type=float, default=None, dest="min_conf")
    p.add_argument("--trapezoid", action="store_true")
    p.add_argument("--out-dir", default=None, dest="out_dir")
    p.add_argument("--no-figures", action="store_true")
    common(p)
    p.set_defaults(func=cmd_pr)

    p = sub.add_parser("weights", help="class-imbalance weight tables")
    p.add_argument("--gt", required=True)
    p.add_argument("--scheme", required=True, choices=["loss-log", "sampler-sqrt"])
    p.add_argument("--log-base", default=None, dest="log_base",
                   help="log base for loss-log ('e' or a number; default e)")
    p.add_argument("--per-instance", action="store_true",
                   help="aggregate image weights per object instance "
                   "instead of per distinct class")
    p.add_argument("--out", default=None, help="output file (default weights.json)")
    common(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--riva-profile", action="store_true", dest="riva_profile",
                   help="canned 8-class imbalanced profile with three detectors")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--images", type=int, default=None)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except CytodetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
