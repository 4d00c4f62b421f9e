"""Parsers and emitters for every document the toolkit consumes or
produces.

Ground truth is COCO annotation JSON (``images`` / ``annotations`` /
``categories``), detections are COCO results JSON (a flat record list)
with a CSV fallback for hand-written fixtures, weight tables and metric
summaries are JSON, PR tables are CSV. Boxes travel as (x, y, w, h) on
disk and are converted to corner pairs at this boundary.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from typing import Any

from .datamodel import (
    ClassCatalog,
    ClassId,
    Detection,
    GroundTruthBox,
    GroundTruthSet,
    ModelRun,
)
from .errors import ParseError, ValidationError
from .geometry import BoundingBox
from .metrics import MetricsReport
from .weights import (
    ClassWeight,
    ClassWeightTable,
    ImageWeight,
    ImageWeightTable,
)

logger = logging.getLogger(__name__)

__all__ = [
    "parse_ground_truth",
    "emit_ground_truth",
    "parse_detections",
    "parse_detections_csv",
    "emit_detections",
    "emit_weight_table",
    "parse_weight_table",
    "emit_metrics_report",
    "pr_table_csv",
]


def _load_json(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"malformed {what} JSON: {e.msg}", line=e.lineno, column=e.colno, pos=e.pos
        ) from e


def _image_key(raw: Any) -> str:
    return str(raw)


def _emit_image_id(image_id: str) -> Any:
    # COCO files usually key images by int; restore intness only when
    # the round trip is exact.
    if image_id.isdigit() and str(int(image_id)) == image_id:
        return int(image_id)
    return image_id


def parse_ground_truth(text: str) -> GroundTruthSet:
    """Parse a COCO-style annotation document.

    The catalog is built from ``categories`` in ascending category-id
    order so class indices are stable across runs; images with no
    annotations are retained as empty entries.
    """
    doc = _load_json(text, "ground-truth")
    if not isinstance(doc, dict):
        raise ValidationError("ground-truth document must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise ValidationError(f"ground-truth document missing {key!r} collection")

    categories = sorted(doc["categories"], key=lambda c: c["id"])
    if not categories:
        raise ValidationError("ground-truth document declares no categories")
    classes = []
    for index, cat in enumerate(categories):
        try:
            classes.append(
                ClassId(index=index, name=str(cat["name"]), coco_id=int(cat["id"]))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed category entry {cat!r}") from e
    catalog = ClassCatalog(classes=tuple(classes))
    by_coco_id = {c.coco_id: c for c in catalog.classes}

    boxes_by_image: dict[str, list[GroundTruthBox]] = {}
    for img in doc["images"]:
        if "id" not in img:
            raise ValidationError(f"image entry without id: {img!r}")
        boxes_by_image[_image_key(img["id"])] = []

    degenerate = 0
    for k, ann in enumerate(doc["annotations"]):
        try:
            image_id = _image_key(ann["image_id"])
            category_id = int(ann["category_id"])
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed annotation at index {k}: {ann!r}") from e
        if image_id not in boxes_by_image:
            raise ValidationError(
                f"annotation {k} references unknown image id {ann['image_id']!r}"
            )
        if category_id not in by_coco_id:
            raise ValidationError(
                f"annotation {k} references unknown category id {category_id}"
            )
        if w < 0 or h < 0:
            raise ValidationError(
                f"annotation {k} has negative box size: w={w}, h={h}"
            )
        if w == 0 or h == 0:
            degenerate += 1
        boxes_by_image[image_id].append(
            GroundTruthBox(
                image_id=image_id,
                class_id=by_coco_id[category_id],
                box=BoundingBox.from_xywh(x, y, w, h),
            )
        )
    if degenerate:
        logger.warning("ground truth contains %d zero-area box(es)", degenerate)

    return GroundTruthSet(
        boxes_by_image={k: tuple(v) for k, v in boxes_by_image.items()},
        catalog=catalog,
    )


def emit_ground_truth(
    gts: GroundTruthSet,
    image_sizes: dict[str, tuple[int, int]] | None = None,
) -> str:
    """Write a GroundTruthSet back out as COCO annotation JSON."""
    images = []
    for image_id in sorted(gts.boxes_by_image):
        entry: dict[str, Any] = {"id": _emit_image_id(image_id)}
        if image_sizes and image_id in image_sizes:
            entry["width"], entry["height"] = image_sizes[image_id]
        images.append(entry)
    annotations = []
    ann_id = 1
    for image_id in sorted(gts.boxes_by_image):
        for gt in gts.boxes_by_image[image_id]:
            x, y, w, h = gt.box.as_xywh()
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": _emit_image_id(image_id),
                    "category_id": gt.class_id.coco_id,
                    "bbox": [x, y, w, h],
                    "area": gt.box.area,
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    categories = [
        {"id": c.coco_id, "name": c.name} for c in gts.catalog.classes
    ]
    doc = {"images": images, "annotations": annotations, "categories": categories}
    return json.dumps(doc, indent=2)


def _catalog_from_category_ids(records: list[dict]) -> ClassCatalog:
    # Unusable records are skipped here; the per-record parse loop
    # reports them with their index.
    ids = set()
    for rec in records:
        if not isinstance(rec, dict):
            continue
        try:
            ids.add(int(rec["category_id"]))
        except (KeyError, TypeError, ValueError):
            continue
    classes = tuple(
        ClassId(index=i, name=f"category_{cid}", coco_id=cid)
        for i, cid in enumerate(sorted(ids))
    )
    return ClassCatalog(classes=classes)


def shared_detection_catalog(texts: list[str]) -> ClassCatalog:
    """One catalog covering the category ids of several detection
    documents, so class identity lines up across models when no ground
    truth supplies the real names."""
    records: list[dict] = []
    for text in texts:
        doc = _load_json(text, "detections")
        if not isinstance(doc, list):
            raise ValidationError("detection document must be a JSON array of records")
        records.extend(r for r in doc if isinstance(r, dict) and "category_id" in r)
    if not records:
        return ClassCatalog(classes=())
    return _catalog_from_category_ids(records)


def parse_detections(
    text: str, model_id: str, catalog: ClassCatalog | None = None
) -> ModelRun:
    """Parse a COCO results document (flat record list) into a ModelRun.

    Scores marginally outside [0, 1] are clamped and counted on the
    run's ``clamped_scores``; serialized sigmoid outputs routinely land
    at 1.0000001. Without a catalog, one is synthesized from the
    category ids present.
    """
    doc = _load_json(text, "detections")
    if not isinstance(doc, list):
        raise ValidationError("detection document must be a JSON array of records")
    if catalog is None and doc:
        catalog = _catalog_from_category_ids(doc)
    clamped = 0
    degenerate = 0
    detections = []
    for k, rec in enumerate(doc):
        try:
            image_id = _image_key(rec["image_id"])
            category_id = int(rec["category_id"])
            x, y, w, h = (float(v) for v in rec["bbox"])
            score = float(rec["score"])
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"malformed detection record at index {k}: {rec!r}") from e
        try:
            cls = catalog.by_coco_id(category_id)
        except ValidationError:
            raise ValidationError(
                f"detection record {k} references unknown category id {category_id}"
            ) from None
        if w < 0 or h < 0:
            raise ValidationError(
                f"detection record {k} has negative box size: w={w}, h={h}"
            )
        if w == 0 or h == 0:
            degenerate += 1
        if not 0.0 <= score <= 1.0:
            score = min(max(score, 0.0), 1.0)
            clamped += 1
        detections.append(
            Detection(
                image_id=image_id,
                class_id=cls,
                box=BoundingBox.from_xywh(x, y, w, h),
                score=score,
                model_id=model_id,
            )
        )
    if clamped:
        logger.warning(
            "clamped %d out-of-range score(s) while parsing %r", clamped, model_id
        )
    if degenerate:
        logger.warning(
            "detections of %r contain %d zero-area box(es)", model_id, degenerate
        )
    return ModelRun(
        model_id=model_id, detections=tuple(detections), clamped_scores=clamped
    )


def parse_detections_csv(
    text: str, model_id: str, catalog: ClassCatalog
) -> ModelRun:
    """CSV fallback for hand-written fixtures.

    Columns: image_id, class_name, x, y, w, h, score (header required).
    """
    reader = csv.DictReader(io.StringIO(text))
    required = {"image_id", "class_name", "x", "y", "w", "h", "score"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise ParseError(
            f"detection CSV must have columns {sorted(required)}, "
            f"got {reader.fieldnames}"
        )
    clamped = 0
    detections = []
    for k, row in enumerate(reader):
        try:
            cls = catalog.by_name(row["class_name"])
            x, y, w, h = (float(row[c]) for c in ("x", "y", "w", "h"))
            score = float(row["score"])
        except ValidationError:
            raise
        except Exception as e:
            raise ParseError(f"malformed CSV row {k + 2}: {row!r}", line=k + 2) from e
        if not 0.0 <= score <= 1.0:
            score = min(max(score, 0.0), 1.0)
            clamped += 1
        detections.append(
            Detection(
                image_id=row["image_id"],
                class_id=cls,
                box=BoundingBox.from_xywh(x, y, w, h),
                score=score,
                model_id=model_id,
            )
        )
    return ModelRun(
        model_id=model_id, detections=tuple(detections), clamped_scores=clamped
    )


def emit_detections(run: ModelRun) -> str:
    """Emit a ModelRun as a COCO results document.

    Round-trips through :func:`parse_detections` to within 1e-6 on
    coordinates (exactly, in practice: floats are serialized at full
    precision).
    """
    records = []
    for det in run.detections:
        x, y, w, h = det.box.as_xywh()
        records.append(
            {
                "image_id": _emit_image_id(det.image_id),
                "category_id": det.class_id.coco_id,
                "bbox": [x, y, w, h],
                "score": det.score,
            }
        )
    return json.dumps(records, indent=2)


def _sig12(value: float) -> float:
    return float(f"{value:.12g}")


def emit_weight_table(
    table: ClassWeightTable, images: ImageWeightTable | None = None
) -> str:
    """Emit a class-weight table (and optional per-image weights) as
    JSON, weights at 12 significant digits."""
    doc: dict[str, Any] = {
        "scheme": table.scheme,
        "total_count": table.total_count,
        "classes": [
            {
                "name": e.name,
                "count": e.count,
                "frequency": _sig12(e.frequency),
                "weight": _sig12(e.weight),
            }
            for e in table.entries
        ],
    }
    if table.log_base is not None:
        doc["log_base"] = _sig12(table.log_base)
    if images is not None:
        doc["images"] = [
            {
                "image_id": _emit_image_id(e.image_id),
                "weight": _sig12(e.weight),
                "probability": _sig12(e.probability),
            }
            for e in images.entries
        ]
    return json.dumps(doc, indent=2)


def parse_weight_table(text: str) -> tuple[ClassWeightTable, ImageWeightTable | None]:
    """Parse a weight document back into tables."""
    doc = _load_json(text, "weight-table")
    if not isinstance(doc, dict) or "scheme" not in doc or "classes" not in doc:
        raise ValidationError("weight document must carry 'scheme' and 'classes'")
    entries = tuple(
        ClassWeight(
            name=str(c["name"]),
            count=int(c["count"]),
            frequency=float(c.get("frequency", 0.0)),
            weight=float(c["weight"]),
        )
        for c in doc["classes"]
    )
    table = ClassWeightTable(
        scheme=str(doc["scheme"]),
        entries=entries,
        total_count=int(doc.get("total_count", sum(e.count for e in entries))),
        log_base=float(doc["log_base"]) if "log_base" in doc else None,
    )
    images = None
    if "images" in doc:
        image_entries = tuple(
            ImageWeight(
                image_id=_image_key(e["image_id"]),
                weight=float(e["weight"]),
                probability=float(e["probability"]),
            )
            for e in doc["images"]
        )
        total = sum(e.weight for e in image_entries)
        images = ImageWeightTable(entries=image_entries, normalization=total)
    return table, images


def pr_table_csv(report: MetricsReport, class_name: str) -> str:
    """Per-class PR table: one row per distinct confidence, descending."""
    curve = report.pr_curves[class_name]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["confidence", "precision", "recall"])
    for p in curve.operating_points():
        writer.writerow([repr(p.confidence), repr(p.precision), repr(p.recall)])
    return out.getvalue()


def emit_metrics_report(report: MetricsReport) -> tuple[str, dict[str, str]]:
    """Machine-readable summary JSON plus one PR CSV per class."""
    summary = {
        "model_id": report.model_id,
        "map_50_95": report.map_50_95,
        "map50": report.map50,
        "pooled_ap50": report.pooled_ap50,
        "iou_thresholds": list(report.iou_thresholds),
        "per_class": {
            name: {
                "gt_count": m.gt_count,
                "ap50": m.ap50,
                "ap_by_iou": {f"{t:.2f}": ap for t, ap in m.ap_by_iou.items()},
                "mean_ap": m.mean_ap,
            }
            for name, m in report.per_class.items()
        },
        "f1_optimal": {
            "threshold": report.f1.threshold,
            "micro_f1": report.f1.micro_f1,
            "precision": report.f1.precision,
            "recall": report.f1.recall,
            "per_class": {
                name: {"precision": pr[0], "recall": pr[1]}
                for name, pr in report.f1.per_class.items()
            },
        },
        "evaluated_classes": list(report.evaluated_classes),
        "skipped_classes": list(report.skipped_classes),
    }
    tables = {name: pr_table_csv(report, name) for name in report.pr_curves}
    return json.dumps(summary, indent=2), tables
