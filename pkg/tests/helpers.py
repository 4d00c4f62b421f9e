"""Shared fixture builders and seeded instance generators."""

from __future__ import annotations

import numpy as np

from cytodet.datamodel import (
    ClassCatalog,
    Detection,
    GroundTruthBox,
    GroundTruthSet,
    ModelRun,
)
from cytodet.geometry import BoundingBox


def catalog(*names: str) -> ClassCatalog:
    return ClassCatalog.from_names(list(names) or ["cell"])


def det(image_id, cls, box, score, model_id="m0") -> Detection:
    return Detection(
        image_id=str(image_id),
        class_id=cls,
        box=BoundingBox(*box),
        score=score,
        model_id=model_id,
    )


def gt_box(image_id, cls, box) -> GroundTruthBox:
    return GroundTruthBox(image_id=str(image_id), class_id=cls, box=BoundingBox(*box))


def gt_set(cat: ClassCatalog, boxes: list[GroundTruthBox],
           extra_images: list[str] = ()) -> GroundTruthSet:
    by_image: dict[str, list[GroundTruthBox]] = {str(i): [] for i in extra_images}
    for b in boxes:
        by_image.setdefault(b.image_id, []).append(b)
    return GroundTruthSet(
        boxes_by_image={k: tuple(v) for k, v in by_image.items()}, catalog=cat
    )


def run(model_id: str, detections: list[Detection], weight: float = 1.0) -> ModelRun:
    return ModelRun(
        model_id=model_id, detections=tuple(detections), ensemble_weight=weight
    )


def random_box(rng: np.random.Generator, span: float = 100.0,
               min_size: float = 2.0, max_size: float = 30.0):
    w = float(rng.uniform(min_size, max_size))
    h = float(rng.uniform(min_size, max_size))
    x = float(rng.uniform(0.0, span - w))
    y = float(rng.uniform(0.0, span - h))
    return (x, y, x + w, y + h)


def jittered(rng: np.random.Generator, box, amount: float):
    dx1, dy1, dx2, dy2 = rng.uniform(-amount, amount, size=4)
    x1, y1, x2, y2 = box
    x1, x2 = x1 + float(dx1), x2 + float(dx2)
    y1, y2 = y1 + float(dy1), y2 + float(dy2)
    if x2 < x1:
        x1, x2 = x2, x1
    if y2 < y1:
        y1, y2 = y2, y1
    return (x1, y1, x2, y2)


def fusion_instance(rng: np.random.Generator, max_models: int = 3,
                    max_dets: int = 20, n_classes: int = 3):
    """One random single-image fusion instance: clustered boxes so the
    IoU threshold actually bites, occasional exact duplicates, random
    weights and thresholds.

    Returns (model_detections, weights, iou_thr, min_conf) where
    model_detections is [(model_id, [(class_index, box, score), ...])].
    """
    n_models = int(rng.integers(1, max_models + 1))
    n_anchors = int(rng.integers(1, 6))
    anchors = [random_box(rng, min_size=8.0, max_size=30.0) for _ in range(n_anchors)]
    anchor_class = [int(rng.integers(0, n_classes)) for _ in range(n_anchors)]

    total = int(rng.integers(0, max_dets + 1))
    per_model: list[list[tuple[int, tuple, float]]] = [[] for _ in range(n_models)]
    for _ in range(total):
        m = int(rng.integers(0, n_models))
        mode = rng.uniform()
        if mode < 0.6 and anchors:
            a = int(rng.integers(0, n_anchors))
            box = jittered(rng, anchors[a], amount=float(rng.uniform(0.0, 4.0)))
            cls = anchor_class[a]
        elif mode < 0.75 and any(per_model):
            # Exact duplicate of an existing detection, any model.
            flat = [(mi, di) for mi, dets in enumerate(per_model) for di in range(len(dets))]
            if not flat:
                continue
            mi, di = flat[int(rng.integers(0, len(flat)))]
            cls, box, _ = per_model[mi][di]
        else:
            box = random_box(rng)
            cls = int(rng.integers(0, n_classes))
        score = float(rng.uniform(0.0, 1.0))
        per_model[m].append((cls, box, score))

    weights = [float(rng.uniform(0.05, 2.0)) for _ in range(n_models)]
    iou_thr = float(rng.uniform(0.3, 0.9))
    min_conf = float(rng.choice([0.0, 0.001, 0.05]))
    model_detections = [
        (f"model_{m}", per_model[m]) for m in range(n_models)
    ]
    return model_detections, weights, iou_thr, min_conf


def matching_instance(rng: np.random.Generator, max_dets: int = 10, max_gts: int = 5):
    """One random (image, class) matching instance with mostly-sparse
    overlap structure so exhaustive enumeration stays cheap."""
    n_gt = int(rng.integers(0, max_gts + 1))
    # Spaced anchors limit how many GTs a detection can overlap.
    gts = []
    for g in range(n_gt):
        base_x = 40.0 * g + float(rng.uniform(0.0, 10.0))
        base_y = float(rng.uniform(0.0, 20.0))
        w = float(rng.uniform(10.0, 30.0))
        h = float(rng.uniform(10.0, 30.0))
        gts.append((base_x, base_y, base_x + w, base_y + h))
    n_det = int(rng.integers(0, max_dets + 1))
    dets = []
    for _ in range(n_det):
        mode = rng.uniform()
        if mode < 0.7 and gts:
            g = int(rng.integers(0, n_gt))
            box = jittered(rng, gts[g], amount=float(rng.uniform(0.0, 8.0)))
        else:
            box = random_box(rng, span=40.0 * max(n_gt, 1) + 40.0)
        score = float(rng.choice([rng.uniform(), round(float(rng.uniform()), 1)]))
        dets.append((box, score))
    iou_thr = float(rng.uniform(0.3, 0.8))
    return dets, gts, iou_thr
