"""Challenge-protocol evaluation: greedy IoU matching, PR curves, AP,
mAP50-95, and F1-optimal threshold selection.

Matching is one-to-one and greedy: detections in descending score order
each take the unmatched ground-truth box with the highest IoU at or
above the threshold. AP is the COCO-style 101-point interpolated area
under the precision-recall curve; mAP50-95 averages it over the classes
with ground truth and the ten IoU thresholds 0.50, 0.55, ..., 0.95.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .datamodel import Detection, GroundTruthBox, GroundTruthSet, ModelRun
from .errors import ConfigurationError, EvaluationError, ValidationError
from .geometry import iou

logger = logging.getLogger(__name__)

__all__ = [
    "EvalConfig",
    "MatchResult",
    "DetectionMatch",
    "PrCurve",
    "PrPoint",
    "ClassMetrics",
    "F1Report",
    "MetricsReport",
    "match_class_image",
    "pr_curve",
    "average_precision",
    "map_50_95",
    "f1_optimal_threshold",
]

IOU_LADDER: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol knobs; defaults reproduce the challenge
    settings (confidence floor 0.001, the 10-threshold ladder, PR
    analysis at IoU 0.5)."""

    min_confidence: float = 0.001
    iou_thresholds: tuple[float, ...] = IOU_LADDER
    pr_iou: float = 0.5
    interpolation: str = "coco101"  # or "trapezoid"
    max_detections_per_image: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.min_confidence < 1.0:
            raise ConfigurationError(
                f"min confidence must be in [0, 1), got {self.min_confidence}"
            )
        ts = self.iou_thresholds
        if not ts or any(not 0.0 < t <= 1.0 for t in ts):
            raise ConfigurationError(f"IoU thresholds must lie in (0, 1]: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError(f"IoU thresholds must be strictly increasing: {ts}")
        if not 0.0 < self.pr_iou <= 1.0:
            raise ConfigurationError(f"PR IoU must be in (0, 1], got {self.pr_iou}")
        if self.interpolation not in ("coco101", "trapezoid"):
            raise ConfigurationError(f"unknown AP interpolation {self.interpolation!r}")
        if self.max_detections_per_image is not None and self.max_detections_per_image < 0:
            raise ConfigurationError("detection cap must be >= 0")


@dataclass(frozen=True)
class DetectionMatch:
    """Outcome for one detection at one IoU threshold, in input order."""

    is_tp: bool
    gt_index: int | None
    iou: float


@dataclass(frozen=True)
class MatchResult:
    """Matching of one (image, class) detection list against its GTs."""

    matches: tuple[DetectionMatch, ...]
    fn_count: int

    @property
    def tp_count(self) -> int:
        return sum(1 for m in self.matches if m.is_tp)


def match_class_image(
    dets: list[Detection],
    gts: list[GroundTruthBox],
    iou_threshold: float,
) -> MatchResult:
    """Greedy one-to-one matching for a single image and class.

    Detections are processed in descending score (ties keep input
    order); each takes the unmatched GT with the highest IoU >= the
    threshold, lowest GT index on IoU ties.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    results: list[DetectionMatch | None] = [None] * len(dets)
    for i in order:
        det = dets[i]
        best_iou = 0.0
        best_j = None
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            overlap = iou(det.box, gt.box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j is not None:
            taken[best_j] = True
            results[i] = DetectionMatch(is_tp=True, gt_index=best_j, iou=best_iou)
        else:
            results[i] = DetectionMatch(is_tp=False, gt_index=None, iou=0.0)
    fn = sum(1 for t in taken if not t)
    return MatchResult(matches=tuple(results), fn_count=fn)


@dataclass(frozen=True)
class PrPoint:
    confidence: float
    precision: float
    recall: float


@dataclass(frozen=True)
class PrCurve:
    """Precision/recall trace over descending confidence, one point per
    detection."""

    class_name: str
    iou_threshold: float
    points: tuple[PrPoint, ...]
    gt_count: int

    def operating_points(self) -> list[PrPoint]:
        """One row per distinct confidence: the cumulative operating
        point after every detection scoring >= that confidence."""
        out: list[PrPoint] = []
        for p in self.points:
            if out and out[-1].confidence == p.confidence:
                out[-1] = p
            else:
                out.append(p)
        return out


def _class_flags(
    dets: list[Detection],
    gts_by_image: dict[str, list[GroundTruthBox]],
    iou_threshold: float,
) -> list[bool]:
    """TP/FP flags for one class, aligned with ``dets`` (already sorted
    by descending score). Matching is per image; because greedy
    processing is score-descending, the flags of any score prefix never
    depend on lower-scoring detections."""
    by_image: dict[str, list[int]] = {}
    for i, det in enumerate(dets):
        by_image.setdefault(det.image_id, []).append(i)
    flags = [False] * len(dets)
    for image_id, indices in by_image.items():
        image_dets = [dets[i] for i in indices]
        result = match_class_image(
            image_dets, gts_by_image.get(image_id, []), iou_threshold
        )
        for i, m in zip(indices, result.matches):
            flags[i] = m.is_tp
    return flags


def _sorted_class_detections(
    run: ModelRun, class_index: int, config: EvalConfig
) -> list[Detection]:
    dets = [
        d
        for d in run.detections
        if d.class_id.index == class_index and d.score >= config.min_confidence
    ]
    dets.sort(key=lambda d: -d.score)  # stable: ties keep input order
    return dets


def _apply_detection_cap(run: ModelRun, config: EvalConfig) -> ModelRun:
    cap = config.max_detections_per_image
    if cap is None:
        return run
    by_image: dict[str, list[Detection]] = {}
    for det in run.detections:
        by_image.setdefault(det.image_id, []).append(det)
    kept: list[Detection] = []
    for image_id in sorted(by_image):
        dets = sorted(by_image[image_id], key=lambda d: -d.score)
        kept.extend(dets[:cap])
    return ModelRun(
        model_id=run.model_id,
        detections=tuple(kept),
        ensemble_weight=run.ensemble_weight,
    )


def pr_curve(
    dets: list[Detection],
    gts: GroundTruthSet,
    iou_threshold: float,
    class_name: str | None = None,
) -> PrCurve:
    """PR curve for one class: detections pooled across images, sorted
    by descending score, cumulative precision/recall per prefix."""
    names = {d.class_id.name for d in dets}
    if class_name is None:
        if len(names) != 1:
            raise EvaluationError(
                f"pr_curve needs detections of exactly one class, got {sorted(names)}"
            )
        class_name = next(iter(names))
    elif names - {class_name}:
        raise EvaluationError(
            f"detections of classes {sorted(names)} passed for class {class_name!r}"
        )

    cls = gts.catalog.by_name(class_name)
    gts_by_image = _gts_by_image_for_class(gts, cls.index)
    gt_count = sum(len(v) for v in gts_by_image.values())
    if gt_count == 0:
        raise EvaluationError(
            f"class {class_name!r} has no ground-truth instances; "
            f"its PR curve is undefined"
        )

    ordered = sorted(dets, key=lambda d: -d.score)
    flags = _class_flags(ordered, gts_by_image, iou_threshold)
    points = _cumulative_points(ordered, flags, gt_count)
    return PrCurve(
        class_name=class_name,
        iou_threshold=iou_threshold,
        points=tuple(points),
        gt_count=gt_count,
    )


def _cumulative_points(
    ordered: list[Detection], flags: list[bool], gt_count: int
) -> list[PrPoint]:
    points = []
    tp = 0
    for n, (det, is_tp) in enumerate(zip(ordered, flags), start=1):
        tp += int(is_tp)
        points.append(PrPoint(det.score, tp / n, tp / gt_count))
    return points


def _ap_from_arrays(
    precision: np.ndarray, recall: np.ndarray, interpolation: str
) -> float:
    if len(precision) == 0:
        return 0.0
    if interpolation == "coco101":
        # Precision envelope: best precision at any recall >= r.
        envelope = np.maximum.accumulate(precision[::-1])[::-1]
        grid = np.linspace(0.0, 1.0, 101)
        idx = np.searchsorted(recall, grid, side="left")
        clamped = np.minimum(idx, len(envelope) - 1)
        values = np.where(idx < len(envelope), envelope[clamped], 0.0)
        return float(np.mean(values))
    # Raw trapezoidal area under the (recall, precision) trace with a
    # (0, p0) anchor, no envelope.
    r = np.concatenate(([0.0], recall))
    p = np.concatenate(([precision[0]], precision))
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(p, r))


def average_precision(curve: PrCurve, interpolation: str = "coco101") -> float:
    """Area under a PR curve; COCO 101-point interpolation by default."""
    precision = np.array([p.precision for p in curve.points], dtype=float)
    recall = np.array([p.recall for p in curve.points], dtype=float)
    return _ap_from_arrays(precision, recall, interpolation)


@dataclass(frozen=True)
class ClassMetrics:
    class_name: str
    gt_count: int
    ap_by_iou: dict[float, float]
    ap50: float

    @property
    def mean_ap(self) -> float:
        return sum(self.ap_by_iou.values()) / len(self.ap_by_iou)


@dataclass(frozen=True)
class F1Report:
    threshold: float
    micro_f1: float
    precision: float
    recall: float
    per_class: dict[str, tuple[float, float]]  # name -> (precision, recall)


@dataclass(frozen=True)
class MetricsReport:
    """Everything the evaluation protocol produces for one run."""

    model_id: str
    iou_thresholds: tuple[float, ...]
    per_class: dict[str, ClassMetrics]
    map_50_95: float
    map50: float
    pooled_ap50: float
    f1: F1Report
    evaluated_classes: tuple[str, ...]
    skipped_classes: tuple[str, ...]
    pr_curves: dict[str, PrCurve] = field(default_factory=dict)


def _evaluated_class_indices(gts: GroundTruthSet) -> tuple[list[int], list[int]]:
    counts = gts.class_instance_counts()
    evaluated = [i for i, n in enumerate(counts) if n > 0]
    skipped = [i for i, n in enumerate(counts) if n == 0]
    return evaluated, skipped


def _gts_by_image_for_class(
    gts: GroundTruthSet, class_index: int
) -> dict[str, list[GroundTruthBox]]:
    out: dict[str, list[GroundTruthBox]] = {}
    for image_id, boxes in gts.boxes_by_image.items():
        class_boxes = [b for b in boxes if b.class_id.index == class_index]
        if class_boxes:
            out[image_id] = class_boxes
    return out


def map_50_95(
    run: ModelRun,
    gts: GroundTruthSet,
    config: EvalConfig | None = None,
    max_workers: int = 1,
) -> MetricsReport:
    """Full challenge-protocol evaluation of one run.

    Classes with zero ground-truth instances are excluded from every
    average; their detections count as neither TP nor FP. Work is
    parallelizable over (class, threshold) pairs; results are merged in
    a fixed order so they do not depend on ``max_workers``.
    """
    config = config or EvalConfig()
    known_images = set(gts.boxes_by_image)
    unknown = sorted({d.image_id for d in run.detections} - known_images)
    if unknown:
        raise ValidationError(
            f"detections reference image(s) absent from ground truth: "
            f"{', '.join(unknown[:10])}"
        )

    evaluated, skipped = _evaluated_class_indices(gts)
    if not evaluated:
        raise EvaluationError("no class has any ground-truth instance")
    catalog = gts.catalog
    for i in skipped:
        if any(d.class_id.index == i for d in run.detections):
            logger.warning(
                "class %r has no ground truth; its detections are ignored",
                catalog.classes[i].name,
            )

    run = _apply_detection_cap(run, config)
    class_dets = {i: _sorted_class_detections(run, i, config) for i in evaluated}
    class_gts = {i: _gts_by_image_for_class(gts, i) for i in evaluated}
    counts = gts.class_instance_counts()

    thresholds = list(config.iou_thresholds)
    extra_pr = config.pr_iou not in config.iou_thresholds
    if extra_pr:
        thresholds.append(config.pr_iou)
    tasks = [(i, t) for i in evaluated for t in thresholds]

    def flags_for(task: tuple[int, float]) -> list[bool]:
        i, t = task
        return _class_flags(class_dets[i], class_gts[i], t)

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            all_flags = list(pool.map(flags_for, tasks))
    else:
        all_flags = [flags_for(task) for task in tasks]
    flags_by_task = dict(zip(tasks, all_flags))

    per_class: dict[str, ClassMetrics] = {}
    pr_curves: dict[str, PrCurve] = {}
    pr_class_flags: dict[int, list[bool]] = {}
    for i in evaluated:
        name = catalog.classes[i].name
        n_gt = counts[i]
        ap_by_iou: dict[float, float] = {}
        for t in config.iou_thresholds:
            flags = flags_by_task[(i, t)]
            tp_cum = np.cumsum(np.asarray(flags, dtype=float))
            n = np.arange(1, len(flags) + 1, dtype=float)
            ap_by_iou[t] = _ap_from_arrays(tp_cum / n, tp_cum / n_gt, config.interpolation)
        pr_flags = flags_by_task[(i, config.pr_iou)]
        pr_class_flags[i] = pr_flags
        points = _cumulative_points(class_dets[i], pr_flags, n_gt)
        pr_curves[name] = PrCurve(
            class_name=name,
            iou_threshold=config.pr_iou,
            points=tuple(points),
            gt_count=n_gt,
        )
        ap50 = ap_by_iou.get(
            0.5,
            _ap_from_arrays(
                np.array([p.precision for p in points], dtype=float),
                np.array([p.recall for p in points], dtype=float),
                config.interpolation,
            ),
        )
        per_class[name] = ClassMetrics(
            class_name=name, gt_count=n_gt, ap_by_iou=ap_by_iou, ap50=ap50
        )

    map_value = sum(m.mean_ap for m in per_class.values()) / len(per_class)
    map50 = sum(m.ap50 for m in per_class.values()) / len(per_class)
    pooled_ap50 = _pooled_ap(class_dets, pr_class_flags, counts, evaluated, config)
    f1 = _f1_from_flags(class_dets, pr_class_flags, counts, evaluated, catalog,
                        config.pr_iou)

    return MetricsReport(
        model_id=run.model_id,
        iou_thresholds=tuple(config.iou_thresholds),
        per_class=per_class,
        map_50_95=map_value,
        map50=map50,
        pooled_ap50=pooled_ap50,
        f1=f1,
        evaluated_classes=tuple(catalog.classes[i].name for i in evaluated),
        skipped_classes=tuple(catalog.classes[i].name for i in skipped),
        pr_curves=pr_curves,
    )


def _pooled_ap(class_dets, pr_class_flags, counts, evaluated, config: EvalConfig) -> float:
    """All classes pooled into a single PR sweep at the PR IoU; TP/FP
    flags still come from per-class matching."""
    pooled: list[tuple[float, bool]] = []
    total_gt = 0
    for i in evaluated:
        pooled.extend(
            (d.score, f) for d, f in zip(class_dets[i], pr_class_flags[i])
        )
        total_gt += counts[i]
    if not pooled or total_gt == 0:
        return 0.0
    pooled.sort(key=lambda sf: -sf[0])
    tp_cum = np.cumsum([1.0 if f else 0.0 for _, f in pooled])
    n = np.arange(1, len(pooled) + 1, dtype=float)
    return _ap_from_arrays(tp_cum / n, tp_cum / total_gt, config.interpolation)


def _f1_from_flags(
    class_dets, pr_class_flags, counts, evaluated, catalog, pr_iou: float
) -> F1Report:
    """Sweep candidate thresholds (distinct scores plus 0) and pick the
    micro-F1 maximizer; ties go to the largest threshold."""
    events: list[tuple[float, int, bool]] = []  # (score, class index, is TP)
    for i in evaluated:
        events.extend(
            (d.score, i, f) for d, f in zip(class_dets[i], pr_class_flags[i])
        )
    events.sort(key=lambda e: -e[0])
    total_gt = sum(counts[i] for i in evaluated)

    candidates = sorted({s for s, _, _ in events} | {0.0}, reverse=True)
    best_f1 = -1.0
    best_threshold = 0.0
    tp = fp = 0
    pos = 0
    for threshold in candidates:
        while pos < len(events) and events[pos][0] >= threshold:
            if events[pos][2]:
                tp += 1
            else:
                fp += 1
            pos += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / total_gt if total_gt else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        if f1 > best_f1:  # strict: descending sweep keeps the largest threshold
            best_f1 = f1
            best_threshold = threshold

    # Per-class operating point at the chosen threshold.
    per_class: dict[str, tuple[float, float]] = {}
    tp = fp = 0
    for i in evaluated:
        ctp = cfp = 0
        for det, is_tp in zip(class_dets[i], pr_class_flags[i]):
            if det.score >= best_threshold:
                if is_tp:
                    ctp += 1
                else:
                    cfp += 1
        tp += ctp
        fp += cfp
        name = catalog.classes[i].name
        c_precision = ctp / (ctp + cfp) if ctp + cfp else 0.0
        c_recall = ctp / counts[i] if counts[i] else 0.0
        per_class[name] = (c_precision, c_recall)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / total_gt if total_gt else 0.0
    micro_f1 = (
        2 * precision * recall / (precision + recall) if precision + recall else 0.0
    )
    return F1Report(
        threshold=best_threshold,
        micro_f1=micro_f1,
        precision=precision,
        recall=recall,
        per_class=per_class,
    )


def f1_optimal_threshold(
    run: ModelRun,
    gts: GroundTruthSet,
    iou_threshold: float = 0.5,
    min_confidence: float = 0.0,
) -> F1Report:
    """Confidence threshold maximizing micro-averaged F1 at one IoU.

    Candidates are the distinct detection scores plus 0; ties prefer
    the largest threshold. Per-class precision/recall are reported at
    the chosen operating point.
    """
    config = EvalConfig(min_confidence=min_confidence, pr_iou=iou_threshold)
    evaluated, _ = _evaluated_class_indices(gts)
    if not evaluated:
        raise EvaluationError("no class has any ground-truth instance")
    catalog = gts.catalog
    class_dets = {i: _sorted_class_detections(run, i, config) for i in evaluated}
    counts = gts.class_instance_counts()
    flags = {
        i: _class_flags(class_dets[i], _gts_by_image_for_class(gts, i), iou_threshold)
        for i in evaluated
    }
    return _f1_from_flags(class_dets, flags, counts, evaluated, catalog, iou_threshold)
