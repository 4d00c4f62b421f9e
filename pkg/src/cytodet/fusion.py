"""Weighted boxes fusion of multiple model runs.

Fusion of one image proceeds per class:

1. Every detection gets an effective confidence = score x model weight
   (weights divided by their mean when normalization is on, so equal
   weights leave scores untouched).
2. Detections with effective confidence below the floor are dropped.
3. Remaining detections are processed in descending effective
   confidence (ties: model_id, then input index). Each joins the
   cluster whose current fused box has the highest IoU >= the fusion
   threshold (IoU ties: earliest-created cluster), else starts a new
   cluster.
4. A cluster's fused box is the effective-confidence-weighted average
   of its members' corner coordinates, and is recomputed as members
   join, so later candidates are compared against the running average.
5. A cluster's fused score is mean(member effective confidences)
   scaled by min(T, N) / N, where T is the member count and N the
   number of models with positive weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .datamodel import ClassId, Detection, ModelRun
from .errors import ConfigurationError
from .geometry import BoundingBox, iou

__all__ = ["FusionConfig", "FusionCluster", "fuse_image", "fuse_image_clusters",
           "fuse_dataset"]

ENSEMBLE_MODEL_ID = "ensemble"


@dataclass(frozen=True)
class FusionConfig:
    """Knobs of the fusion step.

    ``model_weights`` aligns positionally with the runs being fused;
    ``None`` means every model weighs 1. ``weight_normalization``
    divides the weights by their mean before use so that only their
    ratios matter and the confidence scale is preserved; disable it to
    apply raw weights directly (the floor then interacts with the
    weight magnitudes).
    """

    iou_fuse_threshold: float = 0.7
    min_confidence: float = 0.001
    model_weights: tuple[float, ...] | None = None
    weight_normalization: bool = True

    def __post_init__(self):
        if not 0.0 < self.iou_fuse_threshold <= 1.0:
            raise ConfigurationError(
                f"fusion IoU threshold must be in (0, 1], got {self.iou_fuse_threshold}"
            )
        if not 0.0 <= self.min_confidence < 1.0:
            raise ConfigurationError(
                f"minimum confidence must be in [0, 1), got {self.min_confidence}"
            )
        if self.model_weights is not None:
            if any(w < 0 for w in self.model_weights):
                raise ConfigurationError("model weights must be nonnegative")
            if not any(w > 0 for w in self.model_weights):
                raise ConfigurationError("at least one model weight must be positive")

    def resolved_weights(self, runs: list[ModelRun]) -> tuple[float, ...]:
        """Per-run weights after the optional mean-1 normalization.

        Falls back to each run's ``ensemble_weight`` when the config
        carries no explicit weights.
        """
        if self.model_weights is None:
            weights = tuple(run.ensemble_weight for run in runs)
        else:
            if len(self.model_weights) != len(runs):
                raise ConfigurationError(
                    f"{len(self.model_weights)} model weights for {len(runs)} runs"
                )
            weights = self.model_weights
        if not weights:
            raise ConfigurationError("cannot fuse zero runs")
        if not any(w > 0 for w in weights):
            raise ConfigurationError("at least one model weight must be positive")
        if self.weight_normalization:
            if max(weights) == min(weights):
                # Exactly neutral under equal weights, no rounding.
                return (1.0,) * len(runs)
            # fsum: the mean must not depend on the order of the runs.
            mean = math.fsum(weights) / len(weights)
            return tuple(w / mean for w in weights)
        return tuple(weights)


@dataclass
class FusionCluster:
    """One group of mutually-fused detections of a single class."""

    class_id: ClassId
    members: list[tuple[Detection, float]] = field(default_factory=list)
    # Running sums keyed by effective confidence, so the fused box is
    # always the weighted average of the members seen so far.
    _conf_sum: float = 0.0
    _coord_sums: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def add(self, det: Detection, eff_conf: float) -> None:
        self.members.append((det, eff_conf))
        self._conf_sum += eff_conf
        sx1, sy1, sx2, sy2 = self._coord_sums
        b = det.box
        self._coord_sums = (
            sx1 + eff_conf * b.x_min,
            sy1 + eff_conf * b.y_min,
            sx2 + eff_conf * b.x_max,
            sy2 + eff_conf * b.y_max,
        )

    @property
    def size(self) -> int:
        return len(self.members)

    def fused_box(self) -> BoundingBox:
        sx1, sy1, sx2, sy2 = self._coord_sums
        c = self._conf_sum
        return BoundingBox(sx1 / c, sy1 / c, sx2 / c, sy2 / c)

    def fused_score(self, n_models: int) -> float:
        mean = self._conf_sum / len(self.members)
        score = mean * min(len(self.members), n_models) / n_models
        return min(max(score, 0.0), 1.0)


def _effective_detections(
    runs: list[ModelRun], config: FusionConfig
) -> tuple[list[tuple[Detection, float]], int]:
    """Surviving (detection, effective confidence) pairs in processing
    order, plus the count of positively-weighted models."""
    weights = config.resolved_weights(runs)
    n_models = sum(1 for w in weights if w > 0)

    keyed = []
    for run, w in zip(runs, weights):
        for index, det in enumerate(run.detections):
            eff = det.score * w
            if eff < config.min_confidence:
                continue
            keyed.append(((-eff, det.model_id, index), det, eff))
    keyed.sort(key=lambda item: item[0])
    return [(det, eff) for _, det, eff in keyed], n_models


def fuse_image_clusters(
    runs: list[ModelRun], config: FusionConfig
) -> tuple[list[FusionCluster], int]:
    """Cluster the detections of one image. Returns the clusters in
    creation order and the positively-weighted model count N."""
    image_ids = {d.image_id for run in runs for d in run.detections}
    if len(image_ids) > 1:
        raise ConfigurationError(
            f"fuse_image expects detections of a single image, got {sorted(image_ids)}"
        )
    survivors, n_models = _effective_detections(runs, config)

    clusters_by_class: dict[int, list[FusionCluster]] = {}
    all_clusters: list[FusionCluster] = []
    for det, eff in survivors:
        clusters = clusters_by_class.setdefault(det.class_id.index, [])
        best = None
        best_iou = 0.0
        for cluster in clusters:  # creation order, so ties keep the earliest
            overlap = iou(cluster.fused_box(), det.box)
            if overlap >= config.iou_fuse_threshold and overlap > best_iou:
                best = cluster
                best_iou = overlap
        if best is None:
            best = FusionCluster(class_id=det.class_id)
            clusters.append(best)
            all_clusters.append(best)
        best.add(det, eff)
    return all_clusters, n_models


def fuse_image(runs: list[ModelRun], config: FusionConfig) -> list[Detection]:
    """Fuse the runs' detections for a single image.

    The result is sorted by descending fused score; scores are clamped
    to [0, 1].
    """
    clusters, n_models = fuse_image_clusters(runs, config)
    fused = []
    for cluster in clusters:
        box = cluster.fused_box()
        image_id = cluster.members[0][0].image_id
        fused.append(
            Detection(
                image_id=image_id,
                class_id=cluster.class_id,
                box=box,
                score=cluster.fused_score(n_models),
                model_id=ENSEMBLE_MODEL_ID,
            )
        )
    fused.sort(
        key=lambda d: (
            -d.score,
            d.class_id.index,
            d.box.x_min,
            d.box.y_min,
            d.box.x_max,
            d.box.y_max,
        )
    )
    return fused


def fuse_dataset(
    runs: list[ModelRun], config: FusionConfig, max_workers: int = 1
) -> ModelRun:
    """Fuse every image present in any run, independently per image.

    Images are processed in sorted image-id order and results merged in
    that order, so the output does not depend on ``max_workers``.
    """
    if not runs:
        raise ConfigurationError("cannot fuse zero runs")
    config.resolved_weights(runs)  # fail fast on weight/run mismatch

    # Runs must agree on what each class index means.
    index_names: dict[int, str] = {}
    for run in runs:
        for d in run.detections:
            seen = index_names.setdefault(d.class_id.index, d.class_id.name)
            if seen != d.class_id.name:
                raise ConfigurationError(
                    f"runs disagree on class index {d.class_id.index}: "
                    f"{seen!r} vs {d.class_id.name!r} (parse them against one catalog)"
                )

    image_ids = sorted({d.image_id for run in runs for d in run.detections})

    def fuse_one(image_id: str) -> list[Detection]:
        per_image = [run.restricted_to(image_id) for run in runs]
        return fuse_image(per_image, config)

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(fuse_one, image_ids))
    else:
        results = [fuse_one(image_id) for image_id in image_ids]

    detections: list[Detection] = []
    for image_result in results:
        detections.extend(image_result)
    return ModelRun(model_id=ENSEMBLE_MODEL_ID, detections=tuple(detections))
