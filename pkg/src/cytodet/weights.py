"""Class-imbalance weighting schemes and per-image sampling weights.

Two schemes over per-class instance counts c_k (total N = sum c_i):

* ``loss_log``:     w_k = -log(c_k / N)   (natural log by default; the
  base only rescales every weight by a constant, so it is configurable)
* ``sampler_sqrt``: w_k = sqrt(N / c_k)

Image sampling weights aggregate ``sampler_sqrt`` class weights with the
arithmetic mean over the distinct classes present in each image, then
normalize to a probability distribution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .datamodel import ClassCatalog, GroundTruthSet
from .errors import ConfigurationError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "ClassWeight",
    "ClassWeightTable",
    "ImageWeight",
    "ImageWeightTable",
    "loss_weights",
    "sampler_weights",
    "image_sampling_weights",
    "counts_from_ground_truth",
]

SCHEME_LOSS_LOG = "loss_log"
SCHEME_SAMPLER_SQRT = "sampler_sqrt"


@dataclass(frozen=True)
class ClassWeight:
    name: str
    count: int
    frequency: float
    weight: float


@dataclass(frozen=True)
class ClassWeightTable:
    """Per-class weights under one scheme, with provenance counts."""

    scheme: str
    entries: tuple[ClassWeight, ...]
    total_count: int
    log_base: float | None = None

    def weight_for(self, name: str) -> float:
        for e in self.entries:
            if e.name == name:
                return e.weight
        raise ConfigurationError(f"class {name!r} missing from weight table")

    def as_dict(self) -> dict[str, float]:
        return {e.name: e.weight for e in self.entries}


@dataclass(frozen=True)
class ImageWeight:
    image_id: str
    weight: float
    probability: float


@dataclass(frozen=True)
class ImageWeightTable:
    """Raw per-image weights and their normalization to a distribution."""

    entries: tuple[ImageWeight, ...]
    normalization: float

    def probability_for(self, image_id: str) -> float:
        for e in self.entries:
            if e.image_id == image_id:
                return e.probability
        raise ConfigurationError(f"image {image_id!r} missing from weight table")


def _checked_counts(catalog: ClassCatalog) -> tuple[list[int], int]:
    if catalog.counts is None:
        raise ValidationError("catalog carries no class counts")
    counts = list(catalog.counts)
    total = sum(counts)
    if total <= 0:
        raise ValidationError("total class count must be positive")
    for cls, c in zip(catalog.classes, counts):
        if c == 0:
            raise ValidationError(
                f"class {cls.name!r} has zero instances; its weight is undefined"
            )
    return counts, total


def loss_weights(catalog: ClassCatalog, log_base: float = math.e) -> ClassWeightTable:
    """Loss-reweighting class weights: w_k = -log(c_k / N)."""
    if log_base <= 0 or log_base == 1.0:
        raise ConfigurationError(f"log base must be positive and != 1, got {log_base}")
    counts, total = _checked_counts(catalog)
    entries = []
    for cls, c in zip(catalog.classes, counts):
        p = c / total
        w = -math.log(p) / math.log(log_base)
        if w == 0.0:
            logger.warning(
                "class %r has frequency 1.0; its loss weight degenerates to 0",
                cls.name,
            )
        entries.append(ClassWeight(name=cls.name, count=c, frequency=p, weight=w))
    return ClassWeightTable(
        scheme=SCHEME_LOSS_LOG,
        entries=tuple(entries),
        total_count=total,
        log_base=log_base,
    )


def sampler_weights(catalog: ClassCatalog) -> ClassWeightTable:
    """Sampler class weights: w_k = sqrt(N / c_k)."""
    counts, total = _checked_counts(catalog)
    entries = []
    for cls, c in zip(catalog.classes, counts):
        entries.append(
            ClassWeight(
                name=cls.name,
                count=c,
                frequency=c / total,
                weight=math.sqrt(total / c),
            )
        )
    return ClassWeightTable(
        scheme=SCHEME_SAMPLER_SQRT, entries=tuple(entries), total_count=total
    )


def image_sampling_weights(
    gts: GroundTruthSet,
    class_table: ClassWeightTable,
    per_instance: bool = False,
) -> ImageWeightTable:
    """Per-image sampling weights from sampler-scheme class weights.

    Each image's raw weight is the arithmetic mean of the weights of the
    distinct classes it contains (``per_instance=True`` averages over
    object instances instead). Images with no objects receive the
    minimum nonzero image weight so they stay sampleable. Weights are
    then normalized to sum to 1.
    """
    if class_table.scheme != SCHEME_SAMPLER_SQRT:
        raise ConfigurationError(
            f"image sampling weights require scheme {SCHEME_SAMPLER_SQRT!r}, "
            f"got {class_table.scheme!r}"
        )
    by_name = class_table.as_dict()
    for cls in gts.catalog.classes:
        if cls.name not in by_name:
            raise ConfigurationError(
                f"class {cls.name!r} appears in ground truth but not in the "
                f"weight table"
            )

    image_ids = sorted(gts.boxes_by_image)
    raw: dict[str, float | None] = {}
    for image_id in image_ids:
        boxes = gts.boxes_by_image[image_id]
        if not boxes:
            raw[image_id] = None  # filled with the minimum weight below
            continue
        if per_instance:
            values = [by_name[gt.class_id.name] for gt in boxes]
        else:
            present = sorted({gt.class_id.name for gt in boxes})
            values = [by_name[name] for name in present]
        raw[image_id] = sum(values) / len(values)

    positive = [w for w in raw.values() if w is not None and w > 0]
    floor = min(positive) if positive else 1.0
    weights = {iid: (w if w is not None else floor) for iid, w in raw.items()}

    total = math.fsum(weights.values())
    if total <= 0:
        raise ConfigurationError("all image weights are zero; cannot normalize")
    entries = tuple(
        ImageWeight(image_id=iid, weight=weights[iid], probability=weights[iid] / total)
        for iid in image_ids
    )
    return ImageWeightTable(entries=entries, normalization=total)


def counts_from_ground_truth(gts: GroundTruthSet) -> ClassCatalog:
    """Catalog with c_k = number of ground-truth boxes of class k."""
    return gts.catalog.with_counts(gts.class_instance_counts())
