"""Domain records shared by every module.

All types are immutable values after construction and safe to share
across workers; every operation on them is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .geometry import BoundingBox

__all__ = [
    "ClassId",
    "ClassCatalog",
    "Detection",
    "GroundTruthBox",
    "GroundTruthSet",
    "ModelRun",
    "DatasetBundle",
]


@dataclass(frozen=True)
class ClassId:
    """One category: contiguous index plus human label.

    ``coco_id`` preserves the category id of the source annotation file
    so emission can round-trip it; synthetic catalogs use index + 1.
    """

    index: int
    name: str
    coco_id: int | None = None

    def __post_init__(self):
        if not self.name:
            raise ValidationError("class name must be nonempty")
        if self.index < 0:
            raise ValidationError(f"class index must be >= 0, got {self.index}")


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered list of classes, optionally with per-class instance counts."""

    classes: tuple[ClassId, ...]
    counts: tuple[int, ...] | None = None

    def __post_init__(self):
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate class names in catalog: {names}")
        for i, c in enumerate(self.classes):
            if c.index != i:
                raise ValidationError(
                    f"class {c.name!r} has index {c.index}, expected {i}"
                )
        if self.counts is not None:
            if len(self.counts) != len(self.classes):
                raise ValidationError(
                    f"{len(self.counts)} counts for {len(self.classes)} classes"
                )
            if any(n < 0 for n in self.counts):
                raise ValidationError("class counts must be nonnegative")

    @classmethod
    def from_names(cls, names: list[str] | tuple[str, ...],
                   counts: list[int] | None = None) -> "ClassCatalog":
        classes = tuple(
            ClassId(index=i, name=n, coco_id=i + 1) for i, n in enumerate(names)
        )
        return cls(classes=classes, counts=tuple(counts) if counts is not None else None)

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def by_name(self, name: str) -> ClassId:
        for c in self.classes:
            if c.name == name:
                return c
        raise ValidationError(f"unknown class name {name!r}")

    def by_coco_id(self, coco_id: int) -> ClassId:
        for c in self.classes:
            if c.coco_id == coco_id:
                return c
        raise ValidationError(f"unknown category id {coco_id}")

    def with_counts(self, counts: list[int] | tuple[int, ...]) -> "ClassCatalog":
        return ClassCatalog(classes=self.classes, counts=tuple(counts))

    def total_count(self) -> int:
        if self.counts is None:
            raise ValidationError("catalog has no counts")
        return sum(self.counts)


@dataclass(frozen=True)
class Detection:
    """A single model prediction."""

    image_id: str
    class_id: ClassId
    box: BoundingBox
    score: float
    model_id: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthBox:
    """One reference annotation."""

    image_id: str
    class_id: ClassId
    box: BoundingBox


@dataclass(frozen=True)
class GroundTruthSet:
    """Per-image reference boxes plus the class catalog.

    ``boxes_by_image`` keeps an entry for every declared image, including
    images with zero annotations, so false positives on empty images can
    be scored.
    """

    boxes_by_image: dict[str, tuple[GroundTruthBox, ...]]
    catalog: ClassCatalog

    def __post_init__(self):
        valid = set(self.catalog.classes)
        for image_id, boxes in self.boxes_by_image.items():
            for gt in boxes:
                if gt.class_id not in valid:
                    raise ValidationError(
                        f"ground-truth box in image {image_id!r} uses class "
                        f"{gt.class_id.name!r} not present in the catalog"
                    )

    @property
    def image_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.boxes_by_image))

    def boxes_for(self, image_id: str) -> tuple[GroundTruthBox, ...]:
        return self.boxes_by_image.get(image_id, ())

    def all_boxes(self) -> list[GroundTruthBox]:
        out: list[GroundTruthBox] = []
        for image_id in self.image_ids:
            out.extend(self.boxes_by_image[image_id])
        return out

    def class_instance_counts(self) -> list[int]:
        counts = [0] * len(self.catalog)
        for boxes in self.boxes_by_image.values():
            for gt in boxes:
                counts[gt.class_id.index] += 1
        return counts


@dataclass(frozen=True)
class ModelRun:
    """All detections of one model, plus its ensemble weight.

    ``clamped_scores`` counts scores that the parser had to clamp into
    [0, 1]; it is bookkeeping, not part of the run identity.
    """

    model_id: str
    detections: tuple[Detection, ...]
    ensemble_weight: float = 1.0
    clamped_scores: int = 0

    def __post_init__(self):
        if self.ensemble_weight < 0:
            raise ValidationError(
                f"ensemble weight must be >= 0, got {self.ensemble_weight}"
            )
        for det in self.detections:
            if det.model_id != self.model_id:
                raise ValidationError(
                    f"detection carries model_id {det.model_id!r}, "
                    f"run is {self.model_id!r}"
                )

    def __len__(self) -> int:
        return len(self.detections)

    @property
    def image_ids(self) -> tuple[str, ...]:
        return tuple(sorted({d.image_id for d in self.detections}))

    def restricted_to(self, image_id: str) -> "ModelRun":
        return ModelRun(
            model_id=self.model_id,
            detections=tuple(d for d in self.detections if d.image_id == image_id),
            ensemble_weight=self.ensemble_weight,
        )


@dataclass(frozen=True)
class DatasetBundle:
    """Ground truth plus the model runs that will be scored against it."""

    ground_truth: GroundTruthSet
    runs: tuple[ModelRun, ...] = field(default_factory=tuple)

    @property
    def catalog(self) -> ClassCatalog:
        return self.ground_truth.catalog

    def validate_images(self) -> None:
        """Reject detections on images the ground truth never declared."""
        known = set(self.ground_truth.boxes_by_image)
        unknown: set[str] = set()
        for run in self.runs:
            for det in run.detections:
                if det.image_id not in known:
                    unknown.add(det.image_id)
        if unknown:
            listing = ", ".join(sorted(unknown)[:10])
            raise ValidationError(
                f"{len(unknown)} detection image id(s) absent from ground truth: "
                f"{listing}"
            )
