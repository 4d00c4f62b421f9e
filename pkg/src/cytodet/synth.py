"""Seeded synthetic ground truth and simulated noisy detectors.

Everything is drawn from a single ``numpy.random.default_rng(seed)``
(PCG64) in one documented order, so a scenario is a pure function of
its config and regeneration is bit-identical:

for each image (in order):
    1. object count ~ integers(min, max) inclusive
    2. per object: class ~ choice(frequencies), then width, height,
       x_min, y_min ~ uniform over the in-bounds range (boxes never
       cross the image border by construction)
    3. per detector (in declared order):
       a. per ground-truth object: emission ~ uniform(0,1) against the
          class detection probability; if emitted, four corner jitters
          ~ uniform(-j, +j), then confidence ~ normal(tp mean, tp
          spread) clipped to [0, 1]
       b. false-positive count ~ poisson(rate)
       c. per false positive: class ~ integers(0, K), box drawn like a
          ground-truth box, confidence ~ normal(fp mean, fp spread)
          clipped

Do not reorder or vectorize these draws: the order is part of the
determinism contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .datamodel import (
    ClassCatalog,
    Detection,
    GroundTruthBox,
    GroundTruthSet,
    ModelRun,
)
from .errors import ConfigurationError
from .geometry import BoundingBox
from .riva import RIVA_CLASS_COUNTS, RIVA_IMAGE_SIZE

__all__ = ["DetectorProfile", "ScenarioConfig", "Scenario", "generate",
           "riva_profile", "jitter_iou_floor"]


@dataclass(frozen=True)
class DetectorProfile:
    """One simulated detector.

    ``detection_prob`` is per class (recall knob); ``jitter`` perturbs
    every emitted corner coordinate by uniform(-jitter, +jitter) pixels.
    True positives and false positives draw confidence from separate
    clipped normal distributions, the false-positive mean lower, which
    gives PR sweeps a realistic score ranking.
    """

    model_id: str
    detection_prob: tuple[float, ...]
    fp_rate: float
    jitter: float
    tp_conf: tuple[float, float] = (0.7, 0.15)  # mean, spread
    fp_conf: tuple[float, float] = (0.3, 0.12)

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.detection_prob):
            raise ConfigurationError("detection probabilities must be in [0, 1]")
        if self.fp_rate < 0:
            raise ConfigurationError("false-positive rate must be >= 0")
        if self.jitter < 0:
            raise ConfigurationError("jitter must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "detection_prob": list(self.detection_prob),
            "fp_rate": self.fp_rate,
            "jitter": self.jitter,
            "tp_conf": list(self.tp_conf),
            "fp_conf": list(self.fp_conf),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DetectorProfile":
        return cls(
            model_id=str(data["model_id"]),
            detection_prob=tuple(float(p) for p in data["detection_prob"]),
            fp_rate=float(data["fp_rate"]),
            jitter=float(data["jitter"]),
            tp_conf=tuple(float(v) for v in data.get("tp_conf", (0.7, 0.15))),
            fp_conf=tuple(float(v) for v in data.get("fp_conf", (0.3, 0.12))),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    num_images: int
    image_size: tuple[int, int]
    class_names: tuple[str, ...]
    class_frequencies: tuple[float, ...]
    objects_per_image: tuple[int, int]
    box_size: tuple[float, float]
    detectors: tuple[DetectorProfile, ...]

    def __post_init__(self):
        k = len(self.class_names)
        if len(self.class_frequencies) != k:
            raise ConfigurationError(
                f"{len(self.class_frequencies)} frequencies for {k} classes"
            )
        if any(f < 0 for f in self.class_frequencies):
            raise ConfigurationError("class frequencies must be nonnegative")
        if not any(f > 0 for f in self.class_frequencies):
            raise ConfigurationError("at least one class frequency must be positive")
        if self.num_images < 0:
            raise ConfigurationError("image count must be >= 0")
        lo, hi = self.objects_per_image
        if lo < 0 or hi < lo:
            raise ConfigurationError(f"bad objects-per-image range ({lo}, {hi})")
        smin, smax = self.box_size
        w, h = self.image_size
        if smin <= 0 or smax < smin:
            raise ConfigurationError(f"bad box size range ({smin}, {smax})")
        if smax > min(w, h):
            raise ConfigurationError(
                f"box size up to {smax} cannot fit a {w}x{h} image"
            )
        for det in self.detectors:
            if len(det.detection_prob) != k:
                raise ConfigurationError(
                    f"detector {det.model_id!r} has {len(det.detection_prob)} "
                    f"detection probabilities for {k} classes"
                )
            if det.jitter * 2 >= smin:
                raise ConfigurationError(
                    f"detector {det.model_id!r} jitter {det.jitter} too large for "
                    f"minimum box size {smin} (needs 2*jitter < min size)"
                )

    def catalog(self) -> ClassCatalog:
        return ClassCatalog.from_names(list(self.class_names))

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "num_images": self.num_images,
            "image_size": list(self.image_size),
            "class_names": list(self.class_names),
            "class_frequencies": list(self.class_frequencies),
            "objects_per_image": list(self.objects_per_image),
            "box_size": list(self.box_size),
            "detectors": [d.to_dict() for d in self.detectors],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        return cls(
            seed=int(data["seed"]),
            num_images=int(data["num_images"]),
            image_size=tuple(int(v) for v in data["image_size"]),
            class_names=tuple(str(n) for n in data["class_names"]),
            class_frequencies=tuple(float(f) for f in data["class_frequencies"]),
            objects_per_image=tuple(int(v) for v in data["objects_per_image"]),
            box_size=tuple(float(v) for v in data["box_size"]),
            detectors=tuple(
                DetectorProfile.from_dict(d) for d in data["detectors"]
            ),
        )


@dataclass(frozen=True)
class Scenario:
    """A generated dataset: ground truth, one run per simulated
    detector, and the config that produced it.

    ``provenance`` maps each detection (by position in its run) to the
    index of its source ground-truth box within the image, or None for
    a false positive; tests use it to check jitter bounds.
    """

    ground_truth: GroundTruthSet
    runs: tuple[ModelRun, ...]
    config: ScenarioConfig
    provenance: dict[str, tuple[int | None, ...]] = field(default_factory=dict)


def jitter_iou_floor(width: float, height: float, jitter: float) -> float:
    """Worst-case IoU between a box and a copy whose four corners each
    moved by at most ``jitter``: overlap shrinks to (w-2j)(h-2j) while
    the union grows to at most (w+2j)(h+2j)."""
    w_in, h_in = width - 2 * jitter, height - 2 * jitter
    if w_in <= 0 or h_in <= 0:
        return 0.0
    return (w_in * h_in) / ((width + 2 * jitter) * (height + 2 * jitter))


def _draw_box(rng: np.random.Generator, config: ScenarioConfig) -> BoundingBox:
    smin, smax = config.box_size
    img_w, img_h = config.image_size
    w = float(rng.uniform(smin, smax))
    h = float(rng.uniform(smin, smax))
    x = float(rng.uniform(0.0, img_w - w))
    y = float(rng.uniform(0.0, img_h - h))
    return BoundingBox(x, y, x + w, y + h)


def _clipped_normal(rng: np.random.Generator, mean: float, spread: float) -> float:
    return float(min(max(rng.normal(mean, spread), 0.0), 1.0))


def generate(config: ScenarioConfig) -> Scenario:
    """Generate a scenario; a pure, deterministic function of the config."""
    catalog = config.catalog()
    k = len(catalog)
    freq = np.asarray(config.class_frequencies, dtype=float)
    probs = freq / freq.sum()
    rng = np.random.default_rng(config.seed)

    boxes_by_image: dict[str, tuple[GroundTruthBox, ...]] = {}
    detections: dict[str, list[Detection]] = {d.model_id: [] for d in config.detectors}
    provenance: dict[str, list[int | None]] = {
        d.model_id: [] for d in config.detectors
    }

    lo, hi = config.objects_per_image
    for image_index in range(config.num_images):
        image_id = str(image_index + 1)
        n_objects = int(rng.integers(lo, hi + 1))
        gt_boxes = []
        for _ in range(n_objects):
            cls_index = int(rng.choice(k, p=probs))
            box = _draw_box(rng, config)
            gt_boxes.append(
                GroundTruthBox(
                    image_id=image_id,
                    class_id=catalog.classes[cls_index],
                    box=box,
                )
            )
        boxes_by_image[image_id] = tuple(gt_boxes)

        for profile in config.detectors:
            j = profile.jitter
            for gt_index, gt in enumerate(gt_boxes):
                emit = float(rng.uniform(0.0, 1.0))
                if emit >= profile.detection_prob[gt.class_id.index]:
                    continue
                dx1 = float(rng.uniform(-j, j))
                dy1 = float(rng.uniform(-j, j))
                dx2 = float(rng.uniform(-j, j))
                dy2 = float(rng.uniform(-j, j))
                conf = _clipped_normal(rng, *profile.tp_conf)
                b = gt.box
                detections[profile.model_id].append(
                    Detection(
                        image_id=image_id,
                        class_id=gt.class_id,
                        box=BoundingBox(
                            b.x_min + dx1, b.y_min + dy1, b.x_max + dx2, b.y_max + dy2
                        ),
                        score=conf,
                        model_id=profile.model_id,
                    )
                )
                provenance[profile.model_id].append(gt_index)
            n_fp = int(rng.poisson(profile.fp_rate))
            for _ in range(n_fp):
                cls_index = int(rng.integers(0, k))
                box = _draw_box(rng, config)
                conf = _clipped_normal(rng, *profile.fp_conf)
                detections[profile.model_id].append(
                    Detection(
                        image_id=image_id,
                        class_id=catalog.classes[cls_index],
                        box=box,
                        score=conf,
                        model_id=profile.model_id,
                    )
                )
                provenance[profile.model_id].append(None)

    gts = GroundTruthSet(boxes_by_image=boxes_by_image, catalog=catalog)
    runs = tuple(
        ModelRun(model_id=d.model_id, detections=tuple(detections[d.model_id]))
        for d in config.detectors
    )
    return Scenario(
        ground_truth=gts,
        runs=runs,
        config=config,
        provenance={m: tuple(v) for m, v in provenance.items()},
    )


def riva_profile(num_images: int = 200, seed: int = 42) -> ScenarioConfig:
    """Canned config: eight classes at the dataset-proportional
    frequencies, 1024x1024 images, and three detectors with
    complementary per-class recall (one strong on the majority classes,
    one balanced, one strong on the rare lesion classes)."""
    names = tuple(RIVA_CLASS_COUNTS)
    total = sum(RIVA_CLASS_COUNTS.values())
    freqs = tuple(c / total for c in RIVA_CLASS_COUNTS.values())
    # Class order: NILM, INFL, ENDO, ASCUS, LSIL, ASCH, HSIL, SCC.
    majority = DetectorProfile(
        model_id="det-majority",
        detection_prob=(0.88, 0.86, 0.80, 0.30, 0.75, 0.30, 0.35, 0.35),
        fp_rate=1.5,
        jitter=6.0,
        tp_conf=(0.75, 0.12),
        fp_conf=(0.30, 0.12),
    )
    balanced = DetectorProfile(
        model_id="det-balanced",
        detection_prob=(0.68, 0.66, 0.64, 0.60, 0.64, 0.60, 0.62, 0.62),
        fp_rate=1.0,
        jitter=5.0,
        tp_conf=(0.70, 0.15),
        fp_conf=(0.25, 0.10),
    )
    minority = DetectorProfile(
        model_id="det-minority",
        detection_prob=(0.50, 0.48, 0.55, 0.85, 0.55, 0.85, 0.85, 0.88),
        fp_rate=2.0,
        jitter=7.0,
        tp_conf=(0.65, 0.15),
        fp_conf=(0.35, 0.12),
    )
    return ScenarioConfig(
        seed=seed,
        num_images=num_images,
        image_size=RIVA_IMAGE_SIZE,
        class_names=names,
        class_frequencies=freqs,
        objects_per_image=(3, 10),
        box_size=(40.0, 160.0),
        detectors=(majority, balanced, minority),
    )
