"""Detection-ensemble toolkit: weighted boxes fusion, challenge-protocol
mAP50-95 evaluation, class-imbalance weighting schemes, and seeded
synthetic detector scenarios."""

from .datamodel import (
    ClassCatalog,
    ClassId,
    DatasetBundle,
    Detection,
    GroundTruthBox,
    GroundTruthSet,
    ModelRun,
)
from .errors import (
    ConfigurationError,
    CytodetError,
    EvaluationError,
    ParseError,
    ValidationError,
)
from .fusion import FusionConfig, fuse_dataset, fuse_image
from .geometry import BoundingBox, box_area, iou
from .metrics import (
    EvalConfig,
    MetricsReport,
    PrCurve,
    average_precision,
    f1_optimal_threshold,
    map_50_95,
    match_class_image,
    pr_curve,
)
from .synth import Scenario, ScenarioConfig, generate, riva_profile
from .weights import (
    ClassWeightTable,
    ImageWeightTable,
    counts_from_ground_truth,
    image_sampling_weights,
    loss_weights,
    sampler_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ClassCatalog",
    "ClassId",
    "ClassWeightTable",
    "ConfigurationError",
    "CytodetError",
    "DatasetBundle",
    "Detection",
    "EvalConfig",
    "EvaluationError",
    "FusionConfig",
    "GroundTruthBox",
    "GroundTruthSet",
    "ImageWeightTable",
    "MetricsReport",
    "ModelRun",
    "ParseError",
    "PrCurve",
    "Scenario",
    "ScenarioConfig",
    "ValidationError",
    "average_precision",
    "box_area",
    "counts_from_ground_truth",
    "f1_optimal_threshold",
    "fuse_dataset",
    "fuse_image",
    "generate",
    "image_sampling_weights",
    "iou",
    "loss_weights",
    "map_50_95",
    "match_class_image",
    "pr_curve",
    "riva_profile",
    "sampler_weights",
]
