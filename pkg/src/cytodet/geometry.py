"""Axis-aligned bounding boxes and IoU.

Boxes are corner pairs (x_min, y_min, x_max, y_max) in continuous pixel
coordinates, origin top-left. The (x, y, w, h) convention used by COCO
interchange files is converted at the parsing boundary, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

__all__ = ["BoundingBox", "iou", "box_area"]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle. Degenerate (zero-area) boxes are legal;
    negative extents and non-finite coordinates are not."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"box coordinate {name}={v!r} is not finite")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValidationError(
                f"box has negative extent: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        """Build from COCO-style (x, y, width, height)."""
        if w < 0 or h < 0:
            raise ValidationError(f"negative box size: w={w}, h={h}")
        return cls(x, y, x + w, y + h)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.width, self.height)

    def as_corners(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def box_area(box: BoundingBox) -> float:
    """Area of a box; zero for degenerate boxes."""
    return box.area


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes.

    Returns a value in [0, 1]; 0 when the union has zero area (two
    degenerate boxes). Computed on continuous coordinates, no pixel
    quantization.
    """
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0.0 or inter_h <= 0.0:
        inter = 0.0
    else:
        inter = inter_w * inter_h
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union
