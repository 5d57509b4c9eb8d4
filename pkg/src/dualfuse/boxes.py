"""Axis-aligned detection boxes and box-level area/IoU primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation

# Canonical traffic-light class list; BBox.class_label is open-world and may
# carry any string (e.g. merged super-classes).
DEFAULT_CLASSES = (
    "red",
    "red-yellow",
    "yellow",
    "green",
    "green-left",
    "green-up",
    "green-right",
    "empty",
    "count-down",
    "empty-count-down",
)


@dataclass(frozen=True)
class BBox:
    """Class-labeled, confidence-scored pixel rectangle, half-open real-valued."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_label: str = DEFAULT_CLASSES[0]
    confidence: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max)):
            raise InvariantViolation("box coordinates must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvariantViolation(
                f"box must have positive extent, got ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvariantViolation(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def corners(self) -> np.ndarray:
        """The 4 corners in CCW order (positive shoelace), shape (4, 2)."""
        return np.array([
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
        ])

    def with_geometry(self, x_min: float, y_min: float, x_max: float, y_max: float) -> "BBox":
        """Same label/confidence, new extent."""
        return BBox(x_min, y_min, x_max, y_max, self.class_label, self.confidence)


def box_area(b: BBox) -> float:
    """Euclidean area in px^2."""
    return b.width * b.height


def iou_boxes(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (box_area(a) + box_area(b) - inter)
