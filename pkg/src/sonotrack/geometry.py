"""Axis-aligned box algebra.

Boxes are half-open rectangles ``[x, x+w) x [y, y+h)`` in pixel units.
``(0, 0, 0, 0)`` is the out-of-view sentinel used by the annotation format;
the overlap functions refuse it so callers have to deal with absence
explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import DomainError


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w >= 0 and self.h >= 0):
            raise DomainError(f"box size must be non-negative, got w={self.w}, h={self.h}")

    @classmethod
    def of(cls, values: Iterable[float]) -> "BBox":
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @classmethod
    def absent(cls) -> "BBox":
        return cls(0.0, 0.0, 0.0, 0.0)

    def is_absent(self) -> bool:
        return self.x == 0 and self.y == 0 and self.w == 0 and self.h == 0

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def __iter__(self):
        return iter(self.as_tuple())


def _require_present(*boxes: BBox) -> None:
    for b in boxes:
        if b.is_absent():
            raise DomainError("overlap measures are undefined for the absent (0,0,0,0) box")


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    _require_present(a, b)
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(inter / union, 1.0)  # rounding can push identical boxes a few ulps past 1


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the hull fraction not covered by the union."""
    _require_present(a, b)
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    hull = (max(a.x2, b.x2) - min(a.x, b.x)) * (max(a.y2, b.y2) - min(a.y, b.y))
    if hull <= 0:
        return 0.0
    i = min(inter / union, 1.0) if union > 0 else 0.0
    return i - (hull - union) / hull


def iob(a: BBox, b: BBox) -> float:
    """Intersection over the area of the *second* box (not symmetric)."""
    _require_present(a, b)
    if b.area <= 0:
        raise DomainError("iob normalizer box has zero area")
    return min(intersection_area(a, b) / b.area, 1.0)


def center_distance(a: BBox, b: BBox) -> float:
    _require_present(a, b)
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def normalized_distance(pred: BBox, gt: BBox) -> float:
    """Center offset measured in units of the ground-truth box size."""
    _require_present(pred, gt)
    if gt.w <= 0 or gt.h <= 0:
        raise DomainError("normalized distance needs a ground-truth box with positive size")
    return math.hypot((pred.cx - gt.cx) / gt.w, (pred.cy - gt.cy) / gt.h)


def clip_to_frame(box: BBox, width: int, height: int, min_size: float = 1.0) -> BBox:
    """Intersect ``box`` with the frame, keeping at least ``min_size`` per side."""
    x1 = min(max(box.x, 0.0), width - min_size)
    y1 = min(max(box.y, 0.0), height - min_size)
    x2 = min(max(box.x2, x1 + min_size), float(width))
    y2 = min(max(box.y2, y1 + min_size), float(height))
    return BBox(x1, y1, x2 - x1, y2 - y1)
