"""Duplicate suppression and concatenation of narrow/wide detections.

The narrow frame maps into a region of the wide distorted frame; wide boxes
fully inside that region are dropped, wide boxes straddling its edge have
their clipped parts suppress overlapping transferred narrow boxes, and the
survivors of both sets are concatenated in wide-frame coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import BBox
from .errors import InvalidRegion, InvariantViolation
from .geometry import (
    clip_polygon_to_box,
    convex_hull,
    points_in_convex_polygon,
    polygon_area,
)
from .transfer import TransformChain, transform_detection_set, transform_point

DEFAULT_ZETA = 0.5
DEFAULT_BOUNDARY_SAMPLES_PER_EDGE = 16
MIN_REGION_AREA_PX2 = 1.0
BOUNDARY_SLACK_PX = 1e-9


def _is_ccw(v: np.ndarray) -> bool:
    x, y = v[:, 0], v[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)) > 0.0


@dataclass(frozen=True)
class RegionR0:
    """Convex CCW polygon covering the mapped narrow frame, in wide pixels."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3 or not np.all(np.isfinite(v)):
            raise InvariantViolation("region needs >= 3 finite vertices of shape (V, 2)")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        # every consecutive turn must be a left turn (1e-9 float slack)
        if not np.all(cross > -1e-9) or polygon_area(v) <= 0.0 or not _is_ccw(v):
            raise InvariantViolation("region must be strictly convex and counter-clockwise")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo[0], lo[1], hi[0], hi[1]


@dataclass(frozen=True)
class FusionConfig:
    """Suppression threshold zeta plus the faithful-mode switch.

    Faithful mode removes every wide box fully inside the region
    unconditionally (the published behavior); non-faithful mode keeps such a
    box when no transferred narrow box duplicates it at IoU >= zeta.
    """

    zeta: float = DEFAULT_ZETA
    faithful_mode: bool = True

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise InvariantViolation(f"zeta must be in [0, 1], got {self.zeta}")


@dataclass(frozen=True)
class FusionResult:
    """Fused wide-frame boxes plus removal/drop accounting."""

    fused: list[BBox]
    provenance: list[str]  # "narrow" | "wide", aligned with fused
    removed_wide: int
    removed_narrow: int
    dropped_narrow: int  # narrow boxes lost to transform failures


def compute_region_r0(
    chain: TransformChain,
    samples_per_edge: int = DEFAULT_BOUNDARY_SAMPLES_PER_EDGE,
) -> RegionR0:
    """Map the narrow frame boundary into the wide frame and take its hull.

    Raises:
        InvalidRegion: hull area below 1 px^2.
        NonConvergent, AtInfinity: propagated transform failures.
    """
    w, h = float(chain.Kn.width), float(chain.Kn.height)
    per_edge = max(samples_per_edge, 1)
    t = np.linspace(0.0, 1.0, per_edge + 1)[:-1]
    zeros = np.zeros_like(t)
    boundary = np.concatenate([
        np.stack([t * w, zeros], axis=1),
        np.stack([zeros + w, t * h], axis=1),
        np.stack([w - t * w, zeros + h], axis=1),
        np.stack([zeros, h - t * h], axis=1),
    ])
    hull = convex_hull(transform_point(boundary, chain))
    if len(hull) < 3 or polygon_area(hull) < MIN_REGION_AREA_PX2:
        raise InvalidRegion("mapped narrow frame collapsed below 1 px^2")
    return RegionR0(hull)


def clip_box_to_region(b: BBox, r: RegionR0) -> np.ndarray:
    """Convex intersection polygon of a box with the region (may be empty)."""
    return clip_polygon_to_box(r.vertices, b.x_min, b.y_min, b.x_max, b.y_max)


def iou_shape_box(q: np.ndarray, b: BBox) -> float:
    """IoU between a convex clipped shape and a box; 0 for an empty shape."""
    area_q = polygon_area(q)
    if area_q == 0.0:
        return 0.0
    inter = polygon_area(clip_polygon_to_box(q, b.x_min, b.y_min, b.x_max, b.y_max))
    union = area_q + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter
    return inter / union


def box_inside_region(b: BBox, r: RegionR0) -> bool:
    """True iff all 4 corners are inside-or-on the region polygon."""
    return bool(points_in_convex_polygon(b.corners(), r.vertices, BOUNDARY_SLACK_PX).all())


def _boxes_inside_region(boxes: list[BBox], r: RegionR0) -> np.ndarray:
    corners = np.array([
        [b.x_min, b.y_min, b.x_max, b.y_min, b.x_max, b.y_max, b.x_min, b.y_max]
        for b in boxes
    ]).reshape(-1, 2)
    inside = points_in_convex_polygon(corners, r.vertices, BOUNDARY_SLACK_PX)
    return inside.reshape(len(boxes), 4).all(axis=1)


def fuse(
    narrow: list[BBox],
    wide: list[BBox],
    chain: TransformChain,
    r0: RegionR0,
    cfg: FusionConfig = FusionConfig(),
) -> FusionResult:
    """Run the duplicate-suppression pass on one synchronized frame pair.

    Narrow boxes are transferred into the wide frame; wide boxes fully inside
    the region are removed (faithful mode) or kept unless duplicated; the
    clipped parts of the remaining wide boxes suppress every transferred
    narrow box they overlap at IoU >= zeta. Suppression ignores class labels:
    a mismatched-class duplicate is still one physical light seen twice.

    Output order is deterministic: narrow survivors in input order, then wide
    survivors in input order.
    """
    transferred, dropped = transform_detection_set(narrow, chain)

    if wide:
        inside = _boxes_inside_region(wide, r0)
    else:
        inside = np.zeros(0, dtype=bool)

    rx0, ry0, rx1, ry1 = r0.bounds()
    partial_clips: list[np.ndarray] = []  # clips of wide survivors (straddling boxes)
    inside_wide: list[tuple[int, BBox]] = []
    wide_keep = [True] * len(wide)
    for i, (b, is_inside) in enumerate(zip(wide, inside)):
        if is_inside:
            wide_keep[i] = False
            if not cfg.faithful_mode:
                inside_wide.append((i, b))
            continue
        # AABB prefilter: a box not touching the region's bounds clips to nothing
        if b.x_max <= rx0 or b.x_min >= rx1 or b.y_max <= ry0 or b.y_min >= ry1:
            continue
        q = clip_box_to_region(b, r0)
        if polygon_area(q) > 0.0:
            partial_clips.append(q)

    narrow_keep = [True] * len(transferred)
    # disjoint AABBs imply IoU 0, so the prefilter is exact whenever zeta > 0
    prefilter = cfg.zeta > 0.0
    for q in partial_clips:
        qlo = q.min(axis=0)
        qhi = q.max(axis=0)
        for j, n0 in enumerate(transferred):
            if prefilter and (n0.x_max <= qlo[0] or n0.x_min >= qhi[0]
                              or n0.y_max <= qlo[1] or n0.y_min >= qhi[1]):
                continue
            if iou_shape_box(q, n0) >= cfg.zeta:
                narrow_keep[j] = False

    # non-faithful: a fully-inside wide box survives unless a transferred
    # narrow box duplicates it; the duplicate (narrow) wins in that case
    for i, b in inside_wide:
        duplicated = any(
            iou_shape_box(b.corners(), n0) >= cfg.zeta for n0 in transferred
        )
        if not duplicated:
            wide_keep[i] = True

    fused: list[BBox] = []
    provenance: list[str] = []
    removed_narrow = 0
    for keep, n0 in zip(narrow_keep, transferred):
        if keep:
            fused.append(n0)
            provenance.append("narrow")
        else:
            removed_narrow += 1
    removed_wide = 0
    for keep, b in zip(wide_keep, wide):
        if keep:
            fused.append(b)
            provenance.append("wide")
        else:
            removed_wide += 1
    return FusionResult(
        fused=fused,
        provenance=provenance,
        removed_wide=removed_wide,
        removed_narrow=removed_narrow,
        dropped_narrow=dropped,
    )
