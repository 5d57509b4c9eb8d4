"""Bounding-box transfer from the distorted narrow frame to the distorted
wide frame: undistort -> planar homography -> redistort, applied to sampled
box perimeter points followed by an axis-aligned hull."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import BBox
from .camera import (
    CameraIntrinsics,
    DistortionCoeffs,
    distort_point,
    normalized_to_pixel,
    pixel_to_normalized,
    undistort_points_tracked,
)
from .errors import AtInfinity, DegenerateBox, NonConvergent
from .homography import Homography, apply_homography_tracked

# 4 corners + 4 edge midpoints: bounds the edge-bowing error of distorted
# box sides at automotive distortion levels while staying cheap.
DEFAULT_PERIMETER_SAMPLES = 8

MIN_BOX_EXTENT_PX = 1.0


@dataclass(frozen=True)
class TransformChain:
    """Everything needed to move points narrow-frame -> wide-frame."""

    Kn: CameraIntrinsics
    Kw: CameraIntrinsics
    dn: DistortionCoeffs
    dw: DistortionCoeffs
    H: Homography


def _transform_tracked(p: np.ndarray, chain: TransformChain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch point transfer; returns (points, undistort_ok, homography_ok)."""
    q = pixel_to_normalized(p, chain.Kn)
    q, ok_undist = undistort_points_tracked(q, chain.dn)
    p_wide, ok_hom = apply_homography_tracked(chain.H, normalized_to_pixel(q, chain.Kn))
    q = distort_point(pixel_to_normalized(p_wide, chain.Kw), chain.dw)
    return normalized_to_pixel(q, chain.Kw), ok_undist, ok_hom


def transform_point(p: np.ndarray, chain: TransformChain) -> np.ndarray:
    """Map points (..., 2) through undistort(Kn, dn) -> H -> distort(Kw, dw).

    Raises:
        NonConvergent: undistortion failed for some point.
        AtInfinity: some point mapped to the homography's horizon.
    """
    out, ok_undist, ok_hom = _transform_tracked(p, chain)
    if not ok_undist.all():
        raise NonConvergent("undistortion did not converge for some point")
    if not ok_hom.all():
        raise AtInfinity("point mapped to the line at infinity")
    return out


def _perimeter_points(boxes: np.ndarray, samples: int) -> np.ndarray:
    """(N, samples, 2) boundary points for boxes given as (N, 4) corner arrays."""
    per_edge = max(samples // 4, 1)
    t = np.arange(per_edge) / per_edge
    x0, y0, x1, y1 = (boxes[:, i, None] for i in range(4))
    xs = np.concatenate([
        x0 + t * (x1 - x0),
        np.broadcast_to(x1, (len(boxes), per_edge)),
        x1 - t * (x1 - x0),
        np.broadcast_to(x0, (len(boxes), per_edge)),
    ], axis=1)
    ys = np.concatenate([
        np.broadcast_to(y0, (len(boxes), per_edge)),
        y0 + t * (y1 - y0),
        np.broadcast_to(y1, (len(boxes), per_edge)),
        y1 - t * (y1 - y0),
    ], axis=1)
    return np.stack([xs, ys], axis=-1)


def _hulls(
    boxes: list[BBox], chain: TransformChain, samples: int
) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned hulls (N, 4) of the transformed perimeter samples plus a
    per-box validity mask (all points transformed, hull at least 1 px)."""
    coords = np.array([(b.x_min, b.y_min, b.x_max, b.y_max) for b in boxes])
    pts = _perimeter_points(coords, samples)
    out, ok_u, ok_h = _transform_tracked(pts.reshape(-1, 2), chain)
    out = out.reshape(len(boxes), -1, 2)
    ok = (ok_u & ok_h).reshape(len(boxes), -1).all(axis=1)
    ok &= np.isfinite(out).reshape(len(boxes), -1).all(axis=1)
    out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)  # masked rows only
    lo = out.min(axis=1)
    hi = out.max(axis=1)
    hulls = np.concatenate([lo, hi], axis=1)
    valid = ok & (hi - lo >= MIN_BOX_EXTENT_PX).all(axis=1)
    return hulls, valid


def transform_bbox(b: BBox, chain: TransformChain, samples: int = DEFAULT_PERIMETER_SAMPLES) -> BBox:
    """Transfer one box: transform perimeter samples, take the axis-aligned hull.

    Class label and confidence pass through unchanged.

    Raises:
        DegenerateBox: the hull collapsed below 1 px in either dimension
            (box mapped near the homography's horizon).
        NonConvergent, AtInfinity: propagated from the point transform.
    """
    pts = transform_point(_perimeter_points(
        np.array([[b.x_min, b.y_min, b.x_max, b.y_max]]), samples)[0], chain)
    x_min, y_min = pts.min(axis=0)
    x_max, y_max = pts.max(axis=0)
    if x_max - x_min < MIN_BOX_EXTENT_PX or y_max - y_min < MIN_BOX_EXTENT_PX:
        raise DegenerateBox(
            f"transformed box collapsed to {x_max - x_min:.3g} x {y_max - y_min:.3g} px")
    return b.with_geometry(x_min, y_min, x_max, y_max)


def transform_detection_set(
    boxes: list[BBox], chain: TransformChain, samples: int = DEFAULT_PERIMETER_SAMPLES
) -> tuple[list[BBox], int]:
    """Element-wise :func:`transform_bbox`, preserving order.

    Boxes that fail (degenerate hull, non-convergent undistortion, horizon
    crossing) are dropped, not fatal; the second return value counts them.
    """
    if not boxes:
        return [], 0
    hulls, valid = _hulls(boxes, chain, samples)
    out = [
        b.with_geometry(*hull)
        for b, hull, keep in zip(boxes, hulls, valid)
        if keep
    ]
    return out, int(len(boxes) - valid.sum())
