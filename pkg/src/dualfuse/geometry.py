"""Convex polygon plumbing: hulls, shoelace areas, Sutherland-Hodgman clipping.

Polygons are numpy arrays of shape (V, 2) in counter-clockwise order
(positive shoelace sum over the coordinates as stored); the empty polygon is
shape (0, 2). Clipping a CCW polygon yields a CCW polygon.
"""

from __future__ import annotations

import numpy as np

EMPTY_POLYGON = np.zeros((0, 2))


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area in px^2; 0 for fewer than 3 vertices."""
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)) / 2.0)


def convex_hull(points: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Andrew monotone chain; returns the hull CCW.

    Collinear points are dropped; ``eps`` (px^2, on the cross products)
    absorbs float noise so exactly-straight runs collapse to their endpoints.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)  # sorts lexicographically
    if len(pts) < 3:
        return pts

    def build(seq):
        chain: list[np.ndarray] = []
        for p in seq:
            while len(chain) >= 2:
                o, a = chain[-2], chain[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= eps:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = build(pts)
    upper = build(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _clip_halfplane(poly: np.ndarray, signed: np.ndarray) -> np.ndarray:
    """One Sutherland-Hodgman pass keeping vertices with signed >= 0.

    ``signed`` holds the per-vertex signed distances to the clip line;
    boundary vertices (signed == 0) count as inside.
    """
    n = len(poly)
    if n == 0:
        return EMPTY_POLYGON
    inside = signed >= 0.0
    if inside.all():
        return poly
    if not inside.any():
        return EMPTY_POLYGON
    prev = np.roll(poly, 1, axis=0)
    s_prev = np.roll(signed, 1)
    in_prev = np.roll(inside, 1)
    crossing = inside != in_prev
    denom = np.where(crossing, s_prev - signed, 1.0)
    t = np.where(crossing, s_prev / denom, 0.0)
    isect = prev + t[:, None] * (poly - prev)
    # per edge prev->cur: emit the crossing point, then cur if cur is inside
    slots = np.empty((2 * n, 2))
    slots[0::2] = isect
    slots[1::2] = poly
    keep = np.empty(2 * n, dtype=bool)
    keep[0::2] = crossing
    keep[1::2] = inside
    return slots[keep]


def clip_polygon_to_box(poly: np.ndarray, x_min: float, y_min: float, x_max: float, y_max: float) -> np.ndarray:
    """Intersection of a convex polygon with an axis-aligned rectangle."""
    poly = np.asarray(poly, dtype=float)
    for axis, bound, sign in ((0, x_min, 1.0), (0, x_max, -1.0), (1, y_min, 1.0), (1, y_max, -1.0)):
        if len(poly) == 0:
            return EMPTY_POLYGON
        poly = _clip_halfplane(poly, sign * (poly[:, axis] - bound))
    return poly


def points_in_convex_polygon(points: np.ndarray, poly: np.ndarray, slack: float = 1e-9) -> np.ndarray:
    """Half-plane containment tests against a CCW convex polygon.

    On-boundary points count as inside; ``slack`` is a tolerance in pixels
    (signed distances are normalized by edge length).

    Returns a boolean array over the leading axis of ``points``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(poly) < 3:
        return np.zeros(len(points), dtype=bool)
    start = poly
    edge = np.roll(poly, -1, axis=0) - poly
    lengths = np.linalg.norm(edge, axis=1)
    # cross(edge, point - start) >= 0 for every edge of a CCW polygon
    dx = points[:, None, 0] - start[None, :, 0]
    dy = points[:, None, 1] - start[None, :, 1]
    cross = edge[None, :, 0] * dy - edge[None, :, 1] * dx
    return np.all(cross >= -slack * lengths[None, :], axis=1)
