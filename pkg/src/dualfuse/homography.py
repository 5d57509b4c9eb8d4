"""Narrow-to-wide planar homography: closed form from extrinsics, and
least-squares estimation from point correspondences (normalized DLT)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .camera import CameraIntrinsics
from .errors import (
    AtInfinity,
    DegenerateConfiguration,
    InvariantViolation,
    Singular,
    TooFewPoints,
)

_W_EPS = 1e-12  # homogeneous scale below which a point is "at infinity"


@dataclass(frozen=True)
class Homography:
    """3x3 projective map between two undistorted image frames.

    Stored normalized: h[2][2] = 1 when |h[2][2]| > 1e-9, otherwise unit
    Frobenius norm. Must be nonsingular (|det| > 1e-12 after normalization).
    """

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise InvariantViolation(f"homography must be a finite 3x3 matrix, got shape {h.shape}")
        if abs(h[2, 2]) > 1e-9:
            h = h / h[2, 2]
        else:
            h = h / np.linalg.norm(h)
        if abs(np.linalg.det(h)) <= 1e-12:
            raise InvariantViolation("homography is singular after normalization")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


@dataclass(frozen=True)
class RelativePose:
    """Rigid transform between the cameras: X_wide = R @ X_narrow + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise InvariantViolation(f"R must be 3x3, got {R.shape}")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise InvariantViolation("pose must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InvariantViolation("R is not a rotation matrix (R^T R = I, det R = 1 required)")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)


@dataclass(frozen=True)
class PlaneSpec:
    """Plane inducing the homography, in narrow-camera coordinates.

    Points X on the plane satisfy n . X + d = 0 (Hartley-Zisserman
    convention, which makes the closed form below exact). A fronto-parallel
    plane at depth Z in front of the narrow camera is n=(0,0,-1), d=Z.
    """

    n: np.ndarray
    d: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float).reshape(3)
        if not np.all(np.isfinite(n)) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise InvariantViolation("plane normal must be a unit 3-vector")
        if not self.d > 0:
            raise InvariantViolation(f"plane distance must be positive, got {self.d}")
        n.flags.writeable = False
        object.__setattr__(self, "n", n)


class Correspondence(NamedTuple):
    """One matched point pair: undistorted narrow pixel -> undistorted wide pixel."""

    src: tuple[float, float]
    dst: tuple[float, float]


def homography_from_extrinsics(
    Kw: CameraIntrinsics,
    Kn: CameraIntrinsics,
    pose: RelativePose,
    plane: PlaneSpec,
) -> Homography:
    """Closed-form narrow->wide homography K_w (R - t n^T / d) K_n^-1.

    Raises:
        Singular: if the plane passes through the wide camera center and the
            matrix degenerates.
    """
    m = Kw.matrix @ (pose.R - np.outer(pose.t, plane.n) / plane.d) @ np.linalg.inv(Kn.matrix)
    try:
        return Homography(m)
    except InvariantViolation as exc:
        raise Singular(str(exc)) from exc


def apply_homography_tracked(H: Homography, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projective action on points (..., 2) without raising.

    Returns (points, finite) where ``finite`` flags points whose homogeneous
    scale stayed clear of zero (|w'| >= 1e-12).
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    h = H.h
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    ok = np.abs(w) >= _W_EPS
    with np.errstate(all="ignore"):
        u = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w
        v = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w
    return np.stack([u, v], axis=-1), ok


def apply_homography(H: Homography, p: np.ndarray) -> np.ndarray:
    """Projective action on points of shape (..., 2).

    Raises:
        AtInfinity: if any point's homogeneous scale |w'| < 1e-12.
    """
    out, ok = apply_homography_tracked(H, p)
    if not ok.all():
        raise AtInfinity("point mapped to the line at infinity")
    return out


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity T moving the centroid to the origin and the mean distance
    to sqrt(2). Raises DegenerateConfiguration when all points coincide."""
    centroid = pts.mean(axis=0)
    mean_dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("correspondences coincide in a single point")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]],
                     [0.0, s, -s * centroid[1]],
                     [0.0, 0.0, 1.0]])


def estimate_homography(pairs: Sequence[Correspondence]) -> tuple[Homography, float]:
    """Normalized-DLT least-squares homography from >= 4 correspondences.

    Returns the homography together with the RMS symmetric transfer error in
    pixels (forward residuals under H and backward residuals under H^-1).

    Raises:
        TooFewPoints: fewer than 4 pairs.
        DegenerateConfiguration: rank-deficient design matrix (collinear or
            duplicated points).
    """
    if len(pairs) < 4:
        raise TooFewPoints(f"homography estimation needs >= 4 correspondences, got {len(pairs)}")
    src = np.array([c.src for c in pairs], dtype=float)
    dst = np.array([c.dst for c in pairs], dtype=float)
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise DegenerateConfiguration("correspondences contain non-finite coordinates")

    Ts = _hartley_normalization(src)
    Td = _hartley_normalization(dst)
    sn = src @ Ts[:2, :2].T + Ts[:2, 2]
    dn = dst @ Td[:2, :2].T + Td[:2, 2]

    n = len(pairs)
    A = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[0::2, 8] = -u
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    A[1::2, 8] = -v

    # full_matrices: with exactly 4 pairs A is 8x9 and the solution lives in
    # the null space, which the thin SVD does not return
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    # rank < 8 means the solution space is >1-dimensional: no unique H
    if s[7] <= 1e-10 * s[0]:
        raise DegenerateConfiguration("design matrix is rank-deficient (collinear or duplicated points)")
    Hn = vt[-1].reshape(3, 3)
    try:
        H = Homography(np.linalg.inv(Td) @ Hn @ Ts)
    except InvariantViolation as exc:
        raise DegenerateConfiguration(str(exc)) from exc

    fwd = apply_homography(H, src) - dst
    bwd = apply_homography(H.inverse(), dst) - src
    residual = float(np.sqrt((np.sum(fwd**2) + np.sum(bwd**2)) / (2 * n)))
    return H, residual
