"""Pinhole camera model with radial-tangential lens distortion.

Points are numpy arrays of shape (..., 2): pixel coordinates live in the
image frame (origin top-left, y down), normalized coordinates on the ideal
z = 1 image plane. All functions are pure and broadcast over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, NonConvergent

UNDISTORT_TOL = 1e-12
UNDISTORT_MAX_ITER = 50


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole matrix parameters plus the frame size in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantViolation(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (isinstance(self.width, int) and isinstance(self.height, int)
                and self.width > 0 and self.height > 0):
            raise InvariantViolation(f"frame size must be positive integers, got {self.width}x{self.height}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise InvariantViolation(
                f"principal point ({self.cx}, {self.cy}) must lie inside the {self.width}x{self.height} frame")
        if not all(math.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy)):
            raise InvariantViolation("intrinsics must be finite")

    @classmethod
    def from_hfov(cls, hfov_deg: float, width: int = 1920, height: int = 1080) -> "CameraIntrinsics":
        """Square-pixel intrinsics with fx = fy = (width/2) / tan(hfov/2)."""
        if not 0 < hfov_deg < 180:
            raise InvariantViolation(f"horizontal FoV must be in (0, 180) degrees, got {hfov_deg}")
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)

    @property
    def matrix(self) -> np.ndarray:
        """3x3 camera matrix K."""
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DistortionCoeffs:
    """Brown-Conrady radial (k1,k2,k3) and tangential (p1,p2) coefficients.

    The all-zero value is an ideal pinhole.
    """

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.k1, self.k2, self.k3, self.p1, self.p2)):
            raise InvariantViolation("distortion coefficients must be finite")

    @property
    def is_zero(self) -> bool:
        return self.k1 == self.k2 == self.k3 == self.p1 == self.p2 == 0.0


def pixel_to_normalized(p: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Map pixel coordinates to the ideal image plane: (p - c) / f."""
    p = np.asarray(p, dtype=float)
    return (p - (K.cx, K.cy)) / (K.fx, K.fy)


def normalized_to_pixel(q: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Exact affine inverse of :func:`pixel_to_normalized`."""
    q = np.asarray(q, dtype=float)
    return q * (K.fx, K.fy) + (K.cx, K.cy)


def _radial_factor(x: np.ndarray, y: np.ndarray, d: DistortionCoeffs) -> np.ndarray:
    r2 = x * x + y * y
    return 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3))


def _tangential(x: np.ndarray, y: np.ndarray, d: DistortionCoeffs) -> tuple[np.ndarray, np.ndarray]:
    r2 = x * x + y * y
    tx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x)
    ty = 2.0 * d.p2 * x * y + d.p1 * (r2 + 2.0 * y * y)
    return tx, ty


def distort_point(q: np.ndarray, d: DistortionCoeffs) -> np.ndarray:
    """Apply the radial-tangential model to normalized coordinates.

    x_d = x(1 + k1 r^2 + k2 r^4 + k3 r^6) + 2 p1 x y + p2 (r^2 + 2 x^2),
    and symmetrically for y (x/y and p1/p2 swapped).
    """
    q = np.asarray(q, dtype=float)
    x, y = q[..., 0], q[..., 1]
    f = _radial_factor(x, y, d)
    tx, ty = _tangential(x, y, d)
    return np.stack([x * f + tx, y * f + ty], axis=-1)


def undistort_points_tracked(
    q_d: np.ndarray,
    d: DistortionCoeffs,
    tol: float = UNDISTORT_TOL,
    max_iter: int = UNDISTORT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fixed-point inversion of :func:`distort_point`.

    Iterates q <- (q_d - tangential(q)) / radial_factor(q) starting from q_d.
    Instead of raising, returns (points, converged) where ``converged`` is a
    boolean array over the leading axes; non-converged entries hold whatever
    the last iterate was.
    """
    q_d = np.asarray(q_d, dtype=float)
    if d.is_zero:
        return q_d.copy(), np.ones(q_d.shape[:-1], dtype=bool)
    xd, yd = q_d[..., 0], q_d[..., 1]
    x, y = xd.copy(), yd.copy()
    last_step = np.full(np.shape(xd), np.inf)
    with np.errstate(all="ignore"):  # divergence is reported via the mask
        for _ in range(max_iter):
            f = _radial_factor(x, y, d)
            tx, ty = _tangential(x, y, d)
            x_new = (xd - tx) / f
            y_new = (yd - ty) / f
            last_step = np.maximum(np.abs(x_new - x), np.abs(y_new - y))
            x, y = x_new, y_new
            if last_step.max(initial=0.0) < tol:
                break
    out = np.stack([x, y], axis=-1)
    ok = (last_step < tol) & np.isfinite(x) & np.isfinite(y)
    return out, ok


def undistort_point(
    q_d: np.ndarray,
    d: DistortionCoeffs,
    tol: float = UNDISTORT_TOL,
    max_iter: int = UNDISTORT_MAX_ITER,
) -> np.ndarray:
    """Invert :func:`distort_point` by fixed-point iteration.

    Raises:
        NonConvergent: if any point still moves more than ``tol`` after
            ``max_iter`` iterations (outside the invertible FoV, or
            pathological coefficients).
    """
    out, ok = undistort_points_tracked(q_d, d, tol, max_iter)
    if not ok.all():
        raise NonConvergent(
            f"undistortion step still above tol={tol} after {max_iter} iterations")
    return out
