"""Pixel/normalized conversions and the radial-tangential distortion model."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dualfuse import (
    CameraIntrinsics,
    DistortionCoeffs,
    InvariantViolation,
    NonConvergent,
    distort_point,
    normalized_to_pixel,
    pixel_to_normalized,
    undistort_point,
)

K_HD = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080)

# Representative per-camera coefficient sets: the distortion map must stay a
# contraction over the camera's own FoV (the narrow 48-degree grid tolerates
# the full +-0.3/+-0.1/+-0.01 coefficient extremes; a 125-degree grid only
# tolerates realistic wide-lens values).
NARROW_COEFF_SETS = [
    DistortionCoeffs(),
    DistortionCoeffs(k1=-0.3, k2=0.1, p1=0.01, p2=-0.01),
    DistortionCoeffs(k1=0.3, k2=-0.1, k3=0.05, p1=-0.01, p2=0.01),
    DistortionCoeffs(k1=-0.12, k2=0.03, p1=0.0005, p2=-0.0005),
]
WIDE_COEFF_SETS = [
    DistortionCoeffs(),
    DistortionCoeffs(k1=-0.05, k2=0.004, k3=-0.0001, p1=0.001, p2=-0.0005),
    DistortionCoeffs(k1=0.03, k2=-0.002, p1=-0.001, p2=0.001),
    DistortionCoeffs(k1=-0.04, k2=0.002, p1=0.0003, p2=0.0002),
]


def fov_grid(hfov_deg: float, n: int = 17) -> np.ndarray:
    """n x n normalized grid spanning a camera's FoV (16:9 aspect)."""
    half = math.tan(math.radians(hfov_deg) / 2.0)
    xs = np.linspace(-half, half, n)
    ys = np.linspace(-half * 1080 / 1920, half * 1080 / 1920, n)
    return np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)


class TestPixelNormalized:
    def test_principal_point_maps_to_origin(self):
        assert np.allclose(pixel_to_normalized(np.array([960.0, 540.0]), K_HD), [0.0, 0.0])

    def test_one_focal_length_right_of_center(self):
        q = pixel_to_normalized(np.array([1960.0, 540.0]), K_HD)
        assert np.allclose(q, [1.0, 0.0])

    def test_origin_maps_to_principal_point(self):
        assert np.allclose(normalized_to_pixel(np.array([0.0, 0.0]), K_HD), [960.0, 540.0])

    def test_affine_formula(self):
        # x = fx*qx + cx, y = fy*qy + cy
        K = CameraIntrinsics(fx=500.0, fy=500.0, cx=250.0, cy=250.0, width=500, height=500)
        p = normalized_to_pixel(np.array([0.2, -0.4]), K)
        assert np.allclose(p, [500 * 0.2 + 250, 500 * -0.4 + 250])

    def test_round_trip_grid_exact(self):
        xs = np.linspace(0, 1920, 9)
        ys = np.linspace(0, 1080, 9)
        grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
        back = normalized_to_pixel(pixel_to_normalized(grid, K_HD), K_HD)
        assert np.abs(back - grid).max() < 1e-12
        fwd = pixel_to_normalized(normalized_to_pixel(pixel_to_normalized(grid, K_HD), K_HD), K_HD)
        assert np.abs(fwd - pixel_to_normalized(grid, K_HD)).max() < 1e-12


class TestIntrinsics:
    def test_from_hfov_default_rig_focal_lengths(self):
        # (width/2) / tan(hfov/2), frozen from independent evaluation
        assert CameraIntrinsics.from_hfov(48.0).fx == pytest.approx(2156.1953029480474)
        assert CameraIntrinsics.from_hfov(125.0).fx == pytest.approx(499.74436852967636)

    @pytest.mark.parametrize("kwargs", [
        dict(fx=0.0, fy=1.0, cx=1.0, cy=1.0, width=2, height=2),
        dict(fx=1.0, fy=-1.0, cx=1.0, cy=1.0, width=2, height=2),
        dict(fx=1.0, fy=1.0, cx=0.0, cy=1.0, width=2, height=2),
        dict(fx=1.0, fy=1.0, cx=1.0, cy=5.0, width=2, height=2),
        dict(fx=1.0, fy=1.0, cx=1.0, cy=1.0, width=0, height=2),
    ])
    def test_invalid_intrinsics_rejected(self, kwargs):
        with pytest.raises(InvariantViolation):
            CameraIntrinsics(**kwargs)

    def test_non_finite_distortion_rejected(self):
        with pytest.raises(InvariantViolation):
            DistortionCoeffs(k1=float("nan"))


class TestDistort:
    def test_zero_coefficients_identity(self):
        q = np.array([[0.3, -0.2], [0.0, 0.0], [1.5, 0.7]])
        assert np.array_equal(distort_point(q, DistortionCoeffs()), q)

    def test_pure_radial_hand_value(self):
        # r^2 = 0.02, factor = 1 - 0.2*0.02 = 0.996
        d = DistortionCoeffs(k1=-0.2)
        out = distort_point(np.array([0.1, 0.1]), d)
        assert np.allclose(out, [0.0996, 0.0996])

    def test_pure_tangential_hand_value(self):
        # x_d = 0.1 + 2*0.01*0.1*0.2 = 0.1004
        # y_d = 0.2 + 0.01*(r^2 + 2*0.04), r^2 = 0.05 -> 0.2013
        d = DistortionCoeffs(p1=0.01)
        out = distort_point(np.array([0.1, 0.2]), d)
        assert out[0] == pytest.approx(0.1004, abs=1e-12)
        assert out[1] == pytest.approx(0.2013, abs=1e-12)

    def test_deterministic_and_stateless(self):
        d = DistortionCoeffs(k1=-0.1, k2=0.01, p1=0.002, p2=-0.001)
        q = np.array([0.4, -0.3])
        first = distort_point(q, d)
        for _ in range(3):
            assert np.array_equal(distort_point(q, d), first)


class TestUndistort:
    def test_zero_coefficients_identity(self):
        q = np.array([[0.3, -0.2], [1.9, 1.0]])
        assert np.array_equal(undistort_point(q, DistortionCoeffs()), q)

    def test_inverts_pure_radial_example(self):
        d = DistortionCoeffs(k1=-0.2)
        out = undistort_point(np.array([0.0996, 0.0996]), d)
        assert np.abs(out - 0.1).max() < 1e-9

    @pytest.mark.parametrize("hfov,coeff_sets", [
        (48.0, NARROW_COEFF_SETS),
        (125.0, WIDE_COEFF_SETS),
    ])
    def test_round_trip_over_fov(self, hfov, coeff_sets):
        grid = fov_grid(hfov)
        for d in coeff_sets:
            distorted = distort_point(grid, d)
            assert np.abs(undistort_point(distorted, d) - grid).max() < 1e-6
            undistorted = undistort_point(grid, d)
            assert np.abs(distort_point(undistorted, d) - grid).max() < 1e-6

    def test_round_trip_tolerance_contract(self):
        # |distort(undistort(q)) - q| < tol and |undistort(distort(q)) - q| < 10*tol
        tol = 1e-10
        d = DistortionCoeffs(k1=-0.15, k2=0.02, p1=0.001, p2=-0.002)
        grid = fov_grid(48.0, n=9)
        fwd = distort_point(undistort_point(grid, d, tol=tol), d)
        assert np.abs(fwd - grid).max() < tol
        bwd = undistort_point(distort_point(grid, d), d, tol=tol)
        assert np.abs(bwd - grid).max() < 10 * tol

    def test_nonconvergent_outside_invertible_region(self):
        # strong barrel at a 125-degree frame corner: radial factor goes
        # negative before the corner, the fixed point diverges
        d = DistortionCoeffs(k1=-0.3)
        corner = np.array([math.tan(math.radians(62.5)), math.tan(math.radians(62.5)) * 9 / 16])
        with pytest.raises(NonConvergent):
            undistort_point(corner, d)

    def test_max_iter_respected(self):
        d = DistortionCoeffs(k1=-0.2)
        with pytest.raises(NonConvergent):
            undistort_point(np.array([0.5, 0.5]), d, tol=1e-15, max_iter=1)
