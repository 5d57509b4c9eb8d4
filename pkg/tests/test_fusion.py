"""Region construction, polygon/box geometry and the duplicate-suppression pass."""

from __future__ import annotations

import numpy as np
import pytest

from dualfuse import (
    BBox,
    FusionConfig,
    InvalidRegion,
    InvariantViolation,
    RegionR0,
    box_area,
    box_inside_region,
    clip_box_to_region,
    compute_region_r0,
    fuse,
    iou_boxes,
    iou_shape_box,
)
from dualfuse.geometry import polygon_area

from conftest import random_boxes, scaling_chain
from oracle import brute_force_fuse

SQUARE_REGION = RegionR0(np.array([[0.0, 0.0], [100.0, 0.0], [100.0, 100.0], [0.0, 100.0]]))


class TestRegion:
    def test_identity_chain_gives_frame_quadrilateral(self, identity_chain):
        r0 = compute_region_r0(identity_chain)
        expected = {(0.0, 0.0), (1920.0, 0.0), (1920.0, 1080.0), (0.0, 1080.0)}
        got = {(round(x, 6), round(y, 6)) for x, y in r0.vertices}
        assert got == expected

    def test_pure_scale_half(self):
        r0 = compute_region_r0(scaling_chain(0.5))
        got = {(round(x, 6), round(y, 6)) for x, y in r0.vertices}
        assert got == {(0.0, 0.0), (960.0, 0.0), (960.0, 540.0), (0.0, 540.0)}

    def test_default_rig_area_matches_focal_ratio(self, rig, region):
        ratio = rig.wide_intrinsics.fx / rig.narrow_intrinsics.fx
        analytic = ratio**2 * 1920 * 1080
        assert region.area == pytest.approx(analytic, rel=0.05)

    def test_default_rig_region_is_centered(self, region):
        lo = region.vertices.min(axis=0)
        hi = region.vertices.max(axis=0)
        center = (lo + hi) / 2
        assert np.abs(center - [960.0, 540.0]).max() < 30.0

    def test_collapsed_region_rejected(self):
        with pytest.raises(InvalidRegion):
            compute_region_r0(scaling_chain(1e-4))

    def test_region_invariants_enforced(self):
        with pytest.raises(InvariantViolation):
            RegionR0(np.array([[0.0, 0.0], [1.0, 0.0]]))  # too few vertices
        with pytest.raises(InvariantViolation):  # clockwise
            RegionR0(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(InvariantViolation):  # non-convex
            RegionR0(np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 1.0], [4.0, 4.0], [0.0, 4.0]]))


class TestAreasAndIoU:
    def test_unit_square_area(self):
        assert box_area(BBox(0.0, 0.0, 1.0, 1.0, "red")) == 1.0

    def test_triangle_area(self):
        assert polygon_area(np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])) == 6.0

    def test_empty_polygon_area(self):
        assert polygon_area(np.zeros((0, 2))) == 0.0

    def test_iou_identical(self):
        b = BBox(3.0, 4.0, 10.0, 12.0, "red")
        assert iou_boxes(b, b) == 1.0

    def test_iou_disjoint(self):
        assert iou_boxes(BBox(0, 0, 1, 1, "red"), BBox(5, 5, 6, 6, "red")) == 0.0

    def test_iou_hand_value(self):
        a = BBox(0.0, 0.0, 2.0, 2.0, "red")
        b = BBox(1.0, 1.0, 3.0, 3.0, "red")
        assert iou_boxes(a, b) == pytest.approx(1.0 / 7.0)


class TestClipping:
    def test_box_inside_region_clips_to_itself(self):
        b = BBox(10.0, 10.0, 30.0, 40.0, "red")
        shape = clip_box_to_region(b, SQUARE_REGION)
        assert polygon_area(shape) == pytest.approx(box_area(b))
        got = {tuple(v) for v in shape}
        assert got == {(10.0, 10.0), (30.0, 10.0), (30.0, 40.0), (10.0, 40.0)}

    def test_disjoint_box_clips_empty(self):
        b = BBox(200.0, 200.0, 300.0, 300.0, "red")
        assert len(clip_box_to_region(b, SQUARE_REGION)) == 0

    def test_hand_constructed_overlap(self):
        region = RegionR0(np.array([[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]]))
        shape = clip_box_to_region(BBox(0.0, 0.0, 2.0, 2.0, "red"), region)
        assert polygon_area(shape) == pytest.approx(1.0)
        assert {tuple(v) for v in shape} == {(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)}

    def test_iou_shape_box_own_rectangle(self):
        b = BBox(10.0, 10.0, 30.0, 40.0, "red")
        assert iou_shape_box(b.corners(), b) == pytest.approx(1.0)

    def test_iou_shape_box_empty_shape(self):
        assert iou_shape_box(np.zeros((0, 2)), BBox(0, 0, 1, 1, "red")) == 0.0

    def test_iou_shape_box_hand_value(self):
        q = np.array([[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]])
        assert iou_shape_box(q, BBox(1.0, 1.0, 3.0, 3.0, "red")) == pytest.approx(0.25)


class TestContainment:
    def test_center_box_inside(self):
        assert box_inside_region(BBox(40.0, 40.0, 60.0, 60.0, "red"), SQUARE_REGION)

    def test_straddling_box_not_inside(self):
        assert not box_inside_region(BBox(90.0, 40.0, 110.0, 60.0, "red"), SQUARE_REGION)

    def test_box_sharing_edge_counts_as_inside(self):
        # on-boundary corners are inside (closed region)
        assert box_inside_region(BBox(0.0, 10.0, 30.0, 40.0, "red"), SQUARE_REGION)
        assert box_inside_region(BBox(0.0, 0.0, 100.0, 100.0, "red"), SQUARE_REGION)


def half_region_setup():
    """Scale-0.5 chain whose region is the rectangle (0,0)-(960,540)."""
    chain = scaling_chain(0.5)
    return chain, compute_region_r0(chain)


class TestFuse:
    def test_straddling_wide_box_survives_without_narrow(self):
        chain, r0 = half_region_setup()
        wide = [BBox(900.0, 100.0, 1020.0, 160.0, "red", 0.8)]
        result = fuse([], wide, chain, r0, FusionConfig())
        assert result.fused == wide
        assert result.provenance == ["wide"]
        assert result.removed_wide == 0 and result.removed_narrow == 0

    def test_inside_wide_box_removed_narrow_twin_kept(self):
        chain, r0 = half_region_setup()
        # the same physical object: narrow coords scale down by 0.5
        narrow = [BBox(800.0, 400.0, 900.0, 500.0, "green", 0.9)]
        wide = [BBox(400.0, 200.0, 450.0, 250.0, "green", 0.7)]
        result = fuse(narrow, wide, chain, r0, FusionConfig())
        assert result.removed_wide == 1
        assert result.provenance == ["narrow"]
        assert len(result.fused) == 1
        assert result.fused[0].confidence == 0.9

    def test_partial_wide_clip_suppresses_overlapping_narrow(self):
        chain, r0 = half_region_setup()
        # clip of the wide box: (900,100)-(960,160); narrow box transforms to
        # (912,100)-(972,160): inter 48x60, union 2*3600-2880 -> IoU 2/3
        wide = [BBox(900.0, 100.0, 1020.0, 160.0, "red", 0.8)]
        narrow = [BBox(1824.0, 200.0, 1944.0, 320.0, "red", 0.9)]
        result = fuse(narrow, wide, chain, r0, FusionConfig(zeta=0.5))
        assert result.removed_narrow == 1
        assert result.provenance == ["wide"]
        assert result.fused == wide

    def test_low_overlap_keeps_both(self):
        chain, r0 = half_region_setup()
        wide = [BBox(900.0, 100.0, 1020.0, 160.0, "red", 0.8)]
        # transforms to (840,100)-(900,160): disjoint from the clip
        narrow = [BBox(1680.0, 200.0, 1800.0, 320.0, "red", 0.9)]
        result = fuse(narrow, wide, chain, r0, FusionConfig(zeta=0.5))
        assert result.removed_narrow == 0
        assert result.provenance == ["narrow", "wide"]

    def test_suppression_ignores_class_labels(self):
        chain, r0 = half_region_setup()
        wide = [BBox(900.0, 100.0, 1020.0, 160.0, "red", 0.8)]
        narrow = [BBox(1800.0, 200.0, 1920.0, 320.0, "yellow", 0.9)]  # clips to the same rect
        result = fuse(narrow, wide, chain, r0, FusionConfig(zeta=0.5))
        assert result.removed_narrow == 1

    def test_faithful_mode_drops_unmatched_inside_wide_box(self):
        chain, r0 = half_region_setup()
        wide = [BBox(400.0, 200.0, 450.0, 250.0, "green", 0.7)]
        faithful = fuse([], wide, chain, r0, FusionConfig(faithful_mode=True))
        assert faithful.fused == [] and faithful.removed_wide == 1
        lenient = fuse([], wide, chain, r0, FusionConfig(faithful_mode=False))
        assert lenient.fused == wide and lenient.removed_wide == 0

    def test_non_faithful_still_suppresses_duplicated_inside_box(self):
        chain, r0 = half_region_setup()
        narrow = [BBox(800.0, 400.0, 900.0, 500.0, "green", 0.9)]
        wide = [BBox(400.0, 200.0, 450.0, 250.0, "green", 0.7)]
        result = fuse(narrow, wide, chain, r0, FusionConfig(faithful_mode=False))
        assert result.removed_wide == 1
        assert result.provenance == ["narrow"]

    def test_empty_inputs(self, fusion_config):
        chain, r0 = half_region_setup()
        assert fuse([], [], chain, r0, fusion_config).fused == []

    def test_narrow_only_equals_transform_survivors(self, fusion_config):
        from dualfuse import transform_detection_set

        chain, r0 = half_region_setup()
        rng = np.random.default_rng(20)
        narrow = random_boxes(rng, 8)
        expected, _ = transform_detection_set(narrow, chain)
        result = fuse(narrow, [], chain, r0, fusion_config)
        assert result.fused == expected

    def test_wide_only_output_subset_of_wide(self, fusion_config):
        chain, r0 = half_region_setup()
        rng = np.random.default_rng(21)
        wide = random_boxes(rng, 10)
        result = fuse([], wide, chain, r0, fusion_config)
        assert all(b in wide for b in result.fused)

    def test_zeta_one_keeps_everything_outside_region(self):
        chain, r0 = half_region_setup()
        rng = np.random.default_rng(22)
        narrow = random_boxes(rng, 6)
        # wide boxes strictly right of the region: never inside, never clip
        wide = random_boxes(rng, 6)
        wide = [b.with_geometry(b.x_min + 970, b.y_min, b.x_max + 970, b.y_max) for b in wide]
        result = fuse(narrow, wide, chain, r0, FusionConfig(zeta=1.0))
        from dualfuse import transform_detection_set

        survivors, _ = transform_detection_set(narrow, chain)
        assert len(result.fused) == len(survivors) + len(wide)

    def test_deterministic_ordering(self, fusion_config):
        chain, r0 = half_region_setup()
        rng = np.random.default_rng(23)
        narrow = random_boxes(rng, 6)
        wide = random_boxes(rng, 6)
        first = fuse(narrow, wide, chain, r0, fusion_config)
        second = fuse(narrow, wide, chain, r0, fusion_config)
        assert first.fused == second.fused
        assert first.provenance == second.provenance

    def test_counts_consistent(self, fusion_config):
        chain, r0 = half_region_setup()
        rng = np.random.default_rng(24)
        for _ in range(50):
            narrow = random_boxes(rng, int(rng.integers(0, 7)))
            wide = random_boxes(rng, int(rng.integers(0, 7)))
            res = fuse(narrow, wide, chain, r0, fusion_config)
            assert len(res.fused) == (len(narrow) - res.removed_narrow - res.dropped_narrow
                                      + len(wide) - res.removed_wide)

    def test_brute_force_oracle_equivalence(self, chain, region, fusion_config):
        rng = np.random.default_rng(25)
        for _ in range(300):
            narrow = random_boxes(rng, int(rng.integers(0, 7)))
            wide = random_boxes(rng, int(rng.integers(0, 7)))
            got = fuse(narrow, wide, chain, region, fusion_config)
            expected_boxes, expected_prov = brute_force_fuse(
                narrow, wide, chain, region, fusion_config.zeta)
            assert got.fused == expected_boxes
            assert got.provenance == expected_prov

    @pytest.mark.parametrize("zeta", [0.0, 0.2, 0.9, 1.0])
    def test_oracle_equivalence_at_extreme_zetas(self, chain, region, zeta):
        # zeta = 0 removes every transferred box once any clip exists (IoU >= 0
        # holds vacuously), which the AABB prefilter must not short-circuit
        rng = np.random.default_rng(27)
        cfg = FusionConfig(zeta=zeta)
        for _ in range(50):
            narrow = random_boxes(rng, int(rng.integers(0, 6)))
            wide = random_boxes(rng, int(rng.integers(0, 6)))
            got = fuse(narrow, wide, chain, region, cfg)
            expected_boxes, expected_prov = brute_force_fuse(narrow, wide, chain, region, zeta)
            assert got.fused == expected_boxes
            assert got.provenance == expected_prov

    def test_no_inside_wide_box_in_output_and_no_suppressed_narrow(self, chain, region):
        cfg = FusionConfig()
        rng = np.random.default_rng(26)
        for _ in range(200):
            narrow = random_boxes(rng, int(rng.integers(0, 8)))
            wide = random_boxes(rng, int(rng.integers(0, 8)))
            res = fuse(narrow, wide, chain, region, cfg)
            for b, prov in zip(res.fused, res.provenance):
                if prov == "wide":
                    assert not box_inside_region(b, region)
                else:
                    for w, wprov in zip(res.fused, res.provenance):
                        if wprov == "wide":
                            q = clip_box_to_region(w, region)
                            assert iou_shape_box(q, b) < cfg.zeta
