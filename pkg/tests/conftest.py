"""Shared fixtures: camera rigs, transform chains and box generators."""

from __future__ import annotations

import numpy as np
import pytest

from dualfuse import (
    BBox,
    CameraIntrinsics,
    DistortionCoeffs,
    FusionConfig,
    Homography,
    TransformChain,
    compute_region_r0,
)
from dualfuse.simulate import default_rig


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def chain(rig):
    return rig.chain()


@pytest.fixture(scope="session")
def region(chain):
    return compute_region_r0(chain)


@pytest.fixture
def identity_chain():
    """Same camera on both sides, no distortion, identity homography."""
    K = CameraIntrinsics.from_hfov(90.0, 1920, 1080)
    zero = DistortionCoeffs()
    return TransformChain(Kn=K, Kw=K, dn=zero, dw=zero, H=Homography.identity())


def scaling_chain(scale: float) -> TransformChain:
    """Distortion-free chain whose homography is a pure pixel scaling."""
    K = CameraIntrinsics.from_hfov(90.0, 1920, 1080)
    zero = DistortionCoeffs()
    return TransformChain(
        Kn=K, Kw=K, dn=zero, dw=zero,
        H=Homography(np.diag([scale, scale, 1.0])),
    )


def random_boxes(
    rng: np.random.Generator,
    count: int,
    width: float = 1920.0,
    height: float = 1080.0,
    min_size: float = 4.0,
    max_size: float = 80.0,
    classes: tuple[str, ...] = ("red", "green", "yellow"),
) -> list[BBox]:
    boxes = []
    for _ in range(count):
        w = rng.uniform(min_size, max_size)
        h = rng.uniform(min_size, max_size)
        x0 = rng.uniform(0.0, width - w)
        y0 = rng.uniform(0.0, height - h)
        boxes.append(BBox(
            x0, y0, x0 + w, y0 + h,
            class_label=classes[rng.integers(len(classes))],
            confidence=float(rng.uniform(0.05, 1.0)),
        ))
    return boxes


@pytest.fixture
def fusion_config():
    return FusionConfig()
