"""Dual-camera traffic-light detection fusion toolkit.

Transfers detections from a narrow-angle camera frame into the synchronized
wide-angle frame (undistort, planar homography, redistort), suppresses
duplicate detections of objects seen by both cameras, evaluates detector
output with IoU-matched precision/recall/F1 and PR curves, and ships a
synthetic dual-camera rig for end-to-end verification.
"""

from .boxes import DEFAULT_CLASSES, BBox, box_area, iou_boxes
from .camera import (
    CameraIntrinsics,
    DistortionCoeffs,
    distort_point,
    normalized_to_pixel,
    pixel_to_normalized,
    undistort_point,
)
from .errors import (
    AtInfinity,
    ClassIndexOutOfRange,
    DegenerateBox,
    DegenerateConfiguration,
    DualfuseError,
    InvalidRegion,
    InvariantViolation,
    MissingFrame,
    NonConvergent,
    ParseError,
    SchemaError,
    Singular,
    TooFewPoints,
    UnknownClass,
)
from .evaluation import (
    GroundTruthFrame,
    MatchCounts,
    MatchReport,
    PRCurve,
    combine_reports,
    f1,
    match_frame,
    merge_classes,
    pr_curve,
    precision,
    recall,
)
from .formats import (
    CalibrationBundle,
    FramePairIndex,
    build_frame_pair_index,
    parse_calibration,
    parse_correspondences,
    parse_voc_annotation,
    parse_yolo_annotation,
    serialize_calibration,
    serialize_voc_annotation,
    serialize_yolo_annotation,
)
from .fusion import (
    FusionConfig,
    FusionResult,
    RegionR0,
    box_inside_region,
    clip_box_to_region,
    compute_region_r0,
    fuse,
    iou_shape_box,
)
from .geometry import convex_hull, polygon_area
from .homography import (
    Correspondence,
    Homography,
    PlaneSpec,
    RelativePose,
    apply_homography,
    estimate_homography,
    homography_from_extrinsics,
)
from .simulate import (
    DetectorNoiseModel,
    ExperimentReport,
    RigSpec,
    SceneConfig,
    SceneObject,
    default_noise,
    default_rig,
    generate_scene,
    project_ground_truth,
    run_experiment,
    simulate_detections,
)
from .transfer import (
    TransformChain,
    transform_bbox,
    transform_detection_set,
    transform_point,
)

__version__ = "0.1.0"
