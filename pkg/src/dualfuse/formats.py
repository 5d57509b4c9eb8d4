"""On-disk formats: YOLO annotation text, PASCAL-VOC-style annotation XML,
calibration bundles (JSON), correspondence lists, frame-pair indexing and
report tables.

Conventions, fixed here once:

* Internal boxes are 0-based, half-open, real-valued pixel rectangles.
* YOLO lines are ``class_index x_center y_center width height [confidence]``
  with coordinates normalized by the image size; a missing confidence column
  reads as 1.0 and a confidence of exactly 1.0 is omitted when writing.
* VOC ``bndbox`` fields are 1-based inclusive pixel indices; parsing converts
  ``(xmin, ymin, xmax, ymax)`` to ``(xmin-1, ymin-1, xmax, ymax)`` and
  serialization rounds to the nearest integer (so a round trip moves a
  coordinate by at most 0.5 px). An optional ``<confidence>`` element carries
  detection scores.
* Parsers reject rather than repair: malformed syntax raises, but boxes
  extending past the frame are kept as-is (no clamping).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import DEFAULT_CLASSES, BBox
from .camera import CameraIntrinsics, DistortionCoeffs
from .errors import (
    ClassIndexOutOfRange,
    InvariantViolation,
    ParseError,
    SchemaError,
    UnknownClass,
)
from .homography import Correspondence, Homography, PlaneSpec, RelativePose
from .transfer import TransformChain

# ---------------------------------------------------------------------------
# YOLO annotation text
# ---------------------------------------------------------------------------


def parse_yolo_annotation(
    text: str,
    image_width: int,
    image_height: int,
    class_names: tuple[str, ...] | list[str] = DEFAULT_CLASSES,
) -> list[BBox]:
    """Parse YOLO-format lines into absolute-pixel boxes.

    Raises:
        ParseError: malformed line (names the line number).
        ClassIndexOutOfRange: class index outside ``class_names``.
    """
    boxes: list[BBox] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) not in (5, 6):
            raise ParseError(f"expected 5 or 6 fields, got {len(fields)}", line=lineno)
        try:
            idx = int(fields[0])
            xc, yc, w, h = (float(v) for v in fields[1:5])
            conf = float(fields[5]) if len(fields) == 6 else 1.0
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno) from exc
        if not 0 <= idx < len(class_names):
            raise ClassIndexOutOfRange(
                f"class index {idx} outside 0..{len(class_names) - 1}", line=lineno)
        try:
            boxes.append(BBox(
                x_min=(xc - w / 2.0) * image_width,
                y_min=(yc - h / 2.0) * image_height,
                x_max=(xc + w / 2.0) * image_width,
                y_max=(yc + h / 2.0) * image_height,
                class_label=class_names[idx],
                confidence=conf,
            ))
        except InvariantViolation as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return boxes


def serialize_yolo_annotation(
    boxes: list[BBox],
    image_width: int,
    image_height: int,
    class_names: tuple[str, ...] | list[str] = DEFAULT_CLASSES,
) -> str:
    """Inverse of :func:`parse_yolo_annotation` up to 6-decimal normalization.

    Raises:
        UnknownClass: a box label is missing from ``class_names``.
    """
    index = {name: i for i, name in enumerate(class_names)}
    lines = []
    for b in boxes:
        if b.class_label not in index:
            raise UnknownClass(f"class {b.class_label!r} is not in the class list")
        xc = (b.x_min + b.x_max) / 2.0 / image_width
        yc = (b.y_min + b.y_max) / 2.0 / image_height
        w = b.width / image_width
        h = b.height / image_height
        line = f"{index[b.class_label]} {xc:.6f} {yc:.6f} {w:.6f} {h:.6f}"
        if b.confidence != 1.0:
            line += f" {b.confidence:.6f}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# PASCAL-VOC-style annotation XML
# ---------------------------------------------------------------------------


def _voc_child(parent: ET.Element, tag: str) -> ET.Element:
    child = parent.find(tag)
    if child is None:
        raise ParseError(tag)
    return child


def _voc_number(parent: ET.Element, tag: str) -> float:
    child = _voc_child(parent, tag)
    try:
        return float(child.text)  # type: ignore[arg-type]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{tag} is not numeric") from exc


def parse_voc_annotation(xml_text: str) -> tuple[list[BBox], tuple[int, int]]:
    """Parse a VOC XML document; returns (boxes, (width, height)).

    Raises:
        ParseError: invalid XML or a missing/malformed element (named).
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise ParseError(f"invalid XML: {exc}") from exc
    size = _voc_child(root, "size")
    width = int(_voc_number(size, "width"))
    height = int(_voc_number(size, "height"))
    boxes: list[BBox] = []
    for obj in root.findall("object"):
        name = _voc_child(obj, "name").text or ""
        bndbox = _voc_child(obj, "bndbox")
        xmin = _voc_number(bndbox, "xmin")
        ymin = _voc_number(bndbox, "ymin")
        xmax = _voc_number(bndbox, "xmax")
        ymax = _voc_number(bndbox, "ymax")
        conf_el = obj.find("confidence")
        conf = float(conf_el.text) if conf_el is not None and conf_el.text else 1.0
        try:
            boxes.append(BBox(xmin - 1.0, ymin - 1.0, xmax, ymax,
                              class_label=name, confidence=conf))
        except InvariantViolation as exc:
            raise ParseError(f"bndbox: {exc}") from exc
    return boxes, (width, height)


def serialize_voc_annotation(
    boxes: list[BBox],
    image_width: int,
    image_height: int,
    filename: str = "frame.png",
) -> str:
    """Write boxes as a VOC XML document (integer 1-based inclusive pixels)."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = filename
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(image_width)
    ET.SubElement(size, "height").text = str(image_height)
    ET.SubElement(size, "depth").text = "3"
    for b in boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = b.class_label
        bndbox = ET.SubElement(obj, "bndbox")
        ET.SubElement(bndbox, "xmin").text = str(int(round(float(b.x_min))) + 1)
        ET.SubElement(bndbox, "ymin").text = str(int(round(float(b.y_min))) + 1)
        ET.SubElement(bndbox, "xmax").text = str(int(round(float(b.x_max))))
        ET.SubElement(bndbox, "ymax").text = str(int(round(float(b.y_max))))
        if b.confidence != 1.0:
            ET.SubElement(obj, "confidence").text = f"{b.confidence:.6f}"
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


# ---------------------------------------------------------------------------
# Calibration bundle (JSON)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBundle:
    """Everything the fusion pass needs, as one loadable unit."""

    narrow_intrinsics: CameraIntrinsics
    narrow_distortion: DistortionCoeffs
    wide_intrinsics: CameraIntrinsics
    wide_distortion: DistortionCoeffs
    homography: Homography
    pose: RelativePose | None = None
    plane: PlaneSpec | None = None
    classes: tuple[str, ...] = DEFAULT_CLASSES

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise InvariantViolation("class names must be unique")

    def chain(self) -> TransformChain:
        return TransformChain(
            Kn=self.narrow_intrinsics,
            Kw=self.wide_intrinsics,
            dn=self.narrow_distortion,
            dw=self.wide_distortion,
            H=self.homography,
        )


_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height", "k1", "k2", "k3", "p1", "p2")


def _camera_from_dict(doc: dict, key: str) -> tuple[CameraIntrinsics, DistortionCoeffs]:
    if key not in doc:
        raise SchemaError("missing camera block", key=key)
    block = doc[key]
    if not isinstance(block, dict):
        raise SchemaError("camera block must be an object", key=key)
    for field_name in _CAMERA_KEYS:
        if field_name not in block:
            raise SchemaError("missing field", key=f"{key}.{field_name}")
        if not isinstance(block[field_name], (int, float)) or isinstance(block[field_name], bool):
            raise SchemaError("field must be a number", key=f"{key}.{field_name}")
    intr = CameraIntrinsics(
        fx=float(block["fx"]), fy=float(block["fy"]),
        cx=float(block["cx"]), cy=float(block["cy"]),
        width=int(block["width"]), height=int(block["height"]),
    )
    dist = DistortionCoeffs(
        k1=float(block["k1"]), k2=float(block["k2"]), k3=float(block["k3"]),
        p1=float(block["p1"]), p2=float(block["p2"]),
    )
    return intr, dist


def _matrix_from_list(values, key: str, shape: tuple[int, int]) -> np.ndarray:
    flat = shape[0] * shape[1]
    if (not isinstance(values, list) or len(values) != flat
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values)):
        raise SchemaError(f"expected {flat} numbers (row-major)", key=key)
    return np.array(values, dtype=float).reshape(shape)


def parse_calibration(text: str) -> CalibrationBundle:
    """Load and re-validate a calibration bundle document.

    Raises:
        SchemaError: missing/ill-typed key (named).
        InvariantViolation: a component fails its invariants (e.g. a pose
            rotation with det != 1).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("bundle must be a JSON object")

    narrow_intr, narrow_dist = _camera_from_dict(doc, "narrow")
    wide_intr, wide_dist = _camera_from_dict(doc, "wide")

    if "homography" not in doc:
        raise SchemaError("missing field", key="homography")
    homography = Homography(_matrix_from_list(doc["homography"], "homography", (3, 3)))

    pose = None
    if doc.get("pose") is not None:
        block = doc["pose"]
        if not isinstance(block, dict) or "R" not in block or "t" not in block:
            raise SchemaError("pose needs R (9 numbers) and t (3 numbers)", key="pose")
        pose = RelativePose(
            R=_matrix_from_list(block["R"], "pose.R", (3, 3)),
            t=_matrix_from_list(block["t"], "pose.t", (3, 1)).reshape(3),
        )

    plane = None
    if doc.get("plane") is not None:
        block = doc["plane"]
        if not isinstance(block, dict) or "n" not in block or "d" not in block:
            raise SchemaError("plane needs n (3 numbers) and d", key="plane")
        if not isinstance(block["d"], (int, float)) or isinstance(block["d"], bool):
            raise SchemaError("field must be a number", key="plane.d")
        plane = PlaneSpec(
            n=_matrix_from_list(block["n"], "plane.n", (3, 1)).reshape(3),
            d=float(block["d"]),
        )

    classes = DEFAULT_CLASSES
    if doc.get("classes") is not None:
        raw = doc["classes"]
        if not isinstance(raw, list) or not all(isinstance(c, str) for c in raw):
            raise SchemaError("classes must be a list of strings", key="classes")
        classes = tuple(raw)

    return CalibrationBundle(
        narrow_intrinsics=narrow_intr,
        narrow_distortion=narrow_dist,
        wide_intrinsics=wide_intr,
        wide_distortion=wide_dist,
        homography=homography,
        pose=pose,
        plane=plane,
        classes=classes,
    )


def serialize_calibration(bundle: CalibrationBundle) -> str:
    """Inverse of :func:`parse_calibration` (exact for finite values)."""
    def camera_block(intr: CameraIntrinsics, dist: DistortionCoeffs) -> dict:
        return {
            "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "width": intr.width, "height": intr.height,
            "k1": dist.k1, "k2": dist.k2, "k3": dist.k3,
            "p1": dist.p1, "p2": dist.p2,
        }

    doc: dict = {
        "narrow": camera_block(bundle.narrow_intrinsics, bundle.narrow_distortion),
        "wide": camera_block(bundle.wide_intrinsics, bundle.wide_distortion),
        "homography": [float(v) for v in bundle.homography.h.reshape(-1)],
        "classes": list(bundle.classes),
    }
    if bundle.pose is not None:
        doc["pose"] = {
            "R": [float(v) for v in bundle.pose.R.reshape(-1)],
            "t": [float(v) for v in bundle.pose.t],
        }
    if bundle.plane is not None:
        doc["plane"] = {"n": [float(v) for v in bundle.plane.n], "d": float(bundle.plane.d)}
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Correspondence lists
# ---------------------------------------------------------------------------


def parse_correspondences(text: str) -> list[Correspondence]:
    """Parse ``src_x src_y dst_x dst_y`` lines (# comments allowed), order kept.

    Raises:
        ParseError: with the offending line number.
    """
    pairs: list[Correspondence] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(f"expected 4 numbers, got {len(fields)}", line=lineno)
        try:
            sx, sy, dx, dy = (float(v) for v in fields)
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno) from exc
        if not all(math.isfinite(v) for v in (sx, sy, dx, dy)):
            raise ParseError("coordinates must be finite", line=lineno)
        pairs.append(Correspondence(src=(sx, sy), dst=(dx, dy)))
    return pairs


# ---------------------------------------------------------------------------
# Frame-pair indexing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FramePairIndex:
    """Synchronized-pair file listing: (narrow_file, wide_file, frame_id)."""

    entries: list[tuple[Path, Path, str]]
    unpaired: list[Path]  # diagnostics, not an error

    def __len__(self) -> int:
        return len(self.entries)


def build_frame_pair_index(narrow_dir: str | Path, wide_dir: str | Path) -> FramePairIndex:
    """Pair files across the two directories by identical filename stem.

    Unpaired files are reported in the diagnostics list. Raises OSError when
    a directory cannot be read.
    """
    narrow_dir, wide_dir = Path(narrow_dir), Path(wide_dir)
    narrow = {p.stem: p for p in sorted(narrow_dir.iterdir()) if p.is_file()}
    wide = {p.stem: p for p in sorted(wide_dir.iterdir()) if p.is_file()}
    entries = [
        (narrow[stem], wide[stem], stem)
        for stem in sorted(narrow.keys() & wide.keys())
    ]
    unpaired = sorted(
        [narrow[s] for s in narrow.keys() - wide.keys()]
        + [wide[s] for s in wide.keys() - narrow.keys()]
    )
    return FramePairIndex(entries=entries, unpaired=unpaired)


# ---------------------------------------------------------------------------
# Atomic output and report tables
# ---------------------------------------------------------------------------


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file + rename so interrupted runs never leave
    truncated output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _json_coerce(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value)}")


def write_json_atomic(path: str | Path, payload) -> None:
    write_text_atomic(
        path, json.dumps(payload, indent=2, sort_keys=True, default=_json_coerce) + "\n")


def format_metrics_table(rows: list[dict]) -> str:
    """Tab-separated metrics table: class, tp, fp, fn, precision, recall, f1."""
    out = ["class\ttp\tfp\tfn\tprecision\trecall\tf1"]
    for row in rows:
        out.append(
            f"{row['class']}\t{row['tp']}\t{row['fp']}\t{row['fn']}"
            f"\t{row['precision']:.6f}\t{row['recall']:.6f}\t{row['f1']:.6f}"
        )
    return "\n".join(out) + "\n"


def format_pr_points(curves: dict[str, list[tuple[float, float]]]) -> str:
    """Tab-separated PR points: curve label, point rank, recall, precision."""
    out = ["curve\trank\trecall\tprecision"]
    for label, points in curves.items():
        for rank, (r, p) in enumerate(points, start=1):
            out.append(f"{label}\t{rank}\t{r:.6f}\t{p:.6f}")
    return "\n".join(out) + "\n"
