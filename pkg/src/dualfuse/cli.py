"""Command-line front end: calibrate, transform, fuse, evaluate, simulate.

Exit codes are stable across subcommands: 0 success, 2 input/parse error,
3 numeric/degenerate failure. All randomness flows from --seed; outputs are
written atomically (temp file + rename). Set DUALFUSE_LOG=DEBUG|INFO|... for
verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .boxes import DEFAULT_CLASSES, BBox
from .errors import (
    AtInfinity,
    DegenerateBox,
    DegenerateConfiguration,
    InvalidRegion,
    InvariantViolation,
    NonConvergent,
    ParseError,
    SchemaError,
    Singular,
    TooFewPoints,
    UnknownClass,
)
from .evaluation import (
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
    build_frame_pair_index,
    format_metrics_table,
    format_pr_points,
    parse_calibration,
    parse_correspondences,
    parse_voc_annotation,
    parse_yolo_annotation,
    serialize_calibration,
    serialize_yolo_annotation,
    write_json_atomic,
    write_text_atomic,
)
from .fusion import FusionConfig, compute_region_r0, fuse
from .homography import estimate_homography
from .simulate import (
    SceneConfig,
    default_noise,
    default_rig,
    noise_from_dict,
    rig_from_dict,
    rig_to_dict,
    run_experiment,
    scene_config_from_dict,
)
from .transfer import transform_detection_set

logger = logging.getLogger("dualfuse")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

_INPUT_ERRORS = (ParseError, SchemaError, UnknownClass, InvariantViolation, OSError,
                 json.JSONDecodeError)
_NUMERIC_ERRORS = (TooFewPoints, DegenerateConfiguration, Singular, NonConvergent,
                   AtInfinity, InvalidRegion, DegenerateBox)


def _load_bundle(path: str) -> CalibrationBundle:
    return parse_calibration(Path(path).read_text())


def _read_yolo_dir_file(path: Path, width: int, height: int, classes) -> list[BBox]:
    return parse_yolo_annotation(path.read_text(), width, height, classes)


def cmd_estimate_homography(args: argparse.Namespace) -> int:
    pairs = parse_correspondences(Path(args.correspondences).read_text())
    homography, residual = estimate_homography(pairs)
    if args.bundle:
        base = _load_bundle(args.bundle)
    else:
        rig = default_rig()
        base = CalibrationBundle(
            narrow_intrinsics=rig.narrow_intrinsics,
            narrow_distortion=rig.narrow_distortion,
            wide_intrinsics=rig.wide_intrinsics,
            wide_distortion=rig.wide_distortion,
            homography=homography,
            pose=rig.pose,
            plane=rig.plane,
        )
    updated = replace(base, homography=homography)
    write_text_atomic(args.out, serialize_calibration(updated))
    print(f"estimated homography from {len(pairs)} correspondences; "
          f"RMS residual {residual:.6g} px; wrote {args.out}")
    return EXIT_OK


def _process_pairs(entries, worker, jobs: int):
    """Run ``worker`` over indexed entries, preserving entry order in the
    returned list regardless of the worker pool size."""
    if jobs <= 1 or len(entries) <= 1:
        return [worker(e) for e in entries]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, entries))


def cmd_transform(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    chain = bundle.chain()
    in_dir = Path(args.narrow)
    out_dir = Path(args.out)
    files = sorted(p for p in in_dir.iterdir() if p.is_file())
    if not files:
        print("transformed 0 file(s)")
        return EXIT_OK
    out_dir.mkdir(parents=True, exist_ok=True)

    def worker(path: Path) -> dict:
        try:
            boxes = _read_yolo_dir_file(
                path, bundle.narrow_intrinsics.width, bundle.narrow_intrinsics.height,
                bundle.classes)
        except ParseError as exc:
            logger.warning("skipping %s: %s", path.name, exc)
            return {"file": path.name, "failed": True, "boxes_in": 0, "boxes_out": 0, "dropped": 0}
        transformed, dropped = transform_detection_set(boxes, chain)
        text = serialize_yolo_annotation(
            transformed, bundle.wide_intrinsics.width, bundle.wide_intrinsics.height,
            bundle.classes)
        write_text_atomic(out_dir / path.name, text)
        return {"file": path.name, "failed": False,
                "boxes_in": len(boxes), "boxes_out": len(transformed), "dropped": dropped}

    results = _process_pairs(files, worker, args.jobs)
    summary = {
        "files_processed": sum(1 for r in results if not r["failed"]),
        "files_failed": sum(1 for r in results if r["failed"]),
        "boxes_in": sum(r["boxes_in"] for r in results),
        "boxes_out": sum(r["boxes_out"] for r in results),
        "dropped_boxes": sum(r["dropped"] for r in results),
        "files": results,
    }
    write_json_atomic(out_dir / "transform_summary.json", summary)
    print(f"transformed {summary['files_processed']} file(s), "
          f"{summary['boxes_out']}/{summary['boxes_in']} boxes kept, "
          f"{summary['dropped_boxes']} dropped, {summary['files_failed']} file failure(s)")
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    chain = bundle.chain()
    r0 = compute_region_r0(chain)
    cfg = FusionConfig(zeta=args.zeta, faithful_mode=args.faithful)
    index = build_frame_pair_index(args.narrow, args.wide)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def worker(entry) -> dict:
        narrow_path, wide_path, frame_id = entry
        try:
            narrow = _read_yolo_dir_file(
                narrow_path, bundle.narrow_intrinsics.width,
                bundle.narrow_intrinsics.height, bundle.classes)
            wide = _read_yolo_dir_file(
                wide_path, bundle.wide_intrinsics.width,
                bundle.wide_intrinsics.height, bundle.classes)
        except ParseError as exc:
            logger.warning("skipping pair %s: %s", frame_id, exc)
            return {"frame_id": frame_id, "failed": True,
                    "removed_wide": 0, "removed_narrow": 0, "dropped": 0, "fused": 0}
        result = fuse(narrow, wide, chain, r0, cfg)
        text = serialize_yolo_annotation(
            result.fused, bundle.wide_intrinsics.width, bundle.wide_intrinsics.height,
            bundle.classes)
        write_text_atomic(out_dir / f"{frame_id}.txt", text)
        return {"frame_id": frame_id, "failed": False,
                "removed_wide": result.removed_wide,
                "removed_narrow": result.removed_narrow,
                "dropped": result.dropped_narrow,
                "fused": len(result.fused)}

    results = _process_pairs(index.entries, worker, args.jobs)
    summary = {
        "pairs_processed": sum(1 for r in results if not r["failed"]),
        "pairs_failed": sum(1 for r in results if r["failed"]),
        "unpaired_files": [str(p) for p in index.unpaired],
        "removed_wide": sum(r["removed_wide"] for r in results),
        "removed_narrow": sum(r["removed_narrow"] for r in results),
        "dropped_boxes": sum(r["dropped"] for r in results),
        "fused_boxes": sum(r["fused"] for r in results),
        "pairs": results,
    }
    write_json_atomic(out_dir / "fuse_summary.json", summary)
    print(f"fused {summary['pairs_processed']} pair(s): {summary['fused_boxes']} boxes out, "
          f"removed {summary['removed_wide']} wide / {summary['removed_narrow']} narrow, "
          f"dropped {summary['dropped_boxes']}, {summary['pairs_failed']} pair failure(s)")
    return EXIT_OK


def _read_annotation_file(path: Path, width: int, height: int, classes) -> list[BBox]:
    try:
        if path.suffix.lower() == ".xml":
            boxes, _ = parse_voc_annotation(path.read_text())
            return boxes
        return parse_yolo_annotation(path.read_text(), width, height, classes)
    except ParseError as exc:
        raise ParseError(str(exc), path=str(path)) from exc


def cmd_eval(args: argparse.Namespace) -> int:
    classes = tuple(
        line.strip() for line in Path(args.classes).read_text().splitlines() if line.strip()
    ) if args.classes else None
    classes = classes or DEFAULT_CLASSES
    merge_map: dict[str, str] = {}
    if args.merge_map:
        raw = json.loads(Path(args.merge_map).read_text())
        if not isinstance(raw, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in raw.items()):
            raise SchemaError("merge map must be a JSON object of old->new class names")
        merge_map = raw

    index = build_frame_pair_index(args.preds, args.gt)
    preds_by_frame: dict[str, list[BBox]] = {}
    gts_by_frame: dict[str, list[BBox]] = {}
    for pred_path, gt_path, frame_id in index.entries:
        preds = _read_annotation_file(pred_path, args.width, args.height, classes)
        gts = _read_annotation_file(gt_path, args.width, args.height, classes)
        if merge_map:
            preds = merge_classes(preds, merge_map)
            gts = merge_classes(gts, merge_map)
        if args.conf_cutoff > 0.0:
            preds = [b for b in preds if b.confidence >= args.conf_cutoff]
        preds_by_frame[frame_id] = preds
        gts_by_frame[frame_id] = gts

    reports = [
        match_frame(preds_by_frame[fid], gts_by_frame[fid], args.iou)
        for fid in preds_by_frame
    ]
    overall = combine_reports(reports)
    class_labels = sorted(overall.per_class.keys())
    rows = []
    for label in class_labels:
        counts = overall.per_class[label]
        rows.append({"class": label, "tp": counts.tp, "fp": counts.fp, "fn": counts.fn,
                     "precision": precision(counts), "recall": recall(counts), "f1": f1(counts)})
    rows.append({"class": "overall", "tp": overall.tp, "fp": overall.fp, "fn": overall.fn,
                 "precision": precision(overall), "recall": recall(overall), "f1": f1(overall)})

    curves = {"overall": pr_curve(preds_by_frame, gts_by_frame, args.iou)}
    for label in class_labels:
        curves[label] = pr_curve(preds_by_frame, gts_by_frame, args.iou, class_filter=label)

    best = None
    for r, p in curves["overall"].points:
        score = 2.0 * p * r / (p + r) if p + r else 0.0
        if best is None or score > best["f1"]:
            best = {"f1": score, "precision": p, "recall": r}
    report = {
        "iou_threshold": args.iou,
        "conf_cutoff": args.conf_cutoff,
        "frames": len(index.entries),
        "unpaired_files": [str(p) for p in index.unpaired],
        "merge_map": merge_map,
        "per_class": rows[:-1],
        "overall": rows[-1],
        "best_f1": best or {"f1": 0.0, "precision": 0.0, "recall": 0.0},
    }
    report_path = Path(args.report)
    write_json_atomic(report_path, report)
    table = format_metrics_table(rows)
    write_text_atomic(report_path.with_suffix(".tsv"), table)
    write_text_atomic(
        report_path.with_suffix(".pr.tsv"),
        format_pr_points({label: c.points for label, c in curves.items()}))
    print(table, end="")
    if args.best_f1:
        print(f"best-F1 point: f1={best['f1']:.6f} precision={best['precision']:.6f} "
              f"recall={best['recall']:.6f}" if best else "best-F1 point: no predictions")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    rig = rig_from_dict(json.loads(Path(args.rig_config).read_text())) if args.rig_config else default_rig()
    scene = scene_config_from_dict(json.loads(Path(args.scene_config).read_text())) \
        if args.scene_config else SceneConfig()
    noise = noise_from_dict(json.loads(Path(args.noise_config).read_text())) \
        if args.noise_config else default_noise()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_sink = None
    if args.export_annotations:
        export_dir = out_dir / "annotations"
        for sub in ("ground_truth", "wide-only", "narrow-only", "fused"):
            (export_dir / sub).mkdir(parents=True, exist_ok=True)
        width = rig.wide_intrinsics.width
        height = rig.wide_intrinsics.height

        def frame_sink(frame_id, common_gt, outputs):
            write_text_atomic(
                export_dir / "ground_truth" / f"{frame_id}.txt",
                serialize_yolo_annotation(common_gt.boxes, width, height))
            for name, boxes in outputs.items():
                write_text_atomic(
                    export_dir / name / f"{frame_id}.txt",
                    serialize_yolo_annotation(boxes, width, height))

    report = run_experiment(
        rig=rig,
        scene_config=scene,
        noise=noise,
        zeta=args.zeta,
        iou_threshold=args.iou,
        trials=args.trials,
        seed=args.seed,
        faithful_mode=args.faithful,
        frame_sink=frame_sink,
    )

    payload = report.to_dict()
    payload["rig"] = rig_to_dict(rig)
    payload["scene_config"] = {
        "count": scene.count,
        "depth_range": list(scene.depth_range),
        "lateral_range": list(scene.lateral_range),
        "height_range": list(scene.height_range),
        "width_m_range": list(scene.width_m_range),
        "height_m_range": list(scene.height_m_range),
    }
    payload["noise"] = {
        "dropout_base": noise.dropout_base,
        "dropout_scale": noise.dropout_scale,
        "dropout_softness": noise.dropout_softness,
        "jitter_sigma": noise.jitter_sigma,
        "conf_min": noise.conf_min,
        "conf_max": noise.conf_max,
        "rng_seed": noise.rng_seed,
    }
    write_json_atomic(out_dir / "report.json", payload)

    rows = []
    for name, res in report.systems.items():
        rows.append({"class": name, "tp": res.report.tp, "fp": res.report.fp,
                     "fn": res.report.fn, "precision": res.mean_precision,
                     "recall": res.mean_recall, "f1": res.mean_f1})
    write_text_atomic(out_dir / "metrics.tsv", format_metrics_table(rows))
    pr_tables = {
        f"{name}@iou{thr:g}": curve.points
        for name, res in report.systems.items()
        for thr, curve in res.curves.items()
    }
    write_text_atomic(out_dir / "pr_points.tsv", format_pr_points(pr_tables))

    for name, res in report.systems.items():
        print(f"{name}: precision={res.mean_precision:.3f} "
              f"recall={res.mean_recall:.3f} f1={res.mean_f1:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualfuse",
        description="Dual-camera traffic-light detection fusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-homography",
                       help="estimate the narrow->wide homography from a correspondence file")
    p.add_argument("correspondences", help="text file of src_x src_y dst_x dst_y lines")
    p.add_argument("--out", required=True, help="calibration bundle to write")
    p.add_argument("--bundle", default=None,
                   help="existing bundle to update (keeps cameras, replaces homography)")
    p.set_defaults(func=cmd_estimate_homography)

    p = sub.add_parser("transform",
                       help="transfer narrow-frame YOLO detections into the wide frame")
    p.add_argument("--bundle", required=True)
    p.add_argument("--narrow", required=True, help="directory of narrow-frame YOLO files")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fuse", help="fuse paired narrow/wide YOLO detection files")
    p.add_argument("--bundle", required=True)
    p.add_argument("--narrow", required=True)
    p.add_argument("--wide", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--zeta", type=float, default=0.5, help="IoU suppression threshold")
    p.add_argument("--faithful", action=argparse.BooleanOptionalAction, default=True,
                   help="remove wide boxes fully inside the mapped region unconditionally")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="precision/recall/F1 and PR curves over paired files")
    p.add_argument("--preds", required=True, help="directory of prediction files (YOLO or VOC)")
    p.add_argument("--gt", required=True, help="directory of ground-truth files")
    p.add_argument("--report", required=True, help="JSON report path (TSVs written alongside)")
    p.add_argument("--iou", type=float, default=0.3, help="IoU matching threshold")
    p.add_argument("--merge-map", default=None,
                   help="JSON file mapping class names onto super-classes")
    p.add_argument("--conf-cutoff", type=float, default=0.0,
                   help="drop predictions below this confidence before matching")
    p.add_argument("--best-f1", action="store_true",
                   help="also print the best-F1 point of the overall PR curve")
    p.add_argument("--classes", default=None, help="class list file (one name per line)")
    p.add_argument("--width", type=int, default=1920, help="frame width for YOLO files")
    p.add_argument("--height", type=int, default=1080, help="frame height for YOLO files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="run the synthetic dual-camera experiment")
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--zeta", type=float, default=0.5)
    p.add_argument("--iou", type=float, default=0.3)
    p.add_argument("--faithful", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--rig-config", default=None, help="JSON rig description")
    p.add_argument("--scene-config", default=None, help="JSON scene placement config")
    p.add_argument("--noise-config", default=None, help="JSON detector noise config")
    p.add_argument("--export-annotations", action="store_true",
                   help="also write per-trial YOLO ground truth and detections")
    p.set_defaults(func=cmd_simulate)

    return parser


def _validate_args(args: argparse.Namespace) -> None:
    for name in ("zeta", "conf_cutoff"):
        value = getattr(args, name, None)
        if value is not None and not 0.0 <= value <= 1.0:
            raise InvariantViolation(f"--{name.replace('_', '-')} must be in [0, 1], got {value}")
    iou = getattr(args, "iou", None)
    if iou is not None and not 0.0 < iou <= 1.0:
        raise InvariantViolation(f"--iou must be in (0, 1], got {iou}")
    jobs = getattr(args, "jobs", None)
    if jobs is not None and jobs < 1:
        raise InvariantViolation(f"--jobs must be >= 1, got {jobs}")
    trials = getattr(args, "trials", None)
    if trials is not None and trials < 1:
        raise InvariantViolation(f"--trials must be >= 1, got {trials}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DUALFUSE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        _validate_args(args)
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
