"""Detection evaluation: greedy IoU matching (VOC-style protocol),
precision/recall/F1, and confidence-swept precision-recall curves."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .boxes import BBox, iou_boxes
from .errors import InvariantViolation, MissingFrame


@dataclass(frozen=True)
class GroundTruthFrame:
    """Annotated boxes of one frame; box confidences are ignored."""

    frame_id: str
    boxes: list[BBox]


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class MatchReport:
    """TP/FP/FN tallies with a per-class breakdown.

    Always satisfies tp + fn == number of ground truths and
    tp + fp == number of predictions it was computed from.
    """

    tp: int
    fp: int
    fn: int
    per_class: dict[str, MatchCounts] = field(default_factory=dict)


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision) points swept over a confidence-ranked pool.

    ``class_label`` is None for the overall (all-classes) curve. Recall is
    non-decreasing along the points.
    """

    points: list[tuple[float, float]]
    class_label: str | None = None


def _greedy_match_order(preds: Sequence[BBox]) -> list[int]:
    """Indices of predictions by descending confidence, stable on ties."""
    return sorted(range(len(preds)), key=lambda i: -preds[i].confidence)


def _best_unmatched_gt(pred: BBox, gts: Sequence[BBox], taken: list[bool], iou_threshold: float) -> int:
    """Index of the unmatched same-class ground truth with the highest
    IoU >= threshold, or -1. Ties go to the lowest ground-truth index."""
    best_iou = 0.0
    best_j = -1
    for j, gt in enumerate(gts):
        if taken[j] or gt.class_label != pred.class_label:
            continue
        iou = iou_boxes(pred, gt)
        if iou >= iou_threshold and iou > best_iou:
            best_iou = iou
            best_j = j
    return best_j


def match_frame(preds: Sequence[BBox], gts: Sequence[BBox], iou_threshold: float) -> MatchReport:
    """Greedy confidence-ordered matching of one frame.

    Each prediction, highest confidence first, claims the unmatched
    same-class ground truth with the highest IoU >= threshold. Unmatched
    predictions count as FP, unmatched ground truths as FN.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise InvariantViolation(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    taken = [False] * len(gts)
    by_class: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    tp = fp = 0
    for i in _greedy_match_order(preds):
        j = _best_unmatched_gt(preds[i], gts, taken, iou_threshold)
        if j >= 0:
            taken[j] = True
            tp += 1
            by_class[preds[i].class_label][0] += 1
        else:
            fp += 1
            by_class[preds[i].class_label][1] += 1
    fn = 0
    for j, gt in enumerate(gts):
        if not taken[j]:
            fn += 1
            by_class[gt.class_label][2] += 1
    per_class = {c: MatchCounts(*v) for c, v in sorted(by_class.items())}
    return MatchReport(tp=tp, fp=fp, fn=fn, per_class=per_class)


def combine_reports(reports: Sequence[MatchReport]) -> MatchReport:
    """Sum tallies over frames (per-class breakdowns included)."""
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    acc: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for r in reports:
        for c, m in r.per_class.items():
            acc[c][0] += m.tp
            acc[c][1] += m.fp
            acc[c][2] += m.fn
    return MatchReport(tp, fp, fn, {c: MatchCounts(*v) for c, v in sorted(acc.items())})


def precision(m: MatchReport | MatchCounts) -> float:
    """TP / (TP + FP); 0 when there are no predictions."""
    denom = m.tp + m.fp
    return m.tp / denom if denom else 0.0


def recall(m: MatchReport | MatchCounts) -> float:
    """TP / (TP + FN); 0 when there are no ground truths."""
    denom = m.tp + m.fn
    return m.tp / denom if denom else 0.0


def f1(m: MatchReport | MatchCounts) -> float:
    """2 P R / (P + R); 0 when both are 0."""
    p, r = precision(m), recall(m)
    return 2.0 * p * r / (p + r) if p + r else 0.0


def merge_classes(boxes: Sequence[BBox], merge_map: Mapping[str, str]) -> list[BBox]:
    """Relabel boxes through a class-merge map (e.g. the green-arrow
    super-class); labels absent from the map pass through unchanged."""
    return [
        replace(b, class_label=merge_map.get(b.class_label, b.class_label))
        for b in boxes
    ]


def pr_curve(
    preds_by_frame: Mapping[str, Sequence[BBox]],
    gts_by_frame: Mapping[str, Sequence[BBox]],
    iou_threshold: float,
    class_filter: str | None = None,
) -> PRCurve:
    """Precision-recall sweep over the confidence-ranked prediction pool.

    Predictions from all frames are pooled, sorted by descending confidence,
    and matched greedily within their frames (same semantics as
    :func:`match_frame`); one (recall, precision) point is emitted per
    prediction. The final point therefore equals the aggregate
    :func:`match_frame` outcome at confidence cutoff 0.

    Raises:
        MissingFrame: a prediction references a frame_id absent from
            ``gts_by_frame``.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise InvariantViolation(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    for frame_id in preds_by_frame:
        if frame_id not in gts_by_frame:
            raise MissingFrame(f"predictions reference unknown frame_id {frame_id!r}")

    def wanted(b: BBox) -> bool:
        return class_filter is None or b.class_label == class_filter

    gts = {fid: [b for b in boxes if wanted(b)] for fid, boxes in gts_by_frame.items()}
    total_gt = sum(len(v) for v in gts.values())
    taken = {fid: [False] * len(v) for fid, v in gts.items()}

    pool: list[tuple[str, BBox]] = []
    for fid, boxes in preds_by_frame.items():
        pool.extend((fid, b) for b in boxes if wanted(b))
    pool.sort(key=lambda item: -item[1].confidence)  # stable: ties keep pool order

    points: list[tuple[float, float]] = []
    tp = fp = 0
    for fid, pred in pool:
        j = _best_unmatched_gt(pred, gts[fid], taken[fid], iou_threshold)
        if j >= 0:
            taken[fid][j] = True
            tp += 1
        else:
            fp += 1
        r = tp / total_gt if total_gt else 0.0
        p = tp / (tp + fp)
        points.append((r, p))
    return PRCurve(points=points, class_label=class_filter)
