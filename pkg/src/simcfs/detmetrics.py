"""Detection evaluation: greedy matching, 101-point AP and mAP.

Matching follows the usual protocol: detections are visited in order of
descending confidence (input order breaks ties) and each one claims the
still-unmatched ground truth of the same image with the highest IoU, if that
IoU reaches the threshold (inclusive).

AP uses 101-point interpolation at recall levels 0.00, 0.01, ..., 1.00.
Recall comparisons are done in integer arithmetic so that e.g. a recall of
3/5 counts as reaching the 0.60 level exactly.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .boxgeom import BBox, iou, side_penalty
from .labels import list_label_files, read_label_file

logger = logging.getLogger(__name__)

COCO_THRESHOLDS = tuple(t / 100 for t in range(50, 100, 5))
RECALL_LEVELS = 101


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionRecord:
    image_id: Hashable
    class_id: int
    box: BBox
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthRecord:
    image_id: Hashable
    class_id: int
    box: BBox

    def __post_init__(self):
        if self.box.area <= 0:
            raise ValueError(f"ground truth box has zero area: {self.box.as_tuple()}")


@dataclass
class EvalReport:
    per_class_ap: dict[int, float]
    map_value: float
    thresholds: tuple[float, ...]
    over_detection_rate: float
    notes: list[str] = field(default_factory=list)

    def to_json(self, class_names: Sequence[str] | None = None) -> dict:
        def name(c):
            if class_names is not None and 0 <= c < len(class_names):
                return class_names[c]
            return str(c)

        return {
            "map": self.map_value,
            "thresholds": list(self.thresholds),
            "per_class_ap": {name(c): ap for c, ap in sorted(self.per_class_ap.items())},
            "over_detection_rate": self.over_detection_rate,
            "notes": list(self.notes),
        }

    def format_table(self, class_names: Sequence[str] | None = None) -> str:
        if len(self.thresholds) == 1:
            label = f"mAP@{self.thresholds[0]:g}"
        else:
            label = f"mAP@{self.thresholds[0]:g}:{self.thresholds[-1]:g}"
        rows = [f"{'class':<16} {'AP':>10}"]
        for c, ap in sorted(self.per_class_ap.items()):
            cname = class_names[c] if class_names and c < len(class_names) else str(c)
            rows.append(f"{cname:<16} {ap:>10.6f}")
        rows.append(f"{label:<16} {self.map_value:>10.6f}")
        rows.append(f"{'over-detection':<16} {self.over_detection_rate:>10.6f}")
        rows.extend(f"note: {n}" for n in self.notes)
        return "\n".join(rows)


def _confidence_order(confidences) -> np.ndarray:
    # stable sort on the negated key keeps input order among ties
    return np.argsort(-np.asarray(confidences, dtype=np.float64), kind="stable")


def _match(dets: Sequence[DetectionRecord], gts: Sequence[GroundTruthRecord],
           iou_threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Return TP flags and matched gt indices (-1 if none), in input order."""
    flags = np.zeros(len(dets), dtype=bool)
    matched_gt = np.full(len(dets), -1, dtype=int)
    gts_by_image: dict[Hashable, list[int]] = {}
    for j, g in enumerate(gts):
        gts_by_image.setdefault(g.image_id, []).append(j)
    taken = np.zeros(len(gts), dtype=bool)

    for i in _confidence_order([d.confidence for d in dets]):
        d = dets[i]
        best_j, best_iou = -1, -1.0
        for j in gts_by_image.get(d.image_id, ()):
            if taken[j]:
                continue
            v = iou(d.box, gts[j].box)
            if v >= iou_threshold and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            taken[best_j] = True
            flags[i] = True
            matched_gt[i] = best_j
    return flags, matched_gt


def match_detections(dets: Sequence[DetectionRecord], gts: Sequence[GroundTruthRecord],
                     iou_threshold: float) -> np.ndarray:
    """TP/FP flag per detection (input order) for a single class.

    Detections only compete for ground truths carrying the same ``image_id``.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    return _match(dets, gts, iou_threshold)[0]


def average_precision(flags, confidences, n_gt: int) -> float:
    """101-point interpolated AP from TP flags and their confidences."""
    if n_gt <= 0:
        return 0.0
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp_sorted = flags[_confidence_order(confidences)]
    ctp = np.cumsum(tp_sorted)
    cfp = np.cumsum(~tp_sorted)
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]

    # first PR point with recall >= k/100  <=>  100 * ctp >= k * n_gt
    levels = np.arange(RECALL_LEVELS) * n_gt
    idx = np.searchsorted(100 * ctp, levels, side="left")
    reached = idx < len(ctp)
    total = envelope[idx[reached]].sum()
    return float(total / RECALL_LEVELS)


def _group_by_class(records) -> dict[int, list]:
    out: dict[int, list] = {}
    for r in records:
        out.setdefault(r.class_id, []).append(r)
    return out


def _over_detection(dets, gts, iou_threshold) -> tuple[float, int]:
    n_tp = n_over = 0
    gts_by_class = _group_by_class(gts)
    for c, cdets in _group_by_class(dets).items():
        cgts = gts_by_class.get(c, [])
        flags, matched = _match(cdets, cgts, iou_threshold)
        for d, ok, j in zip(cdets, flags, matched):
            if ok:
                n_tp += 1
                if side_penalty(d.box, cgts[j].box).total > 0:
                    n_over += 1
    return (n_over / n_tp if n_tp else 0.0), n_tp


def over_detection_rate(dets, gts, iou_threshold: float) -> float:
    """Fraction of true positives that stick out of their matched ground truth.

    Defined as 0 when nothing matches.
    """
    rate, n_tp = _over_detection(dets, gts, iou_threshold)
    if n_tp == 0:
        logger.warning("over_detection_rate: no matches at IoU %.2f", iou_threshold)
    return rate


def _per_class_ap(dets, gts, threshold) -> dict[int, float]:
    dets_by_class = _group_by_class(dets)
    out = {}
    for c, cgts in sorted(_group_by_class(gts).items()):
        cdets = dets_by_class.get(c, [])
        flags = match_detections(cdets, cgts, threshold)
        out[c] = average_precision(flags, [d.confidence for d in cdets], len(cgts))
    return out


def _report(dets, gts, thresholds) -> EvalReport:
    if not gts:
        raise EvaluationError("no ground truth to evaluate against")
    per_threshold = [_per_class_ap(dets, gts, t) for t in thresholds]
    classes = sorted(per_threshold[0])
    per_class = {c: float(np.mean([p[c] for p in per_threshold])) for c in classes}
    maps = [float(np.mean([p[c] for c in classes])) for p in per_threshold]
    rate, n_tp = _over_detection(dets, gts, thresholds[0])
    notes = []
    if n_tp == 0:
        notes.append(f"no matches at IoU {thresholds[0]:g}; over_detection_rate set to 0")
    return EvalReport(per_class, float(np.mean(maps)), tuple(thresholds), rate, notes)


def map_at(dets, gts, threshold: float = 0.5) -> EvalReport:
    """mAP at a single IoU threshold over classes present in ``gts``."""
    return _report(dets, gts, (threshold,))


def map_range(dets, gts, thresholds=COCO_THRESHOLDS) -> EvalReport:
    """mAP averaged over IoU thresholds 0.50:0.05:0.95.

    The over-detection rate is measured at the lowest threshold.
    """
    return _report(dets, gts, tuple(thresholds))


def load_label_dirs(gt_dir, det_dir) -> tuple[list[GroundTruthRecord], list[DetectionRecord]]:
    """Load normalized label directories for evaluation.

    Boxes stay in normalized coordinates, which leaves IoU unchanged. An image
    with no detection file simply has no detections; a detection file for an
    image absent from ``gt_dir`` is an error.
    """
    gt_files = list_label_files(gt_dir)
    det_files = list_label_files(det_dir) if os.path.isdir(det_dir) else None
    if det_files is None:
        raise EvaluationError(f"detection directory {det_dir} does not exist")
    unknown = sorted(set(det_files) - set(gt_files))
    if unknown:
        raise EvaluationError("detections for images without ground truth: " + ", ".join(unknown))

    gts, dets = [], []
    for stem, path in gt_files.items():
        for r in read_label_file(path):
            gts.append(GroundTruthRecord(stem, r.class_id, BBox.from_cxcywh(r.cx, r.cy, r.w, r.h)))
    for stem, path in det_files.items():
        for r in read_label_file(path, with_confidence=True):
            dets.append(DetectionRecord(stem, r.class_id,
                                        BBox.from_cxcywh(r.cx, r.cy, r.w, r.h), r.confidence))
    return gts, dets
