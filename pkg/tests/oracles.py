"""Brute-force references used by the metric tests and the acceptance suite."""

from fractions import Fraction

import numpy as np

from simcfs.boxgeom import BBox
from simcfs.detmetrics import DetectionRecord, GroundTruthRecord


def _area(b):
    return max(0, b[2] - b[0]) * max(0, b[3] - b[1])


def exact_iou(a, b):
    """IoU as a Fraction, for integer-corner boxes."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = iw * ih if iw > 0 and ih > 0 else 0
    union = _area(a) + _area(b) - inter
    return Fraction(0) if union == 0 else Fraction(inter, union)


def brute_force_ap(dets, gts, threshold):
    """Single-class AP by explicit matching and a rational PR staircase.

    ``dets`` is a list of (image, box, confidence) and ``gts`` of (image, box),
    boxes as integer 4-tuples; ``threshold`` is a Fraction.
    """
    n_gt = len(gts)
    if n_gt == 0:
        return Fraction(0)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][2], i))
    used = set()
    tp_flags = []
    for i in order:
        img, box, _ = dets[i]
        best, best_v = None, None
        for j, (gimg, gbox) in enumerate(gts):
            if gimg != img or j in used:
                continue
            v = exact_iou(box, gbox)
            if v >= threshold and (best_v is None or v > best_v):
                best, best_v = j, v
        if best is not None:
            used.add(best)
        tp_flags.append(best is not None)

    points = []
    tp = 0
    for n, flag in enumerate(tp_flags, start=1):
        tp += flag
        points.append((Fraction(tp, n_gt), Fraction(tp, n)))
    total = Fraction(0)
    for k in range(101):
        level = Fraction(k, 100)
        eligible = [p for r, p in points if r >= level]
        total += max(eligible) if eligible else 0
    return total / 101


def random_instance(rng, n_images=3, grid=12):
    """At most 5 detections and 5 ground truths of one class on integer boxes."""
    def box():
        x = np.sort(rng.choice(grid + 1, size=2, replace=False))
        y = np.sort(rng.choice(grid + 1, size=2, replace=False))
        return (int(x[0]), int(y[0]), int(x[1]), int(y[1]))

    n_gt = int(rng.integers(0, 6))
    n_det = int(rng.integers(0, 6))
    gts = [(int(rng.integers(n_images)), box()) for _ in range(n_gt)]
    dets = []
    for _ in range(n_det):
        if gts and rng.random() < 0.6:
            img, g = gts[int(rng.integers(len(gts)))]
            jitter = rng.integers(-1, 2, size=4)
            b = [g[0] + jitter[0], g[1] + jitter[1], g[2] + jitter[2], g[3] + jitter[3]]
            b = (min(b[0], b[2]), min(b[1], b[3]), max(b[0], b[2]), max(b[1], b[3]))
        else:
            img, b = int(rng.integers(n_images)), box()
        conf = float(rng.choice([0.2, 0.5, 0.7, 0.9, float(rng.random())]))
        dets.append((img, tuple(int(v) for v in b), conf))
    return dets, gts


def to_records(dets, gts, class_id=0):
    drs = [DetectionRecord(img, class_id, BBox(*b), c) for img, b, c in dets]
    grs = [GroundTruthRecord(img, class_id, BBox(*b)) for img, b in gts]
    return drs, grs
