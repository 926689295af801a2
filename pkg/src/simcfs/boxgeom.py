"""Box geometry and loss mathematics.

Boxes are axis-aligned and stored in corner form ``(x1, y1, x2, y2)`` with
``y`` growing downward. Coordinates are plain floats; callers pick pixels or
normalized units and stick to one convention per pipeline.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

KINK_MARGIN = 1e-3
FD_STEP = 1e-5


class InvalidInputError(ValueError):
    """Raised for non-finite coordinates, inverted boxes or bad hyperparameters."""


class DegenerateBoxError(InvalidInputError):
    """Raised when a zero-area box is used where a gradient is required."""


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidInputError(f"{name}={v!r} is not finite")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidInputError(f"inverted box {self.as_tuple()}")

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> "BBox":
        x1, y1, x2, y2 = (float(v) for v in values)
        return cls(x1, y1, x2, y2)

    @classmethod
    def from_cxcywh(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scaled(self, s: float) -> "BBox":
        """Scale about the origin by ``s > 0``."""
        return BBox(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)

    def contains(self, other: "BBox") -> bool:
        return (self.x1 <= other.x1 and self.y1 <= other.y1
                and other.x2 <= self.x2 and other.y2 <= self.y2)


@dataclass(frozen=True)
class SidePenalty:
    """Per-side over-detection amounts and their sum (the side loss)."""

    px1: float
    py1: float
    px2: float
    py2: float
    total: float


@dataclass(frozen=True)
class LossHyperParams:
    num_cls: int
    box: float = 0.5
    obj: float = 1.0
    cls: float = 0.5
    nl: int = 3
    imgsize: int = 640

    def __post_init__(self):
        for name in ("box", "obj", "cls", "nl", "imgsize", "num_cls"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive, got {v!r}")
        for name in ("nl", "imgsize", "num_cls"):
            if int(getattr(self, name)) != getattr(self, name):
                raise InvalidInputError(f"{name} must be an integer")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float


@dataclass(frozen=True)
class LossBreakdown:
    box_term: float
    obj_term: float
    cls_term: float
    side_term: float
    total: float


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has no area."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_loss(pred: BBox, gt: BBox) -> float:
    return 1.0 - iou(pred, gt)


def side_penalty(pred: BBox, gt: BBox) -> SidePenalty:
    """Amount by which each side of ``pred`` sticks out of ``gt``.

    Sides of ``pred`` that lie inside ``gt`` cost nothing, so an
    under-detection is never penalized.
    """
    px1 = max(0.0, gt.x1 - pred.x1)
    py1 = max(0.0, gt.y1 - pred.y1)
    px2 = max(0.0, pred.x2 - gt.x2)
    py2 = max(0.0, pred.y2 - gt.y2)
    return SidePenalty(px1, py1, px2, py2, px1 + py1 + px2 + py2)


def side_loss(pred: BBox, gt: BBox) -> float:
    return side_penalty(pred, gt).total


def side_loss_grad(pred: BBox, gt: BBox) -> np.ndarray:
    """Subgradient of the side loss w.r.t. ``pred``'s corners.

    A side sitting exactly on the ground-truth edge gets 0.
    """
    return np.array([
        -1.0 if pred.x1 < gt.x1 else 0.0,
        -1.0 if pred.y1 < gt.y1 else 0.0,
        1.0 if pred.x2 > gt.x2 else 0.0,
        1.0 if pred.y2 > gt.y2 else 0.0,
    ])


def iou_loss_grad(pred: BBox, gt: BBox, at_equal: str = "inside") -> np.ndarray:
    """Analytic gradient of ``1 - iou(pred, gt)`` w.r.t. ``pred``'s corners.

    Where a side of ``pred`` coincides with the matching side of ``gt`` the
    loss has a kink. ``at_equal="inside"`` returns the one-sided derivative
    taken from the shrinking direction (the pred side moving into ``gt``),
    ``"outside"`` the one from the expanding direction.

    Disjoint or edge-touching boxes give the zero vector.
    """
    if at_equal not in ("inside", "outside"):
        raise ValueError(f"at_equal must be 'inside' or 'outside', got {at_equal!r}")
    if pred.width <= 0 or pred.height <= 0:
        raise DegenerateBoxError(f"pred has zero area: {pred.as_tuple()}")

    iw = min(pred.x2, gt.x2) - max(pred.x1, gt.x1)
    ih = min(pred.y2, gt.y2) - max(pred.y1, gt.y1)
    if iw <= 0 or ih <= 0:
        return np.zeros(4)

    inside = at_equal == "inside"
    # d(iw)/d(x1), d(iw)/d(x2), d(ih)/d(y1), d(ih)/d(y2)
    diw_x1 = -1.0 if (pred.x1 > gt.x1 or (inside and pred.x1 == gt.x1)) else 0.0
    diw_x2 = 1.0 if (pred.x2 < gt.x2 or (inside and pred.x2 == gt.x2)) else 0.0
    dih_y1 = -1.0 if (pred.y1 > gt.y1 or (inside and pred.y1 == gt.y1)) else 0.0
    dih_y2 = 1.0 if (pred.y2 < gt.y2 or (inside and pred.y2 == gt.y2)) else 0.0

    wp, hp = pred.width, pred.height
    inter = iw * ih
    union = wp * hp + gt.area - inter

    d_inter = np.array([diw_x1 * ih, dih_y1 * iw, diw_x2 * ih, dih_y2 * iw])
    d_area = np.array([-hp, -wp, hp, wp])
    # d(I/U) with U = Ap + Ag - I
    d_iou = (d_inter * (union + inter) - inter * d_area) / (union * union)
    return -d_iou


def compute_weights(h: LossHyperParams) -> LossWeights:
    """Loss balancing weights, following YOLOv5's hyperparameter scaling.

    The side-loss weight is tied to the box-loss weight at a fixed 1/30 ratio
    since both act on box coordinates.
    """
    layer_scale = 3.0 / h.nl
    lambda1 = h.box * layer_scale
    lambda2 = h.obj * (h.imgsize / 640.0) ** 2 * layer_scale
    lambda3 = (h.cls * h.num_cls / 80.0) * layer_scale
    return LossWeights(lambda1, lambda2, lambda3, lambda1 / 30.0)


def total_loss(box_term: float, obj_term: float, cls_term: float,
               side_term: float, w: LossWeights) -> LossBreakdown:
    terms = (box_term, obj_term, cls_term, side_term)
    if not all(math.isfinite(t) for t in terms):
        raise InvalidInputError(f"non-finite loss term in {terms}")
    total = (w.lambda1 * box_term + w.lambda2 * obj_term
             + w.lambda3 * cls_term + w.lambda4 * side_term)
    return LossBreakdown(box_term, obj_term, cls_term, side_term, total)


LOSSES: dict[str, tuple[Callable[[BBox, BBox], float],
                        Callable[[BBox, BBox], np.ndarray]]] = {
    "iou": (iou_loss, iou_loss_grad),
    "side": (side_loss, side_loss_grad),
}


def near_kink(pred: BBox, gt: BBox, margin: float = KINK_MARGIN) -> bool:
    """True if ``pred`` is within ``margin`` of a non-differentiable point.

    Kinks sit where a pred coordinate equals the matching gt coordinate,
    where opposite edges touch, or where pred collapses to zero extent.
    """
    px = (pred.x1, pred.x2)
    py = (pred.y1, pred.y2)
    gx = (gt.x1, gt.x2)
    gy = (gt.y1, gt.y2)
    for p in px:
        if any(abs(p - g) <= margin for g in gx):
            return True
    for p in py:
        if any(abs(p - g) <= margin for g in gy):
            return True
    return pred.width <= margin or pred.height <= margin


def finite_diff_check(loss: str, pred: BBox, gt: BBox,
                      h: float = FD_STEP) -> float | None:
    """Compare an analytic loss gradient with central differences.

    Returns the largest componentwise relative error, or ``None`` when the
    point is too close to a kink to be checked.
    """
    try:
        fn, grad_fn = LOSSES[loss]
    except KeyError:
        raise InvalidInputError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}")
    if near_kink(pred, gt):
        return None

    analytic = grad_fn(pred, gt)
    x0 = pred.as_array()
    numeric = np.empty(4)
    for j in range(4):
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += h
        xm[j] -= h
        numeric[j] = (fn(BBox.from_iterable(xp), gt) - fn(BBox.from_iterable(xm), gt)) / (2 * h)

    denom = np.maximum(np.abs(analytic), 1e-8)
    return float(np.max(np.abs(numeric - analytic) / denom))
