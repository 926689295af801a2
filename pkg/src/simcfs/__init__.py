"""Compound figure separation toolkit.

Side loss and IoU geometry (:mod:`simcfs.boxgeom`), pseudo compound-figure
simulation (:mod:`simcfs.simulator`), detection metrics
(:mod:`simcfs.detmetrics`), box-fitting experiments (:mod:`simcfs.boxfit`)
and subfigure cropping (:mod:`simcfs.separator`).
"""

from .boxgeom import (BBox, LossBreakdown, LossHyperParams, LossWeights, SidePenalty,
                      compute_weights, iou, iou_loss, iou_loss_grad, side_loss,
                      side_loss_grad, side_penalty, total_loss)

__version__ = "0.1.0"

__all__ = [
    "BBox", "LossBreakdown", "LossHyperParams", "LossWeights", "SidePenalty",
    "compute_weights", "iou", "iou_loss", "iou_loss_grad", "side_loss",
    "side_loss_grad", "side_penalty", "total_loss",
]
