"""Gradient-descent box fitting on the IoU and side losses.

A small numerical stand-in for training: a single predicted box is pushed
towards a ground-truth box by plain gradient descent, with or without the
side-loss term, in normalized coordinates.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .boxgeom import (BBox, InvalidInputError, finite_diff_check, iou, iou_loss,
                      iou_loss_grad, near_kink, side_loss, side_loss_grad)


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, box):
        self.iteration = iteration
        super().__init__(f"box left [-1, 2] at iteration {iteration}: {tuple(box)}")


@dataclass(frozen=True)
class FitConfig:
    step_size: float = 0.01
    iterations: int = 500
    use_side_loss: bool = True
    lambda_box: float = 0.5
    lambda_side: float | None = None  # None means lambda_box / 30
    seed: int = 0

    def __post_init__(self):
        if self.lambda_side is None:
            object.__setattr__(self, "lambda_side", self.lambda_box / 30.0)
        if not self.step_size > 0:
            raise InvalidInputError("step_size must be positive")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if self.lambda_box < 0 or self.lambda_side < 0:
            raise InvalidInputError("loss weights must be non-negative")


@dataclass(frozen=True)
class Scenario:
    gt: BBox
    init: BBox
    margin_d: float = 0.0

    def __post_init__(self):
        for b in (self.gt, self.init):
            if min(b.as_tuple()) < 0 or max(b.as_tuple()) > 1:
                raise InvalidInputError(f"box {b.as_tuple()} outside the unit square")
        if self.init.area <= 0:
            raise InvalidInputError("init box must have positive area")


@dataclass(frozen=True)
class FitStep:
    iteration: int
    box: BBox
    loss: float
    side_total: float


@dataclass
class FitResult:
    trajectory: list[FitStep]
    stalled: bool

    @property
    def final(self) -> FitStep:
        return self.trajectory[-1]


@dataclass(frozen=True)
class AsymmetryValues:
    iou_over: float
    iou_under: float
    side_over: float
    side_under: float


@dataclass(frozen=True)
class ExperimentSummary:
    n_trials: int
    seed: int
    mean_final_side_penalty_with: float
    mean_final_side_penalty_without: float
    win_rate: float


@dataclass(frozen=True)
class GradcheckReport:
    n_checked: int
    n_skipped: int
    max_rel_error: float
    seed: int

    @property
    def vacuous(self) -> bool:
        return self.n_checked == 0


def asymmetry_demo(w: float, h: float, d: float) -> AsymmetryValues:
    """IoU and side loss of a box grown vs. shrunk by margin ``d`` on every side.

    IoU rates the grown box higher although both are off by the same
    margin; the side loss charges only the grown one.
    """
    if not (w > 0 and h > 0 and 0 < d < min(w, h) / 2):
        raise InvalidInputError(f"need 0 < d < min(w, h)/2, got w={w}, h={h}, d={d}")
    return AsymmetryValues(
        iou_over=w * h / ((w + 2 * d) * (h + 2 * d)),
        iou_under=(w - 2 * d) * (h - 2 * d) / (w * h),
        side_over=4 * d,
        side_under=0.0,
    )


def _objective(box: BBox, gt: BBox, cfg: FitConfig) -> float:
    loss = cfg.lambda_box * iou_loss(box, gt)
    if cfg.use_side_loss:
        loss += cfg.lambda_side * side_loss(box, gt)
    return loss


def _descent_grad(box: BBox, gt: BBox, cfg: FitConfig) -> np.ndarray:
    lam_side = cfg.lambda_side if cfg.use_side_loss else 0.0
    g_in = cfg.lambda_box * iou_loss_grad(box, gt) + lam_side * side_loss_grad(box, gt)

    p, q = box.as_tuple(), gt.as_tuple()
    at_kink = [a == b for a, b in zip(p, q)]
    if not any(at_kink):
        return g_in

    # On an exact edge match pick the min-norm subgradient per coordinate,
    # so a box sitting on the ground truth is a fixed point.
    g_out = (cfg.lambda_box * iou_loss_grad(box, gt, at_equal="outside")
             + lam_side * np.array([-1.0, -1.0, 1.0, 1.0]))
    g = g_in.copy()
    for j in np.flatnonzero(at_kink):
        # x1/y1 move inward to the right, x2/y2 to the left
        left, right = (g_out[j], g_in[j]) if j < 2 else (g_in[j], g_out[j])
        if left <= 0 <= right:
            g[j] = 0.0
        elif right < 0 and not left > 0:
            g[j] = right
        elif left > 0 and not right < 0:
            g[j] = left
        else:
            g[j] = left if abs(left) >= abs(right) else right
    return g


def fit_box(scenario: Scenario, config: FitConfig) -> FitResult:
    """Run plain gradient descent from ``scenario.init`` towards ``scenario.gt``."""
    gt = scenario.gt
    box = scenario.init
    traj = [FitStep(0, box, _objective(box, gt, config), side_loss(box, gt))]
    stalled = False
    for it in range(1, config.iterations + 1):
        g = _descent_grad(box, gt, config)
        if not g.any() and iou(box, gt) == 0.0:
            stalled = True
        x = box.as_array() - config.step_size * g
        if x[0] > x[2]:
            x[[0, 2]] = x[[2, 0]]
        if x[1] > x[3]:
            x[[1, 3]] = x[[3, 1]]
        if x.min() < -1 or x.max() > 2:
            raise DivergenceError(it, x)
        box = BBox.from_iterable(x)
        traj.append(FitStep(it, box, _objective(box, gt, config), side_loss(box, gt)))
    return FitResult(traj, stalled)


def _trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def random_scenario(rng: np.random.Generator) -> Scenario:
    """Ground truth centred in [0.3, 0.7]^2, sides in [0.2, 0.4], init grown by up to 0.1 per side."""
    cx, cy = rng.uniform(0.3, 0.7, size=2)
    w, h = rng.uniform(0.2, 0.4, size=2)
    gt = BBox.from_cxcywh(cx, cy, w, h)
    m = rng.uniform(0.0, 0.1, size=4)
    init = BBox(gt.x1 - m[0], gt.y1 - m[1], gt.x2 + m[2], gt.y2 + m[3])
    return Scenario(gt, init)


def run_experiment(n_trials: int, config_pair: tuple[FitConfig, FitConfig]) -> ExperimentSummary:
    """Fit the same random scenarios with and without side loss.

    A trial is a win when the final side penalty with side loss is no larger
    than without it.
    """
    if n_trials < 1:
        raise InvalidInputError("n_trials must be >= 1")
    with_cfg, without_cfg = config_pair
    if not with_cfg.use_side_loss:
        with_cfg, without_cfg = without_cfg, with_cfg
    if (dataclasses.replace(with_cfg, use_side_loss=False) != without_cfg
            or not with_cfg.use_side_loss):
        raise InvalidInputError("configs must differ in use_side_loss only")

    finals_with, finals_without = [], []
    for k in range(n_trials):
        sc = random_scenario(_trial_rng(with_cfg.seed, k))
        finals_with.append(fit_box(sc, with_cfg).final.side_total)
        finals_without.append(fit_box(sc, without_cfg).final.side_total)
    fw, fo = np.array(finals_with), np.array(finals_without)
    return ExperimentSummary(
        n_trials=n_trials,
        seed=with_cfg.seed,
        mean_final_side_penalty_with=float(fw.mean()),
        mean_final_side_penalty_without=float(fo.mean()),
        win_rate=float(np.mean(fw <= fo)),
    )


def _random_box(rng: np.random.Generator) -> BBox:
    xs = np.sort(rng.uniform(0.0, 1.0, size=2))
    ys = np.sort(rng.uniform(0.0, 1.0, size=2))
    return BBox(xs[0], ys[0], xs[1], ys[1])


def gradcheck_sweep(n_points: int, seed: int = 0) -> GradcheckReport:
    """Central-difference check of both loss gradients on random box pairs."""
    rng = np.random.default_rng(seed)
    checked = skipped = 0
    worst = 0.0
    for _ in range(n_points):
        pred, gt = _random_box(rng), _random_box(rng)
        if near_kink(pred, gt):
            skipped += 1
            continue
        for loss in ("iou", "side"):
            worst = max(worst, finite_diff_check(loss, pred, gt))
        checked += 1
    return GradcheckReport(checked, skipped, worst, seed)
