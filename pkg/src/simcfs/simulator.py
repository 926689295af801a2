"""Pseudo compound-figure simulator.

Single labeled images are packed into row-restricted or column-restricted
layouts without distorting their aspect ratio. A figure is planned first
(pure geometry, see :func:`plan_figure`) and rendered afterwards, so the
annotation geometry never depends on the resampling filter.

Three sampling modes are supported:

* ``single``: one image fills the canvas extent.
* ``intra``: every panel is drawn from one class, the hard case of visually
  similar panels touching each other.
* ``mixed``: panels drawn from the whole pool.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .boxgeom import BBox
from .labels import format_row

logger = logging.getLogger(__name__)

MODES = ("single", "intra", "mixed")
ORIENTATIONS = ("row", "column")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

# 2,947 single / 2,000 intra / remainder mixed, out of 9,947 simulated figures
DEFAULT_MODE_PROBS = (2947 / 9947, 2000 / 9947, 5000 / 9947)


class PoolError(RuntimeError):
    pass


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ImageAsset:
    id: str
    path: str
    class_id: int
    width: int
    height: int


@dataclass
class Pool:
    """Loaded single-image pool plus the class-id → name listing."""

    assets: list[ImageAsset]
    class_names: list[str]

    def __post_init__(self):
        self._by_id = {a.id: a for a in self.assets}
        self._by_class: dict[int, list[ImageAsset]] = {}
        for a in self.assets:
            self._by_class.setdefault(a.class_id, []).append(a)

    def __len__(self):
        return len(self.assets)

    def __iter__(self):
        return iter(self.assets)

    def get(self, asset_id: str) -> ImageAsset:
        return self._by_id[asset_id]

    def of_class(self, class_id: int) -> list[ImageAsset]:
        return self._by_class.get(class_id, [])

    def class_ids(self) -> list[int]:
        return sorted(self._by_class)


@dataclass
class SimConfig:
    canvas_width: int = 640
    row_count_range: tuple[int, int] = (1, 4)
    row_extent_range: tuple[int, int] = (120, 320)
    gap_range: tuple[int, int] = (0, 8)
    zero_gap_prob: float = 0.3
    mode_probs: tuple[float, float, float] = DEFAULT_MODE_PROBS
    orientation_probs: tuple[float, float] = (0.5, 0.5)
    seed: int = 0
    n_figures: int = 100
    # class names never used as the shared class of an intra figure
    intra_exclude_classes: tuple[str, ...] = ("others",)

    def __post_init__(self):
        for name in ("row_count_range", "row_extent_range", "gap_range",
                     "mode_probs", "orientation_probs", "intra_exclude_classes"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        for name in ("row_count_range", "row_extent_range", "gap_range"):
            rng = getattr(self, name)
            if len(rng) != 2 or any(int(v) != v for v in rng):
                raise SimConfigError(f"{name} must be two integers, got {rng}")
            lo, hi = rng
            if lo > hi:
                raise SimConfigError(f"{name} is empty: {rng}")
            if lo < 0:
                raise SimConfigError(f"{name} must be non-negative: {rng}")
        if self.row_count_range[0] < 1:
            raise SimConfigError("row_count_range must start at 1 or more")
        if self.row_extent_range[0] < 1:
            raise SimConfigError("row_extent_range must start at 1 or more")
        if self.canvas_width < self.row_extent_range[0]:
            raise SimConfigError("canvas_width is smaller than the minimum row extent")
        if len(self.mode_probs) != 3 or len(self.orientation_probs) != 2:
            raise SimConfigError("mode_probs needs 3 entries and orientation_probs 2")
        for name in ("mode_probs", "orientation_probs"):
            probs = getattr(self, name)
            if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                raise SimConfigError(f"{name} must be non-negative and sum to 1, got {probs}")
        if not 0.0 <= self.zero_gap_prob <= 1.0:
            raise SimConfigError(f"zero_gap_prob must be in [0, 1], got {self.zero_gap_prob}")
        if not 0 <= self.seed < 2**64:
            raise SimConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.n_figures < 0:
            raise SimConfigError(f"n_figures must be >= 0, got {self.n_figures}")

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SimConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Placement:
    asset_id: str
    box: BBox
    class_id: int


@dataclass
class CompoundSample:
    figure_id: str
    canvas_width: int
    canvas_height: int
    placements: list[Placement]
    mode: str
    orientation: str

    def to_json(self) -> dict:
        return {
            "figure_id": self.figure_id,
            "canvas_width": self.canvas_width,
            "canvas_height": self.canvas_height,
            "mode": self.mode,
            "orientation": self.orientation,
            "placements": [
                {"asset_id": p.asset_id, "class_id": p.class_id,
                 "box": [int(v) for v in p.box.as_tuple()]}
                for p in self.placements
            ],
        }


def load_pool(root) -> Pool:
    """Read a class-per-subdirectory image tree.

    Class ids follow the lexicographic order of subdirectory names. Image
    sizes come from the file header; files that cannot be decoded are
    skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise PoolError(f"pool root {root} is not a directory")
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    assets = []
    for class_id, name in enumerate(class_names):
        for path in sorted((root / name).iterdir()):
            if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(path) as im:
                    width, height = im.size
                    im.verify()
            except Exception as exc:  # PIL raises a zoo of exception types
                logger.warning("skipping unreadable image %s: %s", path, exc)
                continue
            assets.append(ImageAsset(id=f"{name}/{path.name}", path=str(path),
                                     class_id=class_id, width=width, height=height))
    if not assets:
        raise PoolError(f"no readable images under {root}")
    return Pool(assets, class_names)


def _scale(n: int, num: int, den: int) -> int:
    """round(n * num / den), half up, in exact integer arithmetic; at least 1."""
    return max(1, (2 * n * num + den) // (2 * den))


def _draw(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _pack_strips(rng, candidates, config: SimConfig, along_dim, across_dim):
    """Pack assets into strips along one axis.

    Works in (u, v) coordinates: ``u`` runs along a strip and is bounded by
    ``canvas_width``, ``v`` stacks strips. ``along_dim(asset)`` and
    ``across_dim(asset)`` pick the asset's size on each axis.
    Returns the packed items and the total extent along ``v``.
    """
    limit = config.canvas_width
    n_strips = _draw(rng, *config.row_count_range)
    if rng.random() < config.zero_gap_prob:
        gap = 0
    else:
        gap = _draw(rng, *config.gap_range)

    items = []
    v = 0
    for s in range(n_strips):
        if s:
            v += gap
        extent = _draw(rng, *config.row_extent_range)
        u = 0
        first = True
        while True:
            asset = candidates[int(rng.integers(len(candidates)))]
            a_along, a_across = along_dim(asset), across_dim(asset)
            length = _scale(a_along, extent, a_across)
            if first:
                thickness = extent
                if length > limit:
                    # oversized first panel: shrink to the strip length instead
                    length = limit
                    thickness = min(extent, _scale(a_across, limit, a_along))
                items.append((u, v, u + length, v + thickness, asset))
                u += length + gap
                first = False
                continue
            if u + length > limit:
                break
            items.append((u, v, u + length, v + extent, asset))
            u += length + gap
        v += extent
    return items, v


def plan_figure(rng: np.random.Generator, pool: Pool, config: SimConfig,
                figure_id: str = "0") -> CompoundSample:
    """Plan one pseudo compound figure (geometry and labels, no pixels)."""
    if len(pool) == 0:
        raise PoolError("cannot plan a figure from an empty pool")
    mode = MODES[int(rng.choice(3, p=config.mode_probs))]
    orientation = ORIENTATIONS[int(rng.choice(2, p=config.orientation_probs))]

    if mode == "intra":
        excluded = set(config.intra_exclude_classes)
        eligible = [c for c in pool.class_ids() if pool.class_names[c] not in excluded]
        if not eligible:
            eligible = pool.class_ids()
        class_id = eligible[int(rng.integers(len(eligible)))]
        candidates = pool.of_class(class_id)
    else:
        candidates = pool.assets

    cw = config.canvas_width
    if mode == "single":
        asset = candidates[int(rng.integers(len(candidates)))]
        # longest side spans the canvas extent
        if asset.width >= asset.height:
            w, h = cw, _scale(asset.height, cw, asset.width)
        else:
            w, h = _scale(asset.width, cw, asset.height), cw
        placement = Placement(asset.id, BBox(0, 0, w, h), asset.class_id)
        return CompoundSample(figure_id, w, h, [placement], mode, orientation)

    if orientation == "row":
        items, extent = _pack_strips(rng, candidates, config,
                                     lambda a: a.width, lambda a: a.height)
        placements = [Placement(a.id, BBox(u1, v1, u2, v2), a.class_id)
                      for u1, v1, u2, v2, a in items]
        width, height = cw, extent
    else:
        items, extent = _pack_strips(rng, candidates, config,
                                     lambda a: a.height, lambda a: a.width)
        placements = [Placement(a.id, BBox(v1, u1, v2, u2), a.class_id)
                      for u1, v1, u2, v2, a in items]
        width, height = extent, cw
    return CompoundSample(figure_id, width, height, placements, mode, orientation)


def figure_rng(seed: int, index: int) -> np.random.Generator:
    """Random stream for figure ``index``, independent of every other figure."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def figure_id_for(index: int) -> str:
    return f"fig_{index:06d}"


def plan_dataset(pool: Pool, config: SimConfig) -> list[CompoundSample]:
    return [plan_figure(figure_rng(config.seed, k), pool, config, figure_id_for(k))
            for k in range(config.n_figures)]


def render_figure(sample: CompoundSample, pool: Pool) -> Image.Image:
    """Paint the planned panels onto a white RGB canvas (bilinear resize)."""
    canvas = Image.new("RGB", (sample.canvas_width, sample.canvas_height), (255, 255, 255))
    for p in sample.placements:
        asset = pool.get(p.asset_id)
        try:
            with Image.open(asset.path) as im:
                panel = im.convert("RGB")
        except OSError as exc:
            raise FileNotFoundError(f"asset {asset.id} ({asset.path}) unreadable: {exc}") from exc
        x1, y1, x2, y2 = (int(v) for v in p.box.as_tuple())
        panel = panel.resize((x2 - x1, y2 - y1), Image.BILINEAR)
        canvas.paste(panel, (x1, y1))
    return canvas


def write_annotations(sample: CompoundSample, image_width: int, image_height: int, path) -> None:
    lines = []
    for p in sample.placements:
        b = p.box
        vals = ((b.x1 + b.x2) / (2 * image_width), (b.y1 + b.y2) / (2 * image_height),
                b.width / image_width, b.height / image_height)
        if not all(0.0 <= v <= 1.0 for v in vals):
            raise AssertionError(f"{sample.figure_id}: placement {b.as_tuple()} leaves the canvas")
        lines.append(format_row(p.class_id, *vals) + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(lines)


def worker_count() -> int:
    """Worker cap from ``SIMCFS_THREADS`` (0 or unset means automatic)."""
    try:
        n = int(os.environ.get("SIMCFS_THREADS", "0"))
    except ValueError:
        n = 0
    if n <= 0:
        n = min(8, os.cpu_count() or 1)
    return n


@dataclass
class SimulationSummary:
    n_written: int
    seed: int
    mode_counts: dict[str, int] = field(default_factory=dict)
    orientation_counts: dict[str, int] = field(default_factory=dict)
    class_usage: dict[str, int] = field(default_factory=dict)


def summarize(samples: list[CompoundSample], pool: Pool, seed: int) -> SimulationSummary:
    modes = Counter(s.mode for s in samples)
    orients = Counter(s.orientation for s in samples)
    usage = Counter(pool.class_names[p.class_id] for s in samples for p in s.placements)
    return SimulationSummary(
        n_written=len(samples), seed=seed,
        mode_counts={m: modes.get(m, 0) for m in MODES},
        orientation_counts={o: orients.get(o, 0) for o in ORIENTATIONS},
        class_usage={name: usage.get(name, 0) for name in pool.class_names},
    )


def simulate_dataset(pool: Pool, config: SimConfig, out_dir, render: bool = True,
                     workers: int | None = None) -> list[CompoundSample]:
    """Plan, render and write ``config.n_figures`` figures under ``out_dir``.

    Layout: ``images/<id>.png``, ``labels/<id>.txt``, ``manifest.jsonl`` and
    ``classes.txt``. Output does not depend on the worker count.
    """
    out = Path(out_dir)
    images_dir = out / "images"
    labels_dir = out / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    if render:
        images_dir.mkdir(parents=True, exist_ok=True)

    samples = plan_dataset(pool, config)
    for s in samples:
        write_annotations(s, s.canvas_width, s.canvas_height, labels_dir / f"{s.figure_id}.txt")
    with open(out / "manifest.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(json.dumps(s.to_json()) + "\n")
    with open(out / "classes.txt", "w", encoding="utf-8", newline="\n") as f:
        f.writelines(name + "\n" for name in pool.class_names)

    if render and samples:
        def _job(s):
            render_figure(s, pool).save(images_dir / f"{s.figure_id}.png")

        with ThreadPoolExecutor(max_workers=workers or worker_count()) as ex:
            list(ex.map(_job, samples))
    return samples
