"""Cut detected subfigures out of a compound figure."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from PIL import Image

from .boxgeom import BBox, iou
from .detmetrics import DetectionRecord
from .labels import read_label_file

logger = logging.getLogger(__name__)


@dataclass
class CropJob:
    image_path: str
    detections: list[DetectionRecord]
    output_dir: str
    min_confidence: float = 0.25
    dedupe_iou: float = 0.9
    class_names: Sequence[str] | None = None

    def __post_init__(self):
        for name in ("min_confidence", "dedupe_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def load_detections(path, image_width: int, image_height: int) -> list[DetectionRecord]:
    """Parse a 6-field normalized detection file into pixel-corner records."""
    records = []
    image_id = Path(path).stem
    for r in read_label_file(path, with_confidence=True):
        x1 = _round_half_up((r.cx - r.w / 2) * image_width)
        y1 = _round_half_up((r.cy - r.h / 2) * image_height)
        x2 = _round_half_up((r.cx + r.w / 2) * image_width)
        y2 = _round_half_up((r.cy + r.h / 2) * image_height)
        records.append(DetectionRecord(image_id, r.class_id, BBox(x1, y1, x2, y2), r.confidence))
    return records


def _by_confidence(dets):
    return sorted(dets, key=lambda d: -d.confidence)  # sorted() is stable


def dedupe(dets: Sequence[DetectionRecord], dedupe_iou: float) -> list[DetectionRecord]:
    """Greedy duplicate suppression within each class, highest confidence first."""
    kept: list[DetectionRecord] = []
    for d in _by_confidence(dets):
        if any(k.class_id == d.class_id and iou(k.box, d.box) >= dedupe_iou for k in kept):
            continue
        kept.append(d)
    return kept


def _class_name(class_id: int, class_names) -> str:
    if class_names is not None and 0 <= class_id < len(class_names):
        return class_names[class_id]
    return f"class{class_id}"


def manifest_path_for(job: CropJob) -> Path:
    return Path(job.output_dir) / f"{Path(job.image_path).stem}_crops.json"


def crop_subfigures(job: CropJob) -> list[Path]:
    """Write one PNG per surviving detection plus a JSON sidecar manifest.

    Crops are exact pixel copies of the clamped box; nothing is resampled.
    """
    try:
        image = Image.open(job.image_path)
        image.load()
    except OSError as exc:
        raise RuntimeError(f"cannot read image {job.image_path}: {exc}") from exc
    width, height = image.size
    stem = Path(job.image_path).stem
    out = Path(job.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    confident = [d for d in job.detections if d.confidence >= job.min_confidence]
    survivors = _by_confidence(dedupe(confident, job.dedupe_iou))

    paths: list[Path] = []
    entries = []
    for d in survivors:
        b = d.box
        clamped = (max(0, int(math.floor(b.x1))), max(0, int(math.floor(b.y1))),
                   min(width, int(math.ceil(b.x2))), min(height, int(math.ceil(b.y2))))
        if clamped[2] <= clamped[0] or clamped[3] <= clamped[1]:
            logger.warning("skipping detection %s: no area inside %dx%d image",
                           b.as_tuple(), width, height)
            continue
        if clamped != b.as_tuple():
            logger.warning("clamped detection %s to %s", b.as_tuple(), clamped)
        k = len(paths)
        name = _class_name(d.class_id, job.class_names)
        path = out / f"{stem}_{k}_{name}.png"
        image.crop(clamped).save(path)
        paths.append(path)
        entries.append({
            "file": path.name,
            "class_id": d.class_id,
            "class_name": name,
            "confidence": d.confidence,
            "source_box": list(b.as_tuple()),
            "crop_box": list(clamped),
        })

    if not paths:
        logger.warning("no output: no detection in %s survived filtering", job.image_path)
    with open(manifest_path_for(job), "w", encoding="utf-8") as f:
        json.dump({"image": str(job.image_path), "width": width, "height": height,
                   "crops": entries}, f, indent=2)
    return paths
