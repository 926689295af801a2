"""Normalized ``class_id cx cy w h [confidence]`` text label files.

Ground truth uses five fields per line, detections add a sixth confidence
field. Values are normalized by image width/height and written with six
decimal places.
"""

from __future__ import annotations

import os
from dataclasses import dataclass


class LabelFormatError(ValueError):
    """Malformed or out-of-range line in a label file."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(frozen=True)
class LabelRow:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float | None = None


def format_row(class_id: int, cx: float, cy: float, w: float, h: float,
               confidence: float | None = None) -> str:
    fields = [str(int(class_id))] + [f"{v:.6f}" for v in (cx, cy, w, h)]
    if confidence is not None:
        fields.append(f"{confidence:.6f}")
    return " ".join(fields)


def parse_lines(lines, path="<memory>", with_confidence: bool = False) -> list[LabelRow]:
    n_fields = 6 if with_confidence else 5
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != n_fields:
            raise LabelFormatError(path, lineno, f"expected {n_fields} fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            values = [float(p) for p in parts[1:]]
        except ValueError:
            raise LabelFormatError(path, lineno, f"non-numeric field in {line!r}") from None
        if class_id < 0:
            raise LabelFormatError(path, lineno, f"negative class id {class_id}")
        for name, v in zip(("cx", "cy", "w", "h", "confidence"), values):
            if not 0.0 <= v <= 1.0:
                raise LabelFormatError(path, lineno, f"{name}={v} outside [0, 1]")
        rows.append(LabelRow(class_id, *values))
    return rows


def read_label_file(path, with_confidence: bool = False) -> list[LabelRow]:
    with open(path, encoding="utf-8") as f:
        return parse_lines(f, path=path, with_confidence=with_confidence)


def list_label_files(directory) -> dict[str, str]:
    """Map image stem to label path for every ``*.txt`` in ``directory``."""
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".txt"):
            out[name[:-4]] = os.path.join(directory, name)
    return out
