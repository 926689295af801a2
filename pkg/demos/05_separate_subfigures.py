"""
Cutting a compound figure into panels
=====================================

Treat a simulated figure's labels as detections and crop each panel out.
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from simcfs.separator import CropJob, crop_subfigures, load_detections
from simcfs.simulator import SimConfig, load_pool, simulate_dataset

work = Path(tempfile.mkdtemp(prefix="simcfs_sep_"))
rng = np.random.default_rng(1)
for name in ("chart", "light"):
    (work / "pool" / name).mkdir(parents=True)
    for i in range(6):
        w, h = rng.integers(80, 240, size=2)
        Image.fromarray(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)).save(
            work / "pool" / name / f"{i}.png")

pool = load_pool(work / "pool")
samples = simulate_dataset(pool, SimConfig(seed=2, n_figures=5, mode_probs=(0, 0, 1)),
                           work / "sim")
s = samples[0]

# labels plus a confidence column make a detection file
det = work / "det.txt"
lines = (work / "sim" / "labels" / f"{s.figure_id}.txt").read_text().splitlines()
det.write_text("".join(f"{l} 0.95\n" for l in lines))

records = load_detections(det, s.canvas_width, s.canvas_height)
paths = crop_subfigures(CropJob(str(work / "sim" / "images" / f"{s.figure_id}.png"),
                                records, str(work / "crops"), class_names=pool.class_names))
print(f"{len(s.placements)} placements -> {len(paths)} crops")
for p in paths:
    with Image.open(p) as im:
        print("  ", p.name, im.size)
