"""
Simulating compound figures from a pool of single panels
========================================================

Build a throwaway pool of noise images, then pack them into compound
figures with YOLO-style labels.
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from simcfs.simulator import SimConfig, load_pool, simulate_dataset, summarize

work = Path(tempfile.mkdtemp(prefix="simcfs_demo_"))

# one directory per class
rng = np.random.default_rng(0)
for name in ("chart", "light", "others"):
    (work / "pool" / name).mkdir(parents=True)
    for i in range(8):
        w, h = rng.integers(60, 300, size=2)
        Image.fromarray(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)).save(
            work / "pool" / name / f"{i}.png")

pool = load_pool(work / "pool")
print(f"{len(pool)} assets, classes {pool.class_names}")

config = SimConfig(seed=3, n_figures=12)
samples = simulate_dataset(pool, config, work / "out")
print(summarize(samples, pool, config.seed))

# one figure in detail
s = samples[0]
print(s.figure_id, s.mode, s.orientation, (s.canvas_width, s.canvas_height))
for p in s.placements:
    print("  ", p.asset_id, p.box.as_tuple())

print((work / "out" / "labels" / f"{s.figure_id}.txt").read_text())
print("written to", work / "out")
