from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def make_pool(root, per_class, class_names=("chart", "electron", "fluorescence", "light"),
              seed=0, min_side=40, max_side=300):
    """Write a class-per-subdirectory tree of random-size noise images."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    for name in class_names:
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            w, h = (int(v) for v in rng.integers(min_side, max_side + 1, size=2))
            pixels = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
            suffix = ".png" if i % 2 == 0 else ".jpg"
            Image.fromarray(pixels).save(d / f"img_{i:03d}{suffix}")
    return root


@pytest.fixture
def small_pool_dir(tmp_path):
    return make_pool(tmp_path / "pool", per_class=3)


@pytest.fixture(scope="session")
def pool_100(tmp_path_factory):
    """100 assets over four classes plus 'others'."""
    root = tmp_path_factory.mktemp("pool100")
    return make_pool(root, per_class=20,
                     class_names=("chart", "electron", "fluorescence", "light", "others"),
                     seed=1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
