import json
import math
from collections import Counter

import numpy as np
import pytest
from PIL import Image

from simcfs.boxgeom import BBox, intersection_area
from simcfs.simulator import (CompoundSample, ImageAsset, Placement, Pool, PoolError,
                              SimConfig, SimConfigError, figure_rng, load_pool, plan_dataset,
                              plan_figure, render_figure, simulate_dataset, write_annotations)

from conftest import make_pool


class ScriptedRng:
    """Stand-in generator that replays fixed draws, for hand-traced plans."""

    def __init__(self, choices, integers, randoms=()):
        self._choices = list(choices)
        self._integers = list(integers)
        self._randoms = list(randoms)

    def choice(self, n, p=None):
        return self._choices.pop(0)

    def integers(self, lo, hi=None):
        return self._integers.pop(0)

    def random(self):
        return self._randoms.pop(0)


def fake_pool(sizes, class_ids=None):
    class_ids = class_ids or [0] * len(sizes)
    assets = [ImageAsset(f"a{i}", f"/nonexistent/a{i}.png", c, w, h)
              for i, ((w, h), c) in enumerate(zip(sizes, class_ids))]
    return Pool(assets, [f"c{c}" for c in range(max(class_ids) + 1)])


def check_sample(sample, pool):
    """Geometry invariants every planned figure must satisfy."""
    assert sample.placements
    for p in sample.placements:
        b = p.box
        assert all(float(v).is_integer() for v in b.as_tuple())
        assert 0 <= b.x1 < b.x2 <= sample.canvas_width
        assert 0 <= b.y1 < b.y2 <= sample.canvas_height
        a = pool.get(p.asset_id)
        assert p.class_id == a.class_id
        sw, sh = b.width, b.height
        exact_w = a.width * sh / a.height
        exact_h = a.height * sw / a.width
        assert (sw in (math.floor(exact_w), math.ceil(exact_w))
                or sh in (math.floor(exact_h), math.ceil(exact_h)))
    for i, p in enumerate(sample.placements):
        for q in sample.placements[i + 1:]:
            assert intersection_area(p.box, q.box) == 0
    if sample.mode == "single":
        assert len(sample.placements) == 1
    if sample.mode == "intra":
        assert len({p.class_id for p in sample.placements}) == 1


class TestLoadPool:
    def test_classes_by_name_order(self, small_pool_dir):
        pool = load_pool(small_pool_dir)
        assert pool.class_names == ["chart", "electron", "fluorescence", "light"]
        assert len(pool) == 12
        assert {a.class_id for a in pool} == {0, 1, 2, 3}

    def test_two_classes(self, tmp_path):
        make_pool(tmp_path, 3, class_names=("light", "chart"))
        pool = load_pool(tmp_path)
        assert len(pool) == 6
        assert dict(enumerate(pool.class_names)) == {0: "chart", 1: "light"}

    def test_header_dimensions(self, tmp_path):
        (tmp_path / "a").mkdir()
        Image.new("RGB", (37, 91)).save(tmp_path / "a" / "x.png")
        (asset,) = load_pool(tmp_path).assets
        assert (asset.width, asset.height) == (37, 91)

    def test_empty_root(self, tmp_path):
        with pytest.raises(PoolError):
            load_pool(tmp_path)

    def test_corrupt_file_skipped(self, tmp_path, caplog):
        make_pool(tmp_path, 5, class_names=("a", "b"))
        (tmp_path / "a" / "broken.png").write_bytes(b"not an image at all")
        pool = load_pool(tmp_path)
        assert len(pool) == 10
        assert sum("broken.png" in r.getMessage() for r in caplog.records) == 1

    def test_nine_of_ten(self, tmp_path, caplog):
        make_pool(tmp_path, 10, class_names=("a",))
        (tmp_path / "a" / "img_004.png").write_bytes(b"\x89PNG\r\n\x1a\ngarbage")
        assert len(load_pool(tmp_path)) == 9
        assert len([r for r in caplog.records if r.levelname == "WARNING"]) == 1


class TestConfig:
    def test_default_mode_probs_from_counts(self):
        c = SimConfig()
        assert c.mode_probs == pytest.approx((0.296, 0.201, 0.503), abs=5e-4)
        assert abs(sum(c.mode_probs) - 1) < 1e-12

    @pytest.mark.parametrize("kwargs", [
        dict(mode_probs=(0.5, 0.5, 0.5)),
        dict(orientation_probs=(0.2, 0.2)),
        dict(row_count_range=(3, 2)),
        dict(row_extent_range=(0, 10)),
        dict(canvas_width=100),
        dict(zero_gap_prob=1.5),
        dict(seed=-1),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(SimConfigError):
            SimConfig(**kwargs)

    def test_json_roundtrip(self, tmp_path):
        c = SimConfig(canvas_width=512, seed=9, gap_range=(2, 4))
        path = tmp_path / "c.json"
        path.write_text(json.dumps(c.to_dict()))
        assert SimConfig.from_json(path) == c

    def test_unknown_key(self):
        with pytest.raises(SimConfigError):
            SimConfig.from_dict({"canvas_widht": 3})


class TestPlanFigure:
    def test_single_mode_scaling(self):
        pool = fake_pool([(800, 400)])
        # mode=single, orientation=row, asset 0
        s = plan_figure(ScriptedRng([0, 0], [0]), pool, SimConfig())
        assert (s.canvas_width, s.canvas_height) == (640, 320)
        (p,) = s.placements
        assert p.box.as_tuple() == (0, 0, 640, 320)
        assert p.box.width / p.box.height == 2.0

    def test_row_closes_when_next_does_not_fit(self):
        pool = fake_pool([(800, 400), (600, 400)])
        # mode=mixed, row; 1 row, forced zero gap, height 200, assets 0 then 1
        rng = ScriptedRng([2, 0], [1, 200, 0, 1], randoms=[0.0])
        s = plan_figure(rng, pool, SimConfig())
        assert [p.box.as_tuple() for p in s.placements] == [(0, 0, 400, 200)]
        assert (s.canvas_width, s.canvas_height) == (640, 200)

    def test_row_packs_with_gap(self):
        pool = fake_pool([(300, 300), (200, 400)])
        # 2 rows, gap 5; row heights 100 and 150
        rng = ScriptedRng([2, 0], [2, 5, 100, 0, 1, 0, 0, 0, 0, 0, 150, 1, 1, 1, 0, 0, 1, 1],
                          randoms=[0.9])
        s = plan_figure(rng, pool, SimConfig())
        boxes = [p.box.as_tuple() for p in s.placements]
        assert boxes == [
            (0, 0, 100, 100), (105, 0, 155, 100), (160, 0, 260, 100),
            (265, 0, 365, 100), (370, 0, 470, 100), (475, 0, 575, 100),
            (0, 105, 75, 255), (80, 105, 155, 255), (160, 105, 235, 255),
            (240, 105, 390, 255), (395, 105, 545, 255), (550, 105, 625, 255),
        ]
        assert s.canvas_height == 255
        check_sample(s, pool)

    def test_oversized_first_panel_rescaled(self):
        pool = fake_pool([(2000, 100)])
        rng = ScriptedRng([2, 0], [1, 300, 0, 0], randoms=[0.0])
        s = plan_figure(rng, pool, SimConfig())
        (p,) = s.placements
        assert p.box.as_tuple() == (0, 0, 640, 32)

    def test_column_orientation_transposes(self):
        pool = fake_pool([(400, 800)])
        # mixed, column; one column width 200, assets keep ratio 1:2
        rng = ScriptedRng([2, 1], [1, 200, 0, 0], randoms=[0.0])
        s = plan_figure(rng, pool, SimConfig())
        assert s.orientation == "column"
        assert s.canvas_height == 640
        assert [p.box.as_tuple() for p in s.placements] == [(0, 0, 200, 400)]

    def test_intra_single_class(self, pool_100):
        pool = load_pool(pool_100)
        cfg = SimConfig(mode_probs=(0, 1, 0))
        for k in range(50):
            s = plan_figure(figure_rng(3, k), pool, cfg)
            assert s.mode == "intra"
            classes = {p.class_id for p in s.placements}
            assert len(classes) == 1
            assert pool.class_names[classes.pop()] != "others"

    def test_invariants_many_seeds(self, pool_100):
        pool = load_pool(pool_100)
        for seed in range(3):
            for s in plan_dataset(pool, SimConfig(seed=seed, n_figures=100)):
                check_sample(s, pool)

    def test_deterministic(self, pool_100):
        pool = load_pool(pool_100)
        a = plan_dataset(pool, SimConfig(seed=5, n_figures=20))
        b = plan_dataset(pool, SimConfig(seed=5, n_figures=20))
        assert [s.to_json() for s in a] == [s.to_json() for s in b]

    def test_orientation_frequencies(self, pool_100):
        pool = load_pool(pool_100)
        counts = Counter(s.orientation for s in plan_dataset(pool, SimConfig(n_figures=2000)))
        assert abs(counts["row"] / 2000 - 0.5) < 0.04


class TestAnnotations:
    def _sample(self, box, cls, w, h):
        return CompoundSample("f", w, h, [Placement("a", BBox(*box), cls)], "single", "row")

    def test_full_canvas(self, tmp_path):
        path = tmp_path / "l.txt"
        write_annotations(self._sample((0, 0, 640, 320), 1, 640, 320), 640, 320, path)
        assert path.read_bytes() == b"1 0.500000 0.500000 1.000000 1.000000\n"

    def test_partial(self, tmp_path):
        path = tmp_path / "l.txt"
        write_annotations(self._sample((0, 0, 400, 200), 0, 640, 200), 640, 200, path)
        assert path.read_text() == "0 0.312500 0.500000 0.625000 1.000000\n"

    def test_out_of_canvas_is_internal_error(self, tmp_path):
        with pytest.raises(AssertionError):
            write_annotations(self._sample((0, 0, 700, 200), 0, 640, 200), 640, 200,
                              tmp_path / "l.txt")


class TestRender:
    def test_single_placement(self, tmp_path):
        (tmp_path / "c").mkdir()
        src = np.random.default_rng(0).integers(0, 256, (50, 100, 3), dtype=np.uint8)
        Image.fromarray(src).save(tmp_path / "c" / "a.png")
        pool = load_pool(tmp_path)
        sample = CompoundSample("f", 300, 200, [Placement("c/a.png", BBox(10, 20, 210, 120), 0)],
                                "mixed", "row")
        out = np.asarray(render_figure(sample, pool))
        expected = np.asarray(Image.fromarray(src).resize((200, 100), Image.BILINEAR))
        np.testing.assert_array_equal(out[20:120, 10:210], expected)
        mask = np.ones(out.shape[:2], bool)
        mask[20:120, 10:210] = False
        assert (out[mask] == 255).all()

    def test_zero_gap_boundary(self, tmp_path):
        (tmp_path / "c").mkdir()
        Image.new("RGB", (10, 10), (255, 0, 0)).save(tmp_path / "c" / "r.png")
        Image.new("RGB", (10, 10), (0, 0, 255)).save(tmp_path / "c" / "b.png")
        pool = load_pool(tmp_path)
        sample = CompoundSample("f", 40, 20, [
            Placement("c/r.png", BBox(0, 0, 20, 20), 0),
            Placement("c/b.png", BBox(20, 0, 40, 20), 0)], "mixed", "row")
        out = np.asarray(render_figure(sample, pool))
        assert (out[:, 19] == (255, 0, 0)).all()
        assert (out[:, 20] == (0, 0, 255)).all()

    def test_repeatable(self, pool_100):
        pool = load_pool(pool_100)
        s = plan_figure(figure_rng(1, 0), pool, SimConfig())
        assert render_figure(s, pool).tobytes() == render_figure(s, pool).tobytes()

    def test_missing_asset_named(self, tmp_path):
        pool = fake_pool([(10, 10)])
        s = CompoundSample("f", 10, 10, [Placement("a0", BBox(0, 0, 10, 10), 0)], "single", "row")
        with pytest.raises(FileNotFoundError, match="a0"):
            render_figure(s, pool)


class TestSimulateDataset:
    def test_zero_figures(self, tmp_path, small_pool_dir):
        pool = load_pool(small_pool_dir)
        assert simulate_dataset(pool, SimConfig(n_figures=0), tmp_path / "o") == []
        assert (tmp_path / "o" / "manifest.jsonl").read_bytes() == b""

    def test_outputs(self, tmp_path, small_pool_dir):
        pool = load_pool(small_pool_dir)
        samples = simulate_dataset(pool, SimConfig(n_figures=5, seed=2), tmp_path / "o")
        out = tmp_path / "o"
        lines = (out / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 5
        for s, line in zip(samples, lines):
            rec = json.loads(line)
            assert rec["figure_id"] == s.figure_id
            assert set(rec) == {"figure_id", "canvas_width", "canvas_height", "mode",
                                "orientation", "placements"}
            with Image.open(out / "images" / f"{s.figure_id}.png") as im:
                assert im.size == (s.canvas_width, s.canvas_height)
            label_lines = (out / "labels" / f"{s.figure_id}.txt").read_text().splitlines()
            assert len(label_lines) == len(s.placements)
        assert (out / "classes.txt").read_text().split() == pool.class_names

    def test_byte_identical_reruns(self, tmp_path, small_pool_dir):
        pool = load_pool(small_pool_dir)
        cfg = SimConfig(n_figures=8, seed=11)
        simulate_dataset(pool, cfg, tmp_path / "a", workers=1)
        simulate_dataset(pool, cfg, tmp_path / "b", workers=4)
        for rel in ["manifest.jsonl"] + [f"labels/fig_{k:06d}.txt" for k in range(8)] \
                + [f"images/fig_{k:06d}.png" for k in range(8)]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_unwritable_output(self, tmp_path, small_pool_dir):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            simulate_dataset(load_pool(small_pool_dir), SimConfig(n_figures=1), blocker / "o")
