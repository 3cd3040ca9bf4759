import json

import numpy as np
import pytest

from mvground.scene import load_embeddings, load_queries, load_scene
from mvground.synthetic import (IMG_H, IMG_W, MIN_VISIBLE_PIXELS,
                                build_scene_spec, generate_scene,
                                perturb_mask, render_frame, write_scene)


def dense_disk(r=5, w=32, h=32):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - w // 2) ** 2 + (yy - h // 2) ** 2 <= r * r


class TestSpec:
    def test_deterministic(self):
        a = build_scene_spec("s0", np.random.default_rng(11))
        b = build_scene_spec("s0", np.random.default_rng(11))
        assert len(a.boxes) == len(b.boxes)
        for ba, bb in zip(a.boxes, b.boxes):
            np.testing.assert_array_equal(ba.min_corner, bb.min_corner)
        assert [c.id for c in a.cameras] == [c.id for c in b.cameras]

    def test_object_count_range(self):
        for seed in range(5):
            spec = build_scene_spec("s", np.random.default_rng(seed))
            assert 3 <= len(spec.boxes) <= 6
            # three ring cameras per object plus two overviews
            assert len(spec.cameras) == 3 * len(spec.boxes) + 2

    def test_fixed_object_count(self):
        spec = build_scene_spec("s", np.random.default_rng(0), n_objects=4)
        assert len(spec.boxes) == 4

    def test_objects_do_not_overlap_in_xy(self):
        spec = build_scene_spec("s", np.random.default_rng(13))
        for i, a in enumerate(spec.boxes):
            for b in spec.boxes[i + 1:]:
                gap_x = max(a.min_corner[0] - b.max_corner[0],
                            b.min_corner[0] - a.max_corner[0])
                gap_y = max(a.min_corner[1] - b.max_corner[1],
                            b.min_corner[1] - a.max_corner[1])
                assert max(gap_x, gap_y) > 0


class TestRender:
    def test_depth_and_instances_consistent(self):
        spec = build_scene_spec("s", np.random.default_rng(5), n_objects=3)
        cam = spec.cameras[0]
        depth, inst = render_frame(spec, cam)
        assert depth.shape == (IMG_H, IMG_W)
        assert inst.shape == (IMG_H, IMG_W)
        hit = inst >= 0
        assert np.all(depth[hit] > 0)
        assert np.all(depth[~hit] == 0)
        # the focused object must be visible from its ring camera
        assert (inst == cam.focus).sum() >= MIN_VISIBLE_PIXELS

    def test_floor_fills_background(self):
        spec = build_scene_spec("s", np.random.default_rng(5), n_objects=3)
        _, inst = render_frame(spec, spec.cameras[0])
        assert (inst == len(spec.boxes)).any()


class TestPerturb:
    def test_dilation_grows_mask(self, rng):
        dense = dense_disk()
        grown = perturb_mask(dense, 0.10)
        assert grown.sum() > dense.sum()
        assert np.all(grown[dense])

    def test_zero_fraction_is_identity(self):
        dense = dense_disk()
        assert np.array_equal(perturb_mask(dense, 0.0), dense)


class TestWriteScene:
    def test_layout_and_loaders(self, tmp_path):
        scene_dir = generate_scene(tmp_path / "s", seed=3, n_objects=3)
        scene = load_scene(scene_dir)
        assert len(scene.frames) == 3 * 3 + 2
        assert all(f.depth is not None and f.pose is not None
                   for f in scene.frames)

        queries = load_queries(scene_dir / "queries.json")
        scene, query_vecs = load_embeddings(scene_dir / "embeddings.bin", scene,
                                            query_ids=[q.id for q in queries])
        assert scene.embedding_dim == 4
        assert all(f.embedding is not None for f in scene.frames)
        assert set(query_vecs) == {q.id for q in queries}

        assert len(queries) == 3
        for q in queries:
            assert q.gt_box is not None
            assert q.candidate_boxes is not None
            assert q.uniqueness in ("unique", "multiple")

        fixtures = scene_dir / "fixtures"
        names = {p.name for p in fixtures.iterdir()}
        for q in queries:
            assert f"{q.id}.select_views.json" in names
            # one canned segmentation per frame
            seg = [n for n in names if n.startswith(f"{q.id}.segment.")]
            assert len(seg) == len(scene.frames)

    def test_every_query_clearly_visible_somewhere(self, tmp_path):
        scene_dir = generate_scene(tmp_path / "s", seed=3, n_objects=3)
        queries = load_queries(scene_dir / "queries.json")
        for q in queries:
            best = 0
            for path in (scene_dir / "fixtures").glob(f"{q.id}.segment.*.json"):
                runs = json.loads(path.read_text())["mask"]["runs"]
                best = max(best, sum(runs[1::2]))
            assert best >= MIN_VISIBLE_PIXELS

    def test_determinism_across_runs(self, tmp_path):
        # scene id comes from the directory name, so keep the leaf equal
        a = generate_scene(tmp_path / "a" / "scene", seed=9)
        b = generate_scene(tmp_path / "b" / "scene", seed=9)
        for rel in ("scene.json", "queries.json", "embeddings.bin"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()
        da = sorted(p.name for p in (a / "depth").iterdir())
        db = sorted(p.name for p in (b / "depth").iterdir())
        assert da == db
        for name in da:
            assert (a / "depth" / name).read_bytes() == \
                (b / "depth" / name).read_bytes()

    def test_perturbed_differs_but_same_layout(self, tmp_path):
        clean = generate_scene(tmp_path / "c" / "scene", seed=4, n_objects=3)
        noisy = generate_scene(tmp_path / "n" / "scene", seed=4, n_objects=3,
                               perturb=True)
        assert json.loads((clean / "queries.json").read_text()) == \
            json.loads((noisy / "queries.json").read_text())
        depth_names = sorted(p.name for p in (clean / "depth").iterdir())
        assert depth_names == sorted(p.name for p in (noisy / "depth").iterdir())
        assert any((clean / "depth" / n).read_bytes()
                   != (noisy / "depth" / n).read_bytes() for n in depth_names)

    def test_query_gt_among_candidates(self, tmp_path):
        scene_dir = generate_scene(tmp_path / "s", seed=12)
        for q in load_queries(scene_dir / "queries.json"):
            assert q.gt_candidate_index() is not None
