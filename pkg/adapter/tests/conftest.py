import json

import numpy as np
import pytest
from PIL import Image


def make_image_scene(root, n_frames=3, dim=16, n_queries=2, duplicate_pair=None):
    """Scene directory with images and a manifest but no geometry.

    ``duplicate_pair`` names two frame indices that share identical image
    bytes. Returns the scene directory.
    """
    scene = root / "cap_scene"
    (scene / "images").mkdir(parents=True)
    rng = np.random.default_rng(7)
    frames = []
    blobs = {}
    for i in range(n_frames):
        src = i
        if duplicate_pair and i == duplicate_pair[1]:
            src = duplicate_pair[0]
        if src not in blobs:
            blobs[src] = rng.integers(0, 255, size=(10, 12, 3), dtype=np.uint8)
        Image.fromarray(blobs[src]).save(scene / "images" / f"f{i}.png")
        frames.append({"id": f"f{i}",
                       "intrinsics": {"fx": 5.0, "fy": 5.0, "cx": 5.5, "cy": 4.5,
                                      "width": 12, "height": 10},
                       "image": f"images/f{i}.png"})
    (scene / "scene.json").write_text(json.dumps(
        {"id": scene.name, "embedding_dim": dim, "frames": frames}, indent=2) + "\n")
    queries = [{"id": f"q{j}", "scene_id": scene.name, "text": f"object number {j}"}
               for j in range(n_queries)]
    (scene / "queries.json").write_text(json.dumps(queries, indent=2) + "\n")
    return scene


@pytest.fixture
def image_scene(tmp_path):
    return make_image_scene(tmp_path)


@pytest.fixture
def scene_factory(tmp_path):
    return lambda **kw: make_image_scene(tmp_path, **kw)
