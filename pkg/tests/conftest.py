import numpy as np
import pytest

from mvground.scene import DepthMap, Frame, Intrinsics, Pose, Scene


def make_intrinsics(w=8, h=6, fx=10.0, fy=10.0, cx=None, cy=None) -> Intrinsics:
    return Intrinsics(fx=fx, fy=fy,
                      cx=(w - 1) / 2 if cx is None else cx,
                      cy=(h - 1) / 2 if cy is None else cy,
                      width=w, height=h)


def make_frame(frame_id="f0", depth=None, pose=None, intr=None,
               embedding=None) -> Frame:
    intr = intr or make_intrinsics()
    if depth is not None:
        depth = np.asarray(depth, dtype=np.float32)
        depth = DepthMap(width=depth.shape[1], height=depth.shape[0], values=depth)
        assert (depth.width, depth.height) == (intr.width, intr.height)
    if pose is None:
        pose = Pose(np.eye(3), np.zeros(3))
    return Frame(id=frame_id, intrinsics=intr, pose=pose, depth=depth,
                 embedding=embedding)


def make_scene(frames, scene_id="s0", dim=4) -> Scene:
    return Scene(id=scene_id, frames=tuple(frames), embedding_dim=dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


@pytest.fixture(scope="session")
def demo_scene_dir(tmp_path_factory):
    """One deterministic synthetic scene shared by CLI-level tests."""
    from mvground.synthetic import generate_scene
    out = tmp_path_factory.mktemp("demo") / "demo"
    return generate_scene(out, seed=3, n_objects=4)
