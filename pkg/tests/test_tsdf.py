import numpy as np
import pytest

from mvground.errors import (EmptySurface, InvariantViolation,
                             MemoryCapExceeded, NoValidDepth)
from mvground.scene import DepthMap, Frame, Intrinsics, Pose
from mvground.tsdf import (TsdfVolume, extract_mesh, extract_points, integrate,
                           volume_for_scene)
from tests.conftest import make_frame, make_intrinsics


def plane_frame(z=1.0, w=32, h=24, fx=30.0):
    """Camera at origin facing a wall at depth z."""
    intr = make_intrinsics(w=w, h=h, fx=fx, fy=fx)
    depth = np.full((h, w), z, dtype=np.float32)
    return make_frame("plane", depth=depth, intr=intr)


def sphere_frames(radius=0.5, n_views=8, distance=1.6, w=96, h=96, fx=90.0):
    """Cameras ringed around a sphere at the origin, depth rendered analytically."""
    intr = Intrinsics(fx=fx, fy=fx, cx=(w - 1) / 2, cy=(h - 1) / 2,
                      width=w, height=h)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    dirs_cam = np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy,
                         np.ones_like(uu)], axis=-1)
    frames = []
    for i in range(n_views):
        # alternate two elevation bands so poles get observed too
        theta = 2 * np.pi * i / n_views
        phi = 0.55 if i % 2 else -0.55
        eye = distance * np.array([np.cos(theta) * np.cos(phi),
                                   np.sin(theta) * np.cos(phi), np.sin(phi)])
        fwd = -eye / np.linalg.norm(eye)
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        rot = np.stack([right, down, fwd], axis=1)

        d = dirs_cam @ rot.T
        a = np.einsum("hwc,hwc->hw", d, d)
        b = 2.0 * (d @ eye)
        c = float(eye @ eye) - radius * radius
        disc = b * b - 4 * a * c
        t = np.where(disc >= 0, (-b - np.sqrt(np.maximum(disc, 0))) / (2 * a), 0.0)
        depth = np.where(t > 0, t, 0.0)
        frames.append(Frame(id=f"v{i}", intrinsics=intr,
                            pose=Pose(rot, eye),
                            depth=DepthMap(width=w, height=h,
                                           values=depth.astype(np.float32))))
    return frames


class TestVolumeSetup:
    def test_bounds_enclose_observations(self):
        frame = plane_frame(z=2.0)
        vol = volume_for_scene([frame], voxel_size=0.1, truncation=0.3,
                               margin=0.2, sample_stride=1)
        centers = vol.voxel_centers()
        # surface sits at z=2; the grid must straddle it with the margin
        assert centers[:, 2].min() < 2.0 - 0.1
        assert centers[:, 2].max() > 2.0 + 0.1

    def test_truncation_floor(self):
        with pytest.raises(InvariantViolation):
            volume_for_scene([plane_frame()], voxel_size=0.1, truncation=0.15,
                             margin=0.1)

    def test_no_valid_depth(self):
        intr = make_intrinsics(w=4, h=4)
        frame = make_frame("f", depth=np.zeros((4, 4)), intr=intr)
        with pytest.raises(NoValidDepth):
            volume_for_scene([frame], voxel_size=0.1, truncation=0.3, margin=0.1)

    def test_memory_cap(self):
        with pytest.raises(MemoryCapExceeded):
            volume_for_scene([plane_frame(z=5.0)], voxel_size=0.001,
                             truncation=0.01, margin=0.5, max_voxels=1000)


class TestIntegrate:
    def test_values_clamped_and_weighted(self):
        frame = plane_frame(z=1.0)
        vol = volume_for_scene([frame], voxel_size=0.05, truncation=0.15,
                               margin=0.2, sample_stride=1)
        integrate(vol, frame)
        assert vol.values.min() >= -1.0 and vol.values.max() <= 1.0
        assert vol.weights.max() == 1.0
        integrate(vol, frame)
        assert vol.weights.max() == 2.0
        # same observation twice: average unchanged
        assert np.allclose(vol.values[vol.weights > 0],
                           vol.values[vol.weights > 0])

    def test_sign_convention(self):
        # wall at z=1: voxels in front of it carry positive distance,
        # voxels just behind carry negative
        frame = plane_frame(z=1.0)
        vol = volume_for_scene([frame], voxel_size=0.04, truncation=0.12,
                               margin=0.15, sample_stride=1)
        integrate(vol, frame)
        centers = vol.voxel_centers().reshape(*vol.dims, 3)
        observed = vol.weights > 0
        front = observed & (centers[..., 2] < 0.97) & (centers[..., 2] > 0.87)
        behind = observed & (centers[..., 2] > 1.03) & (centers[..., 2] < 1.1)
        assert front.any() and behind.any()
        assert np.all(vol.values[front] > 0)
        assert np.all(vol.values[behind] < 0)

    def test_order_invariance_small(self, rng):
        frames = sphere_frames(n_views=4, w=32, h=32, fx=30.0)
        base = volume_for_scene(frames, voxel_size=0.08, truncation=0.24,
                                margin=0.2, sample_stride=1)
        ref = base.copy()
        for f in frames:
            integrate(ref, f)
        perm = base.copy()
        for i in rng.permutation(len(frames)):
            integrate(perm, frames[i])
        assert np.max(np.abs(ref.values - perm.values)) < 1e-6
        assert np.array_equal(ref.weights, perm.weights)


class TestExtract:
    def test_unobserved_volume_has_no_surface(self):
        vol = TsdfVolume.empty(np.zeros(3), 0.1, (8, 8, 8), 0.3)
        with pytest.raises(EmptySurface):
            extract_mesh(vol)

    def test_tiny_grid_rejected(self):
        vol = TsdfVolume.empty(np.zeros(3), 0.1, (1, 5, 5), 0.3)
        with pytest.raises(EmptySurface):
            extract_mesh(vol)

    def test_plane_surface_position(self):
        frame = plane_frame(z=1.0, w=48, h=36, fx=40.0)
        vol = volume_for_scene([frame], voxel_size=0.03, truncation=0.09,
                               margin=0.15, sample_stride=1)
        integrate(vol, frame)
        mesh = extract_mesh(vol)
        assert len(mesh.vertices) > 50
        # every vertex should sit on the wall, not floating in free space
        assert np.max(np.abs(mesh.vertices[:, 2] - 1.0)) < 0.03 * np.sqrt(3)

    def test_sphere_surface_small(self):
        frames = sphere_frames(radius=0.5, n_views=8, w=96, h=96, fx=90.0)
        vol = volume_for_scene(frames, voxel_size=0.04, truncation=0.12,
                               margin=0.15, sample_stride=1)
        for f in frames:
            integrate(vol, f)
        mesh = extract_mesh(vol)
        assert len(mesh.vertices) > 200
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.max(np.abs(radii - 0.5)) <= 0.04 * np.sqrt(3)

    def test_extract_points_unique(self):
        frame = plane_frame(z=1.0)
        vol = volume_for_scene([frame], voxel_size=0.05, truncation=0.15,
                               margin=0.15, sample_stride=1)
        integrate(vol, frame)
        pts = extract_points(vol)
        assert not pts.is_empty
        assert len(np.unique(np.round(pts.points, 9), axis=0)) == len(pts)

    def test_mesh_faces_only_in_observed_cells(self):
        # one camera sees the wall; cells outside its frustum stay unobserved
        frame = plane_frame(z=1.0, w=24, h=18, fx=20.0)
        vol = volume_for_scene([frame], voxel_size=0.05, truncation=0.15,
                               margin=0.3, sample_stride=1)
        integrate(vol, frame)
        mesh = extract_mesh(vol)
        idx = np.clip(((mesh.vertices - vol.origin) / vol.voxel_size - 0.5).round()
                      .astype(int), 0, np.array(vol.dims) - 1)
        w = vol.weights[idx[:, 0], idx[:, 1], idx[:, 2]]
        assert (w > 0).mean() > 0.99
