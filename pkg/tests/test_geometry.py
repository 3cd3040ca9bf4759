import numpy as np
import pytest

from mvground.errors import (DimMismatch, EmptyPointSet, InvalidDepth,
                             InvariantViolation, MissingDepth, MissingPose)
from mvground.geometry import (EMPTY_POINTS, PointSet, aabb_of, box_iou,
                               lift_mask, project, trim_outliers, unproject,
                               unproject_grid)
from mvground.scene import Box3, Mask2D, Pose
from tests.conftest import make_frame, make_intrinsics


class TestUnprojectProject:
    def test_known_point(self):
        k = make_intrinsics(w=8, h=6, fx=2.0, fy=4.0, cx=3.0, cy=2.0)
        p = unproject(5.0, 4.0, 2.0, k)
        assert np.allclose(p, [(5 - 3) * 2 / 2.0, (4 - 2) * 2 / 4.0, 2.0])

    def test_principal_point_maps_to_axis(self):
        k = make_intrinsics()
        p = unproject(k.cx, k.cy, 1.7, k)
        assert np.allclose(p, [0, 0, 1.7])

    def test_round_trip_random(self, rng):
        k = make_intrinsics(w=640, h=480, fx=525.0, fy=521.0, cx=319.5, cy=239.5)
        for _ in range(200):
            u = rng.uniform(0, k.width - 1)
            v = rng.uniform(0, k.height - 1)
            d = rng.uniform(0.05, 10.0)
            u2, v2, z = project(unproject(u, v, d, k), k)
            assert abs(u2 - u) < 1e-9 and abs(v2 - v) < 1e-9 and abs(z - d) < 1e-9

    @pytest.mark.parametrize("d", [0.0, -1.0, float("nan"), float("inf")])
    def test_invalid_depth(self, d):
        with pytest.raises(InvalidDepth):
            unproject(1.0, 1.0, d, make_intrinsics())

    def test_project_behind_camera(self):
        with pytest.raises(InvalidDepth):
            project(np.array([0.0, 0.0, -0.5]), make_intrinsics())

    def test_grid_matches_scalar(self, rng):
        k = make_intrinsics(w=16, h=12, fx=13.0, fy=11.0, cx=7.5, cy=5.5)
        us = rng.integers(0, 16, size=20)
        vs = rng.integers(0, 12, size=20)
        ds = rng.uniform(0.1, 4.0, size=20)
        grid = unproject_grid(us, vs, ds, k)
        for i in range(20):
            assert np.allclose(grid[i], unproject(us[i], vs[i], ds[i], k))


class TestPointSet:
    def test_finite_required(self):
        with pytest.raises(InvariantViolation):
            PointSet(np.array([[0.0, 0.0, np.inf]]))

    def test_empty(self):
        assert EMPTY_POINTS.is_empty and len(EMPTY_POINTS) == 0

    def test_shape(self):
        with pytest.raises(InvariantViolation):
            PointSet(np.zeros((2, 2)))


class TestLiftMask:
    def _setup(self):
        # 3x2 frame, depth 2.0 everywhere except one invalid pixel
        depth = np.full((2, 3), 2.0)
        depth[1, 2] = 0.0
        intr = make_intrinsics(w=3, h=2, fx=1.0, fy=1.0, cx=1.0, cy=0.5)
        frame = make_frame("f", depth=depth, intr=intr)
        return frame

    def test_hand_computed(self):
        frame = self._setup()
        mask = Mask2D.from_dense("f", np.array([[1, 0, 0], [0, 0, 1]], dtype=bool))
        pts = lift_mask(mask, frame)
        # pixel (0,0) carries depth, pixel (2,1) has no reading
        assert len(pts) == 1
        assert np.allclose(pts.points[0], [(0 - 1) * 2, (0 - 0.5) * 2, 2.0])

    def test_translation_applied(self):
        frame = self._setup()
        moved = make_frame("f", depth=np.full((2, 3), 2.0),
                           intr=frame.intrinsics,
                           pose=Pose(np.eye(3), np.array([10.0, 0, 0])))
        mask = Mask2D.from_dense("f", np.ones((2, 3), dtype=bool))
        pts = lift_mask(mask, moved)
        assert np.allclose(pts.points[:, 0].min(), 10 + (0 - 1) * 2)

    def test_stride(self):
        depth = np.full((4, 4), 1.0)
        intr = make_intrinsics(w=4, h=4, fx=1.0, fy=1.0, cx=1.5, cy=1.5)
        frame = make_frame("f", depth=depth, intr=intr)
        mask = Mask2D.from_dense("f", np.ones((4, 4), dtype=bool))
        assert len(lift_mask(mask, frame, stride=2)) == 4
        with pytest.raises(ValueError):
            lift_mask(mask, frame, stride=0)

    def test_missing_assets(self):
        frame = self._setup()
        mask = Mask2D.from_dense("f", np.ones((2, 3), dtype=bool))
        no_pose = make_frame("f", depth=np.full((2, 3), 1.0), intr=frame.intrinsics)
        object.__setattr__(no_pose, "pose", None)
        with pytest.raises(MissingPose):
            lift_mask(mask, no_pose)
        no_depth = make_frame("f", intr=frame.intrinsics)
        with pytest.raises(MissingDepth):
            lift_mask(mask, no_depth)

    def test_dim_mismatch(self):
        frame = self._setup()
        mask = Mask2D.from_dense("f", np.ones((3, 3), dtype=bool))
        with pytest.raises(DimMismatch):
            lift_mask(mask, frame)

    def test_empty_mask_lifts_empty(self):
        frame = self._setup()
        mask = Mask2D(frame_id="f", width=3, height=2, runs=(6,))
        assert lift_mask(mask, frame).is_empty


class TestTrimOutliers:
    def test_identity_when_zero(self, rng):
        ps = PointSet(rng.standard_normal((40, 3)))
        assert trim_outliers(ps, 0.0, 0.0) is ps

    def test_drops_extremes(self):
        pts = np.zeros((101, 3))
        pts[:, 0] = np.linspace(0, 1, 101)
        pts[-1, 0] = 100.0
        kept = trim_outliers(PointSet(pts), 0.0, 0.01)
        assert kept.points[:, 0].max() < 2.0

    def test_invalid_percentiles(self):
        ps = PointSet(np.zeros((4, 3)))
        with pytest.raises(ValueError):
            trim_outliers(ps, -0.1, 0.0)
        with pytest.raises(ValueError):
            trim_outliers(ps, 0.6, 0.5)

    def test_empty_passthrough(self):
        assert trim_outliers(EMPTY_POINTS, 0.1, 0.1).is_empty


class TestAabb:
    def test_basic(self):
        ps = PointSet(np.array([[0.0, 1, 2], [3, -1, 5]]))
        box = aabb_of(ps)
        assert np.allclose(box.min_corner, [0, -1, 2])
        assert np.allclose(box.max_corner, [3, 1, 5])

    def test_empty_rejected(self):
        with pytest.raises(EmptyPointSet):
            aabb_of(EMPTY_POINTS)


class TestBoxIou:
    def test_identity(self):
        b = Box3.from_list([0, 0, 0, 1, 2, 3])
        assert box_iou(b, b) == 1.0

    def test_disjoint(self):
        a = Box3.from_list([0, 0, 0, 1, 1, 1])
        b = Box3.from_list([2, 2, 2, 3, 3, 3])
        assert box_iou(a, b) == 0.0

    def test_offset_cube_exact_third(self):
        # unit cubes offset by half along one axis:
        # inter 0.5, union 1.5, ratio exactly 1/3
        a = Box3.from_list([0, 0, 0, 1, 1, 1])
        b = Box3.from_list([0.5, 0, 0, 1.5, 1, 1])
        assert box_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_touching_faces(self):
        a = Box3.from_list([0, 0, 0, 1, 1, 1])
        b = Box3.from_list([1, 0, 0, 2, 1, 1])
        assert box_iou(a, b) == 0.0

    def test_containment(self):
        a = Box3.from_list([0, 0, 0, 2, 2, 2])
        b = Box3.from_list([0.5, 0.5, 0.5, 1.5, 1.5, 1.5])
        assert box_iou(a, b) == pytest.approx(1.0 / 8.0)

    def test_degenerate_zero_volume(self):
        flat = Box3.from_list([0, 0, 0, 1, 1, 0])
        other = Box3.from_list([0, 0, 0, 1, 1, 1])
        assert box_iou(flat, other) == 0.0
        # identical degenerate boxes still compare equal
        assert box_iou(flat, Box3.from_list([0, 0, 0, 1, 1, 0])) == 1.0

    def test_symmetry_and_bounds(self, rng):
        for _ in range(100):
            lo = rng.uniform(-1, 1, size=(2, 3))
            ext = rng.uniform(0.1, 2.0, size=(2, 3))
            a = Box3(lo[0], lo[0] + ext[0])
            b = Box3(lo[1], lo[1] + ext[1])
            iou = box_iou(a, b)
            assert 0.0 <= iou <= 1.0
            assert iou == box_iou(b, a)

    def test_scale_invariance(self, rng):
        for _ in range(50):
            lo = rng.uniform(-1, 1, size=(2, 3))
            ext = rng.uniform(0.1, 2.0, size=(2, 3))
            s = rng.uniform(0.5, 4.0)
            a = Box3(lo[0], lo[0] + ext[0])
            b = Box3(lo[1], lo[1] + ext[1])
            sa = Box3(lo[0] * s, (lo[0] + ext[0]) * s)
            sb = Box3(lo[1] * s, (lo[1] + ext[1]) * s)
            assert box_iou(sa, sb) == pytest.approx(box_iou(a, b), abs=1e-12)
