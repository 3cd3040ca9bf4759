"""Truncated signed-distance fusion of depth maps and iso-surface extraction.

The volume is a dense voxel grid sampled at cell centers. Each depth frame
contributes a clamped, truncation-normalized signed distance per voxel,
accumulated by weighted averaging with weight increment 1, which makes the
result independent of integration order up to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .errors import (
    EmptySurface,
    InvariantViolation,
    MemoryCapExceeded,
    MissingDepth,
    MissingPose,
    NoValidDepth,
)
from .geometry import PointSet, unproject_grid
from .scene import Frame

DEFAULT_VOXEL_SIZE = 0.04
DEFAULT_TRUNCATION = 0.12
DEFAULT_MARGIN = 0.2
DEFAULT_MAX_VOXELS = 32_000_000


@dataclass(eq=False)
class TsdfVolume:
    """Dense TSDF grid: values in [-1, 1], +1 sentinel where weight is 0."""

    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    truncation: float
    values: np.ndarray
    weights: np.ndarray

    @classmethod
    def empty(cls, origin, voxel_size: float, dims, truncation: float) -> "TsdfVolume":
        dims = tuple(int(d) for d in dims)
        return cls(origin=np.asarray(origin, dtype=np.float64).reshape(3),
                   voxel_size=float(voxel_size), dims=dims, truncation=float(truncation),
                   values=np.ones(dims, dtype=np.float32),
                   weights=np.zeros(dims, dtype=np.float32))

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of every voxel center, shape (prod(dims), 3)."""
        ii, jj, kk = np.meshgrid(*(np.arange(d) for d in self.dims), indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)
        return self.origin + (idx + 0.5) * self.voxel_size

    def copy(self) -> "TsdfVolume":
        return TsdfVolume(origin=self.origin.copy(), voxel_size=self.voxel_size,
                          dims=self.dims, truncation=self.truncation,
                          values=self.values.copy(), weights=self.weights.copy())


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InvariantViolation("TriangleMesh", "indices-in-range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)


def _frame_depth_points(frame: Frame, stride: int) -> np.ndarray:
    """World-frame points of valid depth samples on the stride grid."""
    depth = frame.depth.values[::stride, ::stride]
    vs, us = np.nonzero(depth > 0)
    if len(vs) == 0:
        return np.empty((0, 3))
    cam = unproject_grid(us * stride, vs * stride, depth[vs, us], frame.intrinsics)
    return frame.pose.apply(cam)


def volume_for_scene(frames, voxel_size: float = DEFAULT_VOXEL_SIZE,
                     truncation: float = DEFAULT_TRUNCATION,
                     margin: float = DEFAULT_MARGIN,
                     sample_stride: int = 4,
                     max_voxels: int = DEFAULT_MAX_VOXELS) -> TsdfVolume:
    """Size an empty volume to the AABB of all observed depth samples plus margin."""
    if voxel_size <= 0:
        raise InvariantViolation("TsdfVolume", "positive-voxel-size")
    if truncation < 2 * voxel_size:
        raise InvariantViolation("TsdfVolume", "truncation-ge-2-voxels",
                                 f"truncation {truncation} < 2 x {voxel_size}")
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for frame in frames:
        if frame.pose is None:
            raise MissingPose(f"frame {frame.id!r} has no pose")
        if frame.depth is None:
            raise MissingDepth(f"frame {frame.id!r} has no depth")
        pts = _frame_depth_points(frame, sample_stride)
        if len(pts):
            lo = np.minimum(lo, pts.min(axis=0))
            hi = np.maximum(hi, pts.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise NoValidDepth("no frame contains a valid depth sample")
    origin = lo - margin
    extent = (hi + margin) - origin
    dims = np.maximum(np.ceil(extent / voxel_size).astype(int), 1)
    if int(np.prod(dims)) > max_voxels:
        raise MemoryCapExceeded(
            f"volume needs {int(np.prod(dims))} voxels, cap is {max_voxels}")
    return TsdfVolume.empty(origin, voxel_size, dims, truncation)


def integrate(vol: TsdfVolume, frame: Frame) -> TsdfVolume:
    """Fuse one depth frame into the volume (in place; returns the volume).

    Voxels behind the observed surface by more than the truncation distance
    are left untouched; everything else accumulates clamp(sdf/truncation)
    with unit weight.
    """
    if frame.pose is None:
        raise MissingPose(f"frame {frame.id!r} has no pose")
    if frame.depth is None:
        raise MissingDepth(f"frame {frame.id!r} has no depth")

    k = frame.intrinsics
    centers = vol.voxel_centers()
    cam = frame.pose.world_to_camera(centers)
    z = cam[:, 2]
    in_front = z > 0

    u = np.full(len(cam), -1, dtype=np.int64)
    v = np.full(len(cam), -1, dtype=np.int64)
    zf = np.where(in_front, z, 1.0)
    u[in_front] = np.floor(k.fx * cam[in_front, 0] / zf[in_front] + k.cx + 0.5).astype(np.int64)
    v[in_front] = np.floor(k.fy * cam[in_front, 1] / zf[in_front] + k.cy + 0.5).astype(np.int64)
    in_image = in_front & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)

    depth = frame.depth.values
    d = np.zeros(len(cam), dtype=np.float64)
    d[in_image] = depth[v[in_image], u[in_image]]
    sdf = d - z
    update = in_image & (d > 0) & (sdf >= -vol.truncation)
    if not np.any(update):
        return vol

    new_vals = np.clip(sdf[update] / vol.truncation, -1.0, 1.0).astype(np.float32)
    flat_vals = vol.values.reshape(-1)
    flat_wts = vol.weights.reshape(-1)
    idx = np.flatnonzero(update)
    w_old = flat_wts[idx]
    flat_vals[idx] = (flat_vals[idx] * w_old + new_vals) / (w_old + 1.0)
    flat_wts[idx] = w_old + 1.0
    return vol


def _cell_fully_observed(weights: np.ndarray) -> np.ndarray:
    """Per-cell flag: all 8 corner voxels observed at least once."""
    obs = weights > 0
    return (obs[:-1, :-1, :-1] & obs[1:, :-1, :-1] & obs[:-1, 1:, :-1] & obs[:-1, :-1, 1:]
            & obs[1:, 1:, :-1] & obs[1:, :-1, 1:] & obs[:-1, 1:, 1:] & obs[1:, 1:, 1:])


def extract_mesh(vol: TsdfVolume) -> TriangleMesh:
    """Marching-cubes zero iso-surface over fully observed cells only."""
    if min(vol.dims) < 2:
        raise EmptySurface("volume too small for surface extraction")
    try:
        verts, faces, _, _ = measure.marching_cubes(
            vol.values.astype(np.float32), level=0.0, allow_degenerate=False)
    except (ValueError, RuntimeError) as e:
        raise EmptySurface(f"no zero crossing in volume: {e}") from None

    observed = _cell_fully_observed(vol.weights)
    centroids = verts[faces].mean(axis=1)
    cells = np.clip(np.floor(centroids).astype(np.int64), 0,
                    np.asarray(vol.dims) - 2)
    keep = observed[cells[:, 0], cells[:, 1], cells[:, 2]]
    faces = faces[keep]

    if len(faces):
        tri = verts[faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        faces = faces[areas * vol.voxel_size ** 2 > 1e-12]
    if not len(faces):
        raise EmptySurface("no surface within fully observed cells")

    used = np.unique(faces)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    world = vol.origin + (verts[used].astype(np.float64) + 0.5) * vol.voxel_size
    return TriangleMesh(vertices=world, triangles=remap[faces])


def extract_points(vol: TsdfVolume) -> PointSet:
    """Surface point cloud: mesh vertices deduplicated within 1e-9."""
    mesh = extract_mesh(vol)
    rounded = np.round(mesh.vertices / 1e-9) * 1e-9
    return PointSet(np.unique(rounded, axis=0))
