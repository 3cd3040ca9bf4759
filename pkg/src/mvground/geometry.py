"""Pure geometric kernels: unprojection, mask lifting, trimming, boxes, 3D IoU.

Everything here is a pure function on immutable inputs and safe for
data-parallel use across frames, masks, and queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    EmptyPointSet,
    InvalidDepth,
    InvariantViolation,
    MissingDepth,
    MissingPose,
)
from .scene import Box3, Frame, Intrinsics, Mask2D


@dataclass(frozen=True, eq=False)
class PointSet:
    """World-frame 3D points, optionally tagged with the frame they came from."""

    points: np.ndarray
    provenance: str | None = None

    def __post_init__(self):
        try:
            p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        except ValueError:
            raise InvariantViolation("PointSet", "shape-n-by-3") from None
        if p.size and not np.all(np.isfinite(p)):
            raise InvariantViolation("PointSet", "finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0


EMPTY_POINTS = PointSet(np.empty((0, 3)))


def unproject(u: float, v: float, d: float, k: Intrinsics) -> np.ndarray:
    """Invert the pinhole projection for one pixel; returns a camera-frame point."""
    if not np.isfinite(d) or d <= 0:
        raise InvalidDepth(f"depth must be positive and finite, got {d}")
    return np.array([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d])


def project(p: np.ndarray, k: Intrinsics) -> tuple[float, float, float]:
    """Camera-frame point -> (u, v, depth). Inverse of unproject for d > 0."""
    x, y, z = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.isfinite(z) or z <= 0:
        raise InvalidDepth(f"point depth must be positive and finite, got {z}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy, z)


def unproject_grid(us: np.ndarray, vs: np.ndarray, ds: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Vectorized unprojection of pixel arrays; all depths must be valid."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    ds = np.asarray(ds, dtype=np.float64)
    return np.stack([(us - k.cx) * ds / k.fx, (vs - k.cy) * ds / k.fy, ds], axis=-1)


def lift_mask(mask: Mask2D, frame: Frame, stride: int = 1) -> PointSet:
    """Lift a 2D mask into a world-frame point set via depth and pose.

    Pixels are sampled on the stride grid; foreground pixels with invalid
    depth are skipped. The result may be empty.
    """
    if frame.pose is None:
        raise MissingPose(f"frame {frame.id!r} has no pose")
    if frame.depth is None:
        raise MissingDepth(f"frame {frame.id!r} has no depth")
    if (mask.width, mask.height) != (frame.depth.width, frame.depth.height):
        raise DimMismatch(
            f"mask {mask.width}x{mask.height} vs depth {frame.depth.width}x{frame.depth.height}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")

    fg = mask.decode()[::stride, ::stride]
    depth = frame.depth.values[::stride, ::stride]
    keep = fg & (depth > 0)
    if not np.any(keep):
        return PointSet(np.empty((0, 3)), provenance=frame.id)
    vs, us = np.nonzero(keep)
    cam = unproject_grid(us * stride, vs * stride, depth[vs, us], frame.intrinsics)
    return PointSet(frame.pose.apply(cam), provenance=frame.id)


def trim_outliers(ps: PointSet, lo_pct: float, hi_pct: float) -> PointSet:
    """Drop points outside the per-axis [lo_pct, 1-hi_pct] quantile band.

    A point survives only if it survives on all three axes; lo=hi=0 is the
    identity. Empty in, empty out.
    """
    if lo_pct < 0 or hi_pct < 0 or lo_pct + hi_pct >= 1:
        raise ValueError(f"invalid trim percentiles lo={lo_pct}, hi={hi_pct}")
    if ps.is_empty or (lo_pct == 0 and hi_pct == 0):
        return ps
    pts = ps.points
    lo = np.quantile(pts, lo_pct, axis=0)
    hi = np.quantile(pts, 1.0 - hi_pct, axis=0)
    keep = np.all((pts >= lo) & (pts <= hi), axis=1)
    return PointSet(pts[keep], provenance=ps.provenance)


def aabb_of(ps: PointSet) -> Box3:
    """Componentwise min/max box of a non-empty point set."""
    if ps.is_empty:
        raise EmptyPointSet("cannot box an empty point set")
    return Box3(ps.points.min(axis=0), ps.points.max(axis=0))


def box_iou(a: Box3, b: Box3) -> float:
    """Volume IoU of two axis-aligned boxes.

    Degenerate boxes are legal: identical zero-volume boxes have IoU 1,
    any other zero-volume union has IoU 0.
    """
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    inter = float(np.prod(np.maximum(hi - lo, 0.0)))
    union = a.volume() + b.volume() - inter
    if union > 0:
        return inter / union
    return 1.0 if a.same_as(b) else 0.0
