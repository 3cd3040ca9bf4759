"""Class-agnostic 3D proposals.

Proposals either come from an external instance segmenter (ingested from a
file of boxes or point-index lists) or from the built-in multi-view mask
consensus generator. The built-in generator is a deliberate simplification:
single-threshold voxel-overlap graph clustering, not an iterative
view-consensus procedure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IndexOutOfRange, InvariantViolation, MalformedFile
from .geometry import PointSet, aabb_of, lift_mask, trim_outliers
from .scene import Box3, Mask2D, Scene

PROPOSAL_SOURCES = ("external", "consensus")


@dataclass(frozen=True, eq=False)
class Proposal:
    """Candidate object: a box, an optional supporting point set, a stable id."""

    id: int
    box: Box3
    points: PointSet | None = None
    source: str = "external"

    def __post_init__(self):
        if self.source not in PROPOSAL_SOURCES:
            raise InvariantViolation("Proposal", "source-enum", self.source)
        if self.points is not None and not self.points.is_empty:
            bb = aabb_of(self.points)
            if (np.max(np.abs(bb.min_corner - self.box.min_corner)) > 1e-9
                    or np.max(np.abs(bb.max_corner - self.box.max_corner)) > 1e-9):
                raise InvariantViolation("Proposal", "box-is-aabb-of-points", str(self.id))


@dataclass(frozen=True)
class ConsensusParams:
    """Knobs for the multi-view mask consensus generator."""

    stride: int = 1
    cell: float = 0.08
    overlap: float = 0.3
    min_views: int = 2
    trim_lo: float = 0.02
    trim_hi: float = 0.02

    def __post_init__(self):
        if self.stride < 1:
            raise InvariantViolation("ConsensusParams", "stride-ge-1")
        if self.cell <= 0:
            raise InvariantViolation("ConsensusParams", "positive-cell")
        if not (0.0 <= self.overlap <= 1.0):
            raise InvariantViolation("ConsensusParams", "overlap-in-unit-interval")
        if self.min_views < 1:
            raise InvariantViolation("ConsensusParams", "min-views-ge-1")
        if self.trim_lo < 0 or self.trim_hi < 0 or self.trim_lo + self.trim_hi >= 1:
            raise InvariantViolation("ConsensusParams", "trim-band-valid",
                                     f"lo={self.trim_lo}, hi={self.trim_hi}")


def _voxel_keys(points: np.ndarray, cell: float) -> set[tuple[int, int, int]]:
    if len(points) == 0:
        return set()
    keys = np.floor(points / cell).astype(np.int64)
    return set(map(tuple, np.unique(keys, axis=0)))


def consensus_proposals(scene: Scene, all_masks: list[Mask2D],
                        params: ConsensusParams = ConsensusParams()) -> list[Proposal]:
    """Cluster lifted masks into object instances by voxel-set overlap.

    Masks are lifted and trimmed, voxelized at params.cell, and connected
    when their voxel sets overlap by at least params.overlap of the smaller
    set. Connected components holding at least params.min_views masks become
    proposals. Output is invariant to the order of ``all_masks``: nodes are
    canonically keyed by (manifest frame index, run-length payload).
    """
    # canonical node order makes components and ids input-order independent
    nodes = sorted(all_masks, key=lambda m: (scene.frame_index(m.frame_id), m.runs))

    lifted: list[PointSet] = []
    keys: list[set] = []
    for mask in nodes:
        frame = scene.frame(mask.frame_id)
        pts = trim_outliers(lift_mask(mask, frame, params.stride),
                            params.trim_lo, params.trim_hi)
        lifted.append(pts)
        keys.append(_voxel_keys(pts.points, params.cell))

    n = len(nodes)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i in range(n):
        if not keys[i]:
            continue
        for j in range(i + 1, n):
            if not keys[j]:
                continue
            inter = len(keys[i] & keys[j])
            if inter / min(len(keys[i]), len(keys[j])) >= params.overlap:
                union(i, j)

    components: dict[int, list[int]] = {}
    for i in range(n):
        components.setdefault(find(i), []).append(i)

    proposals = []
    next_id = 0
    for root in sorted(components):
        members = components[root]
        if len(members) < params.min_views:
            continue
        merged = np.concatenate([lifted[i].points for i in members]) \
            if any(len(lifted[i]) for i in members) else np.empty((0, 3))
        pts = trim_outliers(PointSet(merged), params.trim_lo, params.trim_hi)
        if pts.is_empty:
            continue
        proposals.append(Proposal(id=next_id, box=aabb_of(pts), points=pts,
                                  source="consensus"))
        next_id += 1
    return proposals


# ---------------------------------------------------------------------------
# proposal file format
# ---------------------------------------------------------------------------

def load_proposals(path, point_cloud=None) -> list[Proposal]:
    """Load proposals from {mode, proposals:[...]} JSON.

    ``boxes`` mode carries boxes directly; ``point_indices`` mode carries
    per-instance index lists into the scene point cloud (an (n, 3) array or
    PointSet), boxed here.
    """
    path = Path(path)
    if isinstance(point_cloud, PointSet):
        point_cloud = point_cloud.points
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedFile(path, e.pos, e.msg) from None
    if not isinstance(data, dict) or "proposals" not in data or "mode" not in data:
        raise MalformedFile(path, 0, "expected {mode, proposals} object")
    mode = data["mode"]
    if mode not in ("boxes", "point_indices"):
        raise MalformedFile(path, 0, f"unknown mode {mode!r}")

    out = []
    seen_ids = set()
    for rec in data["proposals"]:
        if not isinstance(rec, dict) or "id" not in rec:
            raise MalformedFile(path, 0, f"proposal record needs id: {rec!r}")
        pid = rec["id"]
        if not isinstance(pid, int) or pid in seen_ids:
            raise MalformedFile(path, 0, f"proposal ids must be unique integers, got {pid!r}")
        seen_ids.add(pid)
        if mode == "boxes":
            if "box" not in rec:
                raise MalformedFile(path, 0, f"proposal {pid}: boxes mode needs box")
            try:
                box = Box3.from_list(rec["box"])
            except (ValueError, TypeError, InvariantViolation) as e:
                raise MalformedFile(path, 0, f"proposal {pid}: {e}") from None
            out.append(Proposal(id=pid, box=box, source="external"))
        else:
            if "point_indices" not in rec:
                raise MalformedFile(path, 0, f"proposal {pid}: needs point_indices")
            if point_cloud is None:
                raise MalformedFile(path, 0,
                                    "point_indices mode requires a scene point cloud")
            idx = np.asarray(rec["point_indices"], dtype=np.int64)
            if idx.size == 0:
                raise MalformedFile(path, 0, f"proposal {pid}: empty point_indices")
            if idx.min() < 0 or idx.max() >= len(point_cloud):
                raise IndexOutOfRange(
                    f"proposal {pid}: index outside point cloud of size {len(point_cloud)}")
            pts = PointSet(point_cloud[idx])
            out.append(Proposal(id=pid, box=aabb_of(pts), points=pts, source="external"))
    return out


def save_proposals(path, proposals: list[Proposal]) -> None:
    """Write proposals in boxes mode (the format `propose` emits)."""
    records = [{"id": p.id, "box": p.box.to_list()} for p in proposals]
    Path(path).write_text(json.dumps({"mode": "boxes", "proposals": records}, indent=2) + "\n")
