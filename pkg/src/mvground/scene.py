"""Domain types and on-disk scene format.

A scene directory looks like::

    scene.json            manifest: id, embedding_dim, ordered frame records
    poses/<frame>.txt     4x4 row-major camera-to-world matrix, whitespace-separated
    depth/<frame>.png     16-bit grayscale PNG, millimeters, 0 = invalid
    masks/<frame>/<instance>.json   {"width": W, "height": H, "runs": [...]}
    embeddings.bin        binary embedding records (see load_embeddings)
    queries.json          list of query records, boxes as [minx,miny,minz,maxx,maxy,maxz]
    points.ply            optional scene point cloud (binary little-endian, xyz only)

Frame order in the manifest is authoritative: every "first/lowest" tie-break
elsewhere in the pipeline refers to it. A loaded Scene is immutable and safe
to share across threads.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DegenerateVector,
    DimensionMismatch,
    InvariantViolation,
    LengthMismatch,
    MalformedFile,
    MissingAsset,
    UnknownFrameId,
)
from .plyio import read_ply_points

LOAD_MODES = ("full", "posed_only", "images_only")
MASK_SOURCES = ("oracle_segmenter", "fixture", "synthetic")
UNIQUENESS_LABELS = ("unique", "multiple")

EMBEDDINGS_MAGIC = b"EMB1"


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera calibration in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvariantViolation("Intrinsics", "positive-dims")
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantViolation("Intrinsics", "positive-focal")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvariantViolation("Intrinsics", "principal-point-in-image")


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvariantViolation("Pose", "finite")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise InvariantViolation("Pose", "orthonormal")
        object.__setattr__(self, "rotation", _freeze(r))
        object.__setattr__(self, "translation", _freeze(t))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-6:
            raise InvariantViolation("Pose", "homogeneous-last-row")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Camera-frame points (N, 3) -> world frame."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in meters; 0 marks invalid pixels."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != (self.height, self.width):
            raise InvariantViolation("DepthMap", "values-shape")
        if not np.all(np.isfinite(v)):
            raise InvariantViolation("DepthMap", "finite")
        if np.any(v < 0):
            raise InvariantViolation("DepthMap", "non-negative")
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def from_millimeters(cls, mm: np.ndarray) -> "DepthMap":
        mm = np.asarray(mm)
        return cls(width=mm.shape[1], height=mm.shape[0],
                   values=mm.astype(np.float32) / 1000.0)

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0


# ---------------------------------------------------------------------------
# run-length encoded masks
# ---------------------------------------------------------------------------

def rle_encode(dense: np.ndarray) -> list[int]:
    """Encode a binary grid as row-major run lengths, background first.

    The result is canonical: a leading 0 appears only when the grid starts
    with foreground, no interior run is zero, and there is no trailing zero.
    """
    flat = np.asarray(dense, dtype=bool).ravel()
    if flat.size == 0:
        raise InvariantViolation("Mask2D", "positive-dims")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(starts).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(runs, width: int, height: int) -> np.ndarray:
    """Decode run lengths into a (height, width) boolean grid."""
    runs = list(runs)
    if any((not isinstance(r, (int, np.integer))) or r < 0 for r in runs):
        raise LengthMismatch(f"runs must be non-negative integers, got {runs!r}")
    total = sum(runs)
    if total != width * height:
        raise LengthMismatch(
            f"runs sum to {total}, expected {width}x{height}={width * height}")
    flags = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(flags, runs)
    return flat.reshape(height, width)


@dataclass(frozen=True)
class Mask2D:
    """Binary instance mask for one frame, stored run-length encoded."""

    frame_id: str
    width: int
    height: int
    runs: tuple[int, ...]
    source: str = "fixture"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvariantViolation("Mask2D", "positive-dims")
        if self.source not in MASK_SOURCES:
            raise InvariantViolation("Mask2D", "source-enum", self.source)
        runs = tuple(int(r) for r in self.runs)
        if any(r < 0 for r in runs):
            raise LengthMismatch("negative run length")
        if sum(runs) != self.width * self.height:
            raise LengthMismatch(
                f"runs sum to {sum(runs)}, expected {self.width * self.height}")
        object.__setattr__(self, "runs", runs)

    @classmethod
    def from_dense(cls, frame_id: str, dense: np.ndarray, source: str = "synthetic") -> "Mask2D":
        dense = np.asarray(dense, dtype=bool)
        return cls(frame_id=frame_id, width=dense.shape[1], height=dense.shape[0],
                   runs=tuple(rle_encode(dense)), source=source)

    def decode(self) -> np.ndarray:
        return rle_decode(self.runs, self.width, self.height)

    def canonical(self) -> "Mask2D":
        """Re-encode so that runs are in the canonical form rle_encode produces."""
        return Mask2D.from_dense(self.frame_id, self.decode(), self.source)

    @property
    def foreground_count(self) -> int:
        return sum(self.runs[1::2])

    @property
    def is_empty(self) -> bool:
        return self.foreground_count == 0


# ---------------------------------------------------------------------------
# frames, boxes, scenes, queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Box3:
    """Axis-aligned 3D bounding box in meters."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvariantViolation("Box3", "finite")
        if np.any(lo > hi):
            raise InvariantViolation("Box3", "min-le-max")
        object.__setattr__(self, "min_corner", _freeze(lo))
        object.__setattr__(self, "max_corner", _freeze(hi))

    @classmethod
    def from_list(cls, values) -> "Box3":
        v = np.asarray(values, dtype=np.float64).reshape(6)
        return cls(v[:3], v[3:])

    def to_list(self) -> list[float]:
        return [float(x) for x in np.concatenate([self.min_corner, self.max_corner])]

    def volume(self) -> float:
        return float(np.prod(self.max_corner - self.min_corner))

    def same_as(self, other: "Box3") -> bool:
        return (np.array_equal(self.min_corner, other.min_corner)
                and np.array_equal(self.max_corner, other.max_corner))


@dataclass(frozen=True, eq=False)
class Frame:
    """One calibrated observation."""

    id: str
    intrinsics: Intrinsics
    pose: Pose | None = None
    depth: DepthMap | None = None
    embedding: np.ndarray | None = None
    image_path: str | None = None
    source: str = "captured"

    def __post_init__(self):
        if self.depth is not None:
            if (self.depth.width, self.depth.height) != (self.intrinsics.width, self.intrinsics.height):
                raise InvariantViolation("Frame", "depth-dims-match-intrinsics", self.id)
        if self.embedding is not None:
            e = np.asarray(self.embedding, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(e)):
                raise InvariantViolation("Frame", "embedding-finite", self.id)
            if abs(np.linalg.norm(e) - 1.0) > 1e-4:
                raise InvariantViolation("Frame", "embedding-unit-norm", self.id)
            object.__setattr__(self, "embedding", _freeze(e))


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable bundle of frames plus optional scene-level point cloud."""

    id: str
    frames: tuple[Frame, ...]
    embedding_dim: int
    point_cloud: np.ndarray | None = None
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise InvariantViolation("Scene", "positive-embedding-dim")
        frames = tuple(self.frames)
        ids = [f.id for f in frames]
        if len(set(ids)) != len(ids):
            raise InvariantViolation("Scene", "unique-frame-ids")
        for f in frames:
            if f.embedding is not None and f.embedding.shape[0] != self.embedding_dim:
                raise InvariantViolation("Scene", "embedding-dim", f.id)
        pc = self.point_cloud
        if pc is not None:
            pc = np.asarray(pc, dtype=np.float64).reshape(-1, 3)
            if not np.all(np.isfinite(pc)):
                raise InvariantViolation("Scene", "point-cloud-finite")
            object.__setattr__(self, "point_cloud", _freeze(pc))
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "_index", {fid: i for i, fid in enumerate(ids)})

    def frame(self, frame_id: str) -> Frame:
        try:
            return self.frames[self._index[frame_id]]
        except KeyError:
            raise UnknownFrameId(f"scene {self.id!r} has no frame {frame_id!r}") from None

    def frame_index(self, frame_id: str) -> int:
        try:
            return self._index[frame_id]
        except KeyError:
            raise UnknownFrameId(f"scene {self.id!r} has no frame {frame_id!r}") from None

    def has_frame(self, frame_id: str) -> bool:
        return frame_id in self._index

    def with_point_cloud(self, points: np.ndarray) -> "Scene":
        return Scene(id=self.id, frames=self.frames,
                     embedding_dim=self.embedding_dim, point_cloud=points)


@dataclass(frozen=True, eq=False)
class Query:
    """One natural-language grounding request."""

    id: str
    scene_id: str
    text: str
    gt_box: Box3 | None = None
    uniqueness: str | None = None
    candidate_boxes: tuple[Box3, ...] | None = None

    def __post_init__(self):
        if self.uniqueness is not None and self.uniqueness not in UNIQUENESS_LABELS:
            raise InvariantViolation("Query", "uniqueness-enum", str(self.uniqueness))
        if self.candidate_boxes is not None:
            cands = tuple(self.candidate_boxes)
            if not cands:
                raise InvariantViolation("Query", "candidates-non-empty", self.id)
            object.__setattr__(self, "candidate_boxes", cands)
            if self.gt_box is not None and self.gt_candidate_index() is None:
                raise InvariantViolation("Query", "gt-box-among-candidates", self.id)

    def gt_candidate_index(self) -> int | None:
        if self.gt_box is None or self.candidate_boxes is None:
            return None
        for i, c in enumerate(self.candidate_boxes):
            if c.same_as(self.gt_box):
                return i
        return None


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _read_json(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedFile(path, e.pos, e.msg) from None


def _load_pose_file(path: Path) -> Pose:
    text = path.read_text()
    tokens = list(re.finditer(r"\S+", text))
    values = []
    for m in tokens[:16]:
        try:
            values.append(float(m.group()))
        except ValueError:
            raise MalformedFile(path, m.start(), f"expected number, got {m.group()!r}") from None
    if len(values) < 16:
        raise MalformedFile(path, len(text.encode()), f"expected 16 numbers, found {len(values)}")
    if len(tokens) > 16:
        raise MalformedFile(path, tokens[16].start(), "trailing data after 4x4 matrix")
    return Pose.from_matrix(np.array(values).reshape(4, 4))


def _load_depth_png(path: Path) -> DepthMap:
    try:
        img = Image.open(path)
        img.load()
    except Exception as e:
        raise MalformedFile(path, 0, f"unreadable PNG: {e}") from None
    if img.mode not in ("I;16", "I;16B", "I"):
        raise MalformedFile(path, 0, f"expected 16-bit grayscale PNG, got mode {img.mode!r}")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise MalformedFile(path, 0, "expected single-channel depth")
    return DepthMap.from_millimeters(arr.astype(np.uint32))


def load_scene(scene_dir, mode: str = "full") -> Scene:
    """Load and validate a scene directory.

    ``mode`` declares which per-frame assets are mandatory: ``full`` requires
    pose and depth for every frame, ``posed_only`` requires pose, and
    ``images_only`` requires neither (they may later be supplied by
    reconstruction ingestion).
    """
    if mode not in LOAD_MODES:
        raise InvariantViolation("Scene", "load-mode", mode)
    scene_dir = Path(scene_dir)
    manifest_path = scene_dir / "scene.json"
    if not manifest_path.is_file():
        raise MissingAsset("<scene>", "scene.json")
    manifest = _read_json(manifest_path)
    if not isinstance(manifest, dict):
        raise MalformedFile(manifest_path, 0, "manifest must be a JSON object")
    for key in ("id", "embedding_dim", "frames"):
        if key not in manifest:
            raise MalformedFile(manifest_path, 0, f"manifest missing {key!r}")
    if not isinstance(manifest["embedding_dim"], int) or manifest["embedding_dim"] < 1:
        raise InvariantViolation("Scene", "positive-embedding-dim")

    frames = []
    for rec in manifest["frames"]:
        if not isinstance(rec, dict) or "id" not in rec or "intrinsics" not in rec:
            raise MalformedFile(manifest_path, 0, "frame record needs id and intrinsics")
        fid = str(rec["id"])
        try:
            intr = Intrinsics(**{k: rec["intrinsics"][k]
                                 for k in ("fx", "fy", "cx", "cy", "width", "height")})
        except KeyError as e:
            raise MalformedFile(manifest_path, 0, f"frame {fid}: intrinsics missing {e}") from None

        pose = depth = None
        pose_rel = rec.get("pose")
        if pose_rel:
            pose_path = scene_dir / pose_rel
            if not pose_path.is_file():
                raise MissingAsset(fid, "pose")
            pose = _load_pose_file(pose_path)
        elif mode in ("full", "posed_only"):
            raise MissingAsset(fid, "pose")

        depth_rel = rec.get("depth")
        if depth_rel:
            depth_path = scene_dir / depth_rel
            if not depth_path.is_file():
                raise MissingAsset(fid, "depth")
            depth = _load_depth_png(depth_path)
        elif mode == "full":
            raise MissingAsset(fid, "depth")

        image_rel = rec.get("image")
        image_path = str(scene_dir / image_rel) if image_rel else None
        frames.append(Frame(id=fid, intrinsics=intr, pose=pose, depth=depth,
                            image_path=image_path,
                            source=rec.get("source", "captured")))

    point_cloud = None
    pc_rel = manifest.get("point_cloud")
    if pc_rel:
        pc_path = scene_dir / pc_rel
        if not pc_path.is_file():
            raise MissingAsset("<scene>", "point_cloud")
        point_cloud = read_ply_points(pc_path)

    return Scene(id=str(manifest["id"]), frames=tuple(frames),
                 embedding_dim=manifest["embedding_dim"], point_cloud=point_cloud)


def load_mask_file(path, frame_id: str, source: str = "fixture") -> Mask2D:
    """Load one {width, height, runs} mask JSON."""
    path = Path(path)
    data = _read_json(path)
    if not isinstance(data, dict) or not all(k in data for k in ("width", "height", "runs")):
        raise MalformedFile(path, 0, "mask needs width, height, runs")
    return Mask2D(frame_id=frame_id, width=data["width"], height=data["height"],
                  runs=tuple(data["runs"]), source=source)


def load_frame_masks(scene_dir, frame_id: str) -> list[Mask2D]:
    """Load all instance masks for one frame, ordered by instance file name."""
    mask_dir = Path(scene_dir) / "masks" / frame_id
    if not mask_dir.is_dir():
        return []
    return [load_mask_file(p, frame_id) for p in sorted(mask_dir.glob("*.json"))]


def load_all_masks(scene_dir, scene: Scene) -> list[Mask2D]:
    """Load fixture masks for every frame, in manifest frame order."""
    out = []
    for frame in scene.frames:
        out.extend(load_frame_masks(scene_dir, frame.id))
    return out


def save_mask_file(path, mask: Mask2D) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(
        {"width": mask.width, "height": mask.height, "runs": list(mask.runs)}))


# ---------------------------------------------------------------------------
# scene writers (the exact formats load_scene reads back)
# ---------------------------------------------------------------------------

def save_pose_file(path, pose: Pose) -> None:
    """Write a 4x4 row-major camera-to-world matrix as whitespace text."""
    rows = pose.matrix()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        "\n".join(" ".join(f"{v:.17g}" for v in row) for row in rows) + "\n")


def save_depth_png(path, depth_m: np.ndarray) -> None:
    """Write depth in meters as a 16-bit millimeter PNG (0 = no reading)."""
    mm = np.round(np.asarray(depth_m, dtype=np.float64) * 1000.0)
    if mm.min() < 0 or mm.max() > 65535:
        raise InvariantViolation("DepthMap", "millimeter-range",
                                 f"[{mm.min()}, {mm.max()}]")
    img = Image.fromarray(mm.astype(np.uint16))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def save_scene_manifest(scene_dir, scene_id: str, frame_records: list[dict],
                        embedding_dim: int, point_cloud_rel: str | None = None) -> None:
    """Write scene.json. ``frame_records`` already carry relative asset paths."""
    manifest: dict = {"id": scene_id, "embedding_dim": embedding_dim,
                      "frames": frame_records}
    if point_cloud_rel:
        manifest["point_cloud"] = point_cloud_rel
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    (scene_dir / "scene.json").write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def write_embeddings(path, dim: int, records) -> None:
    """Write (id, vector) records in the binary embedding format."""
    with open(path, "wb") as fh:
        records = list(records)
        fh.write(EMBEDDINGS_MAGIC)
        fh.write(struct.pack("<II", dim, len(records)))
        for rec_id, vec in records:
            raw = rec_id.encode("utf-8")
            vec = np.asarray(vec, dtype="<f4").reshape(-1)
            if vec.shape[0] != dim:
                raise DimensionMismatch(f"record {rec_id!r}: dim {vec.shape[0]} != {dim}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.tobytes())


def _normalize_embedding(rec_id: str, vec: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise InvariantViolation("embedding", "finite", rec_id)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-8:
        raise DegenerateVector(f"record {rec_id!r} has norm {norm}")
    if abs(norm - 1.0) > 0.05:
        raise InvariantViolation("embedding", "unit-norm-within-5pct",
                                 f"{rec_id!r} has norm {norm:.4f}")
    return vec / norm


def load_embeddings(path, scene: Scene, query_ids=()) -> tuple[Scene, dict[str, np.ndarray]]:
    """Attach embedding vectors from a binary file to a scene's frames.

    Record ids must name frames of the scene or appear in ``query_ids``;
    anything else is an UnknownFrameId. Vectors are renormalized to unit
    length when their norm is within 5% of 1. Returns the new scene plus a
    mapping of query-id records.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != EMBEDDINGS_MAGIC:
        raise MalformedFile(path, 0, "bad magic, expected EMB1")
    if len(raw) < 12:
        raise MalformedFile(path, len(raw), "truncated header")
    dim, count = struct.unpack_from("<II", raw, 4)
    if dim != scene.embedding_dim:
        raise DimensionMismatch(
            f"file dim {dim} != scene embedding_dim {scene.embedding_dim}")
    query_ids = set(query_ids)

    offset = 12
    frame_vecs: dict[str, np.ndarray] = {}
    query_vecs: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(raw):
            raise MalformedFile(path, offset, "truncated record header")
        (id_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + id_len + 4 * dim > len(raw):
            raise MalformedFile(path, offset, "truncated record")
        rec_id = raw[offset:offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += 4 * dim
        vec = _normalize_embedding(rec_id, vec)
        if scene.has_frame(rec_id):
            if rec_id in frame_vecs:
                raise MalformedFile(path, offset, f"duplicate record {rec_id!r}")
            frame_vecs[rec_id] = vec
        elif rec_id in query_ids:
            if rec_id in query_vecs:
                raise MalformedFile(path, offset, f"duplicate record {rec_id!r}")
            query_vecs[rec_id] = vec
        else:
            raise UnknownFrameId(f"embedding record {rec_id!r} matches no frame or query")
    if offset != len(raw):
        raise MalformedFile(path, offset, "trailing bytes after last record")

    frames = tuple(
        dataclasses.replace(f, embedding=frame_vecs[f.id]) if f.id in frame_vecs else f
        for f in scene.frames)
    new_scene = Scene(id=scene.id, frames=frames, embedding_dim=scene.embedding_dim,
                      point_cloud=scene.point_cloud)
    return new_scene, query_vecs


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

def _query_from_record(rec: dict, path: Path) -> Query:
    for key in ("id", "scene_id", "text"):
        if key not in rec:
            raise MalformedFile(path, 0, f"query record missing {key!r}")
    gt = Box3.from_list(rec["gt_box"]) if rec.get("gt_box") is not None else None
    cands = rec.get("candidate_boxes")
    boxes = tuple(Box3.from_list(b) for b in cands) if cands is not None else None
    return Query(id=str(rec["id"]), scene_id=str(rec["scene_id"]), text=str(rec["text"]),
                 gt_box=gt, uniqueness=rec.get("uniqueness"), candidate_boxes=boxes)


def load_queries(path) -> list[Query]:
    path = Path(path)
    data = _read_json(path)
    if not isinstance(data, list):
        raise MalformedFile(path, 0, "queries file must be a JSON list")
    return [_query_from_record(rec, path) for rec in data]


def save_queries(path, queries) -> None:
    records = []
    for q in queries:
        rec = {"id": q.id, "scene_id": q.scene_id, "text": q.text}
        if q.gt_box is not None:
            rec["gt_box"] = q.gt_box.to_list()
        if q.uniqueness is not None:
            rec["uniqueness"] = q.uniqueness
        if q.candidate_boxes is not None:
            rec["candidate_boxes"] = [b.to_list() for b in q.candidate_boxes]
        records.append(rec)
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


# ---------------------------------------------------------------------------
# fingerprinting (determinism checks)
# ---------------------------------------------------------------------------

def scene_fingerprint(scene: Scene) -> str:
    """SHA-256 over a canonical serialization of everything a Scene holds."""
    h = hashlib.sha256()

    def put(tag: str, data: bytes):
        h.update(tag.encode())
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)

    put("id", scene.id.encode())
    put("dim", str(scene.embedding_dim).encode())
    for f in scene.frames:
        put("frame", f.id.encode())
        intr = f.intrinsics
        put("intr", repr((intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height)).encode())
        put("pose", f.pose.matrix().tobytes() if f.pose else b"")
        put("depth", f.depth.values.tobytes() if f.depth else b"")
        put("emb", f.embedding.tobytes() if f.embedding is not None else b"")
        put("img", (f.image_path or "").encode())
        put("src", f.source.encode())
    put("pc", scene.point_cloud.tobytes() if scene.point_cloud is not None else b"")
    return h.hexdigest()
