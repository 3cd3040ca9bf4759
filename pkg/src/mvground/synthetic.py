"""Procedural room scenes with exact ground truth.

Generates complete scene directories the pipeline can run end to end: box
objects on a floor, ray-cast depth maps, visibility-aware instance masks,
one-hot embeddings that make each object's cameras its nearest frames, and
oracle fixture files answering every view-selection and segmentation
request. A perturbed variant dilates the masks and adds multiplicative
depth noise while keeping the ground truth fixed.

Everything is driven by one seed; identical inputs produce byte-identical
scene directories. Also runnable as ``python -m mvground.synthetic``.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .oracle import OracleResponse, write_fixture_response
from .scene import (Box3, Intrinsics, Mask2D, Pose, Query, save_depth_png,
                    save_mask_file, save_pose_file, save_queries,
                    save_scene_manifest, write_embeddings)

OBJECT_CLASSES = ("crate", "bin", "stool", "planter", "cart", "lamp")

IMG_W, IMG_H = 128, 96
INTRINSICS = Intrinsics(fx=110.0, fy=110.0, cx=63.5, cy=47.5,
                        width=IMG_W, height=IMG_H)

FLOOR_HALF = 3.5
MIN_VISIBLE_PIXELS = 60


@dataclass(frozen=True)
class CameraSpec:
    id: str
    pose: Pose
    focus: int | None  # object index this camera is aimed at, None = overview


@dataclass(frozen=True)
class SceneSpec:
    id: str
    boxes: tuple[Box3, ...]
    classes: tuple[str, ...]
    cameras: tuple[CameraSpec, ...]

    @property
    def floor(self) -> Box3:
        return Box3(np.array([-FLOOR_HALF, -FLOOR_HALF, -0.05]),
                    np.array([FLOOR_HALF, FLOOR_HALF, 0.0]))


def look_at_pose(eye, target) -> Pose:
    """Camera-to-world pose looking from eye to target, image y pointing down."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-6:
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    return Pose(np.stack([right, down, fwd], axis=1), eye)


def render_frame(spec: SceneSpec, cam: CameraSpec) -> tuple[np.ndarray, np.ndarray]:
    """Ray-cast depth and instance id per pixel.

    Returns (depth meters float64 (H,W), inst int32 (H,W)); inst holds the
    object index, len(boxes) for the floor, -1 for no hit (depth 0 there).
    """
    uu, vv = np.meshgrid(np.arange(IMG_W, dtype=np.float64),
                         np.arange(IMG_H, dtype=np.float64))
    dirs_cam = np.stack([(uu - INTRINSICS.cx) / INTRINSICS.fx,
                         (vv - INTRINSICS.cy) / INTRINSICS.fy,
                         np.ones_like(uu)], axis=-1)
    # cam-frame z component stays 1, so the ray parameter equals z-depth
    dirs = dirs_cam @ cam.pose.rotation.T
    origin = cam.pose.translation

    t_best = np.full((IMG_H, IMG_W), np.inf)
    inst = np.full((IMG_H, IMG_W), -1, dtype=np.int32)
    for idx, box in enumerate(list(spec.boxes) + [spec.floor]):
        par = np.abs(dirs) < 1e-12
        safe = np.where(par, 1.0, dirs)
        t1 = (box.min_corner - origin) / safe
        t2 = (box.max_corner - origin) / safe
        tn_axis = np.minimum(t1, t2)
        tf_axis = np.maximum(t1, t2)
        inside = (origin >= box.min_corner) & (origin <= box.max_corner)
        tn_axis = np.where(par, np.where(inside, -np.inf, np.inf), tn_axis)
        tf_axis = np.where(par, np.where(inside, np.inf, -np.inf), tf_axis)
        tn = tn_axis.max(axis=-1)
        tf = tf_axis.min(axis=-1)
        t = np.where(tn > 0, tn, tf)
        t = np.where((tn <= tf) & (tf > 0), t, np.inf)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        inst[closer] = idx

    depth = np.where(inst >= 0, t_best, 0.0)
    return depth, inst


def _segment_hits_box(eye, target, box: Box3) -> bool:
    d = np.asarray(target, dtype=np.float64) - eye
    par = np.abs(d) < 1e-12
    safe = np.where(par, 1.0, d)
    t1 = (box.min_corner - eye) / safe
    t2 = (box.max_corner - eye) / safe
    tn_axis = np.minimum(t1, t2)
    tf_axis = np.maximum(t1, t2)
    inside = (eye >= box.min_corner) & (eye <= box.max_corner)
    tn_axis = np.where(par, np.where(inside, -np.inf, np.inf), tn_axis)
    tf_axis = np.where(par, np.where(inside, np.inf, -np.inf), tf_axis)
    tn, tf = tn_axis.max(), tf_axis.min()
    return tn <= tf and tf > 0 and tn < 1.0


def _sample_boxes(rng: np.random.Generator, n: int) -> list[Box3]:
    boxes: list[Box3] = []
    while len(boxes) < n:
        hx, hy = rng.uniform(0.18, 0.45, size=2)
        hz = rng.uniform(0.35, 0.9)
        cx, cy = rng.uniform(-2.1, 2.1, size=2)
        cand = Box3(np.array([cx - hx, cy - hy, 0.0]),
                    np.array([cx + hx, cy + hy, hz]))
        # keep a clear corridor between objects so cameras can see them
        ok = all(np.max(np.maximum(b.min_corner[:2] - cand.max_corner[:2],
                                   cand.min_corner[:2] - b.max_corner[:2])) > 0.45
                 for b in boxes)
        if ok:
            boxes.append(cand)
    return boxes


def _aim_cameras(rng: np.random.Generator, boxes: list[Box3],
                 target_idx: int) -> list[Pose]:
    """Three poses ringed around one object, each with a clear line of sight."""
    box = boxes[target_idx]
    center = (box.min_corner + box.max_corner) / 2.0
    base = rng.uniform(0.0, 2.0 * np.pi)
    poses = []
    for j in range(3):
        angle = base + j * (2.0 * np.pi / 3.0)
        for attempt in range(12):
            a = angle + attempt * 0.45
            radius = 1.7 + 0.25 * (attempt % 3)
            eye = center + np.array([radius * np.cos(a), radius * np.sin(a), 0.0])
            eye[2] = box.max_corner[2] + rng.uniform(0.8, 1.2)
            blocked = any(i != target_idx and _segment_hits_box(eye, center, b)
                          for i, b in enumerate(boxes))
            if not blocked:
                break
        poses.append(look_at_pose(eye, center))
    return poses


def build_scene_spec(scene_id: str, rng: np.random.Generator,
                     n_objects: int | None = None) -> SceneSpec:
    n = int(rng.integers(3, 7)) if n_objects is None else n_objects
    boxes = _sample_boxes(rng, n)
    classes = tuple(str(rng.choice(OBJECT_CLASSES)) for _ in range(n))

    cameras: list[CameraSpec] = []
    for i in range(n):
        for j, pose in enumerate(_aim_cameras(rng, boxes, i)):
            cameras.append(CameraSpec(id=f"cam{len(cameras):03d}", pose=pose,
                                      focus=i))
    for corner in ((-2.8, -2.8), (2.8, 2.8)):
        eye = np.array([corner[0], corner[1], 2.6])
        cameras.append(CameraSpec(id=f"cam{len(cameras):03d}",
                                  pose=look_at_pose(eye, np.zeros(3)), focus=None))
    return SceneSpec(id=scene_id, boxes=tuple(boxes), classes=classes,
                     cameras=tuple(cameras))


def _dilate(dense: np.ndarray, radius: int) -> np.ndarray:
    out = dense.copy()
    for _ in range(radius):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


def perturb_mask(dense: np.ndarray, frac: float = 0.10) -> np.ndarray:
    """Grow a mask's linear size by roughly ``frac`` via morphological dilation."""
    area = int(dense.sum())
    if area == 0 or frac <= 0:
        return dense
    radius = max(1, int(round(0.5 * frac * np.sqrt(area))))
    return _dilate(dense, radius)


def perturb_depth(depth: np.ndarray, rng: np.random.Generator,
                  rel_sigma: float = 0.05) -> np.ndarray:
    """Multiplicative gaussian noise on valid readings only."""
    noise = 1.0 + rel_sigma * rng.standard_normal(depth.shape)
    out = np.where(depth > 0, np.clip(depth * noise, 0.001, 60.0), 0.0)
    return out


def _class_label(classes: tuple[str, ...], idx: int) -> str:
    return "unique" if classes.count(classes[idx]) == 1 else "multiple"


def write_scene(out_dir, spec: SceneSpec, seed: int, perturb: bool = False) -> Path:
    """Materialize a scene directory plus oracle fixtures under fixtures/."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)

    n = len(spec.boxes)
    dim = n + 1
    depth_by_frame: dict[str, np.ndarray] = {}
    inst_by_frame: dict[str, np.ndarray] = {}
    for cam in spec.cameras:
        depth, inst = render_frame(spec, cam)
        if perturb:
            depth = perturb_depth(depth, rng)
        depth_by_frame[cam.id] = np.round(depth * 1000.0) / 1000.0
        inst_by_frame[cam.id] = inst

    frame_records = []
    emb_records = []
    for cam in spec.cameras:
        save_pose_file(out_dir / "poses" / f"{cam.id}.txt", cam.pose)
        save_depth_png(out_dir / "depth" / f"{cam.id}.png", depth_by_frame[cam.id])
        frame_records.append({
            "id": cam.id,
            "intrinsics": {"fx": INTRINSICS.fx, "fy": INTRINSICS.fy,
                           "cx": INTRINSICS.cx, "cy": INTRINSICS.cy,
                           "width": INTRINSICS.width, "height": INTRINSICS.height},
            "pose": f"poses/{cam.id}.txt",
            "depth": f"depth/{cam.id}.png",
            "source": "captured",
        })
        vec = np.zeros(dim)
        vec[cam.focus if cam.focus is not None else n] = 1.0
        emb_records.append((cam.id, vec))

    masks: dict[tuple[str, int], Mask2D] = {}
    for cam in spec.cameras:
        for i in range(n):
            dense = inst_by_frame[cam.id] == i
            if perturb and dense.any():
                dense = perturb_mask(dense)
            masks[(cam.id, i)] = Mask2D.from_dense(cam.id, dense)

    for (frame_id, i), mask in masks.items():
        if mask.foreground_count >= MIN_VISIBLE_PIXELS:
            save_mask_file(out_dir / "masks" / frame_id / f"obj{i:03d}.json", mask)

    queries = []
    seen: dict[str, int] = {}
    for i in range(n):
        cls = spec.classes[i]
        seen[cls] = seen.get(cls, 0) + 1
        queries.append(Query(
            id=f"{spec.id}-q{i:02d}",
            scene_id=spec.id,
            text=f"the {cls} number {seen[cls]}",
            gt_box=spec.boxes[i],
            uniqueness=_class_label(spec.classes, i),
            candidate_boxes=spec.boxes,
        ))
        emb_records.append((queries[-1].id, np.eye(dim)[i]))
    save_queries(out_dir / "queries.json", queries)

    save_scene_manifest(out_dir, spec.id, frame_records, dim)
    write_embeddings(out_dir / "embeddings.bin", dim, emb_records)

    fixtures = out_dir / "fixtures"
    aimed = {i: [c.id for c in spec.cameras if c.focus == i] for i in range(n)}
    for i, query in enumerate(queries):
        write_fixture_response(fixtures, OracleResponse(
            id=f"{query.id}.select_views",
            kind="select_views",
            frames=tuple((fid, round(1.0 - 0.1 * r, 3))
                         for r, fid in enumerate(aimed[i])),
        ))
        for cam in spec.cameras:
            mask = masks[(cam.id, i)]
            write_fixture_response(fixtures, OracleResponse(
                id=f"{query.id}.segment.{cam.id}",
                kind="segment",
                mask={"width": mask.width, "height": mask.height,
                      "runs": list(mask.runs)},
            ))
    return out_dir


def generate_scene(out_dir, seed: int, n_objects: int | None = None,
                   perturb: bool = False) -> Path:
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    spec = build_scene_spec(out_dir.name, rng, n_objects)
    for cam in spec.cameras:
        if cam.focus is None:
            continue
        _, inst = render_frame(spec, cam)
        if int((inst == cam.focus).sum()) < MIN_VISIBLE_PIXELS:
            # rebuild with a shifted seed rather than ship a blind camera
            return generate_scene(out_dir, seed + 7919, n_objects, perturb)
    return write_scene(out_dir, spec, seed, perturb)


def generate_suite(root, n_scenes: int = 20, seed: int = 0,
                   perturb: bool = False) -> list[Path]:
    root = Path(root)
    dirs = []
    for i in range(n_scenes):
        dirs.append(generate_scene(root / f"scene{i:03d}", seed * 100003 + i,
                                   perturb=perturb))
    return dirs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        description="generate synthetic grounding scenes with oracle fixtures")
    ap.add_argument("out", help="output root directory")
    ap.add_argument("--scenes", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--objects", type=int, default=None,
                    help="fix the object count instead of sampling 3-6")
    ap.add_argument("--perturb", action="store_true",
                    help="dilate masks and add depth noise")
    args = ap.parse_args(argv)
    if args.scenes == 1:
        d = generate_scene(Path(args.out), args.seed, args.objects, args.perturb)
        print(d)
    else:
        for d in generate_suite(args.out, args.scenes, args.seed, args.perturb):
            print(d)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
