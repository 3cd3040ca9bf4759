"""Depth and pose export for images-only captures.

Produces a self-contained scene directory: copied images, a depth PNG and
a pose text file per frame, and a manifest whose frames are flagged
``source=estimated`` so downstream consumers know the geometry was
inferred rather than captured. Dry-run mode synthesizes a smooth analytic
depth field and an evenly spaced inward-facing camera ring, which is
enough to exercise every consumer of the format; live mode forwards the
capture to the reconstructor endpoint.
"""

from __future__ import annotations

import base64
import io
import math
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import RateLimiter, post_json
from .config import AdapterConfig, validate_backends
from .errors import BackendError
from .formats import write_depth_png, write_pose_text, write_scene_manifest

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MIN_IMAGES = 2

RING_RADIUS_M = 2.0
RING_HEIGHT_M = 1.2
BASE_DEPTH_M = 2.0
DEPTH_RELIEF_M = 0.6


def _list_images(images_dir: Path) -> list[Path]:
    return sorted(p for p in images_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera-to-world matrix with z forward and image y pointing down."""
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(fwd @ up)) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = right, down, fwd, eye
    return m


def _ring_pose(index: int, count: int) -> np.ndarray:
    angle = 2.0 * math.pi * index / count
    eye = np.array([RING_RADIUS_M * math.cos(angle),
                    RING_RADIUS_M * math.sin(angle),
                    RING_HEIGHT_M])
    return _look_at(eye, np.zeros(3))


def _analytic_depth(w: int, h: int) -> np.ndarray:
    """Smooth bowl-shaped field, deterministic in the pixel grid alone."""
    u = (np.arange(w) / max(w - 1, 1)) - 0.5
    v = (np.arange(h) / max(h - 1, 1)) - 0.5
    uu, vv = np.meshgrid(u, v)
    return BASE_DEPTH_M + DEPTH_RELIEF_M * (uu * uu + vv * vv)


def _frame_record(fid: str, w: int, h: int, focal_scale: float, ext: str) -> dict:
    focal = focal_scale * max(w, h)
    return {
        "id": fid,
        "intrinsics": {"fx": focal, "fy": focal,
                       "cx": (w - 1) / 2.0, "cy": (h - 1) / 2.0,
                       "width": w, "height": h},
        "pose": f"poses/{fid}.txt",
        "depth": f"depth/{fid}.png",
        "image": f"images/{fid}{ext}",
        "source": "estimated",
    }


def _estimate_live(cfg: AdapterConfig, images: list[Path]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per image: (4x4 pose, depth in meters) from the reconstructor."""
    validate_backends(cfg)
    limiter = RateLimiter(cfg.rate_limit_per_s)
    limiter.wait()
    payload = {"images": [base64.b64encode(p.read_bytes()).decode("ascii")
                          for p in images]}
    data = post_json(cfg.reconstructor, payload, cfg.timeout_s)
    poses, depths = data.get("poses"), data.get("depths_mm")
    if (not isinstance(poses, list) or not isinstance(depths, list)
            or len(poses) != len(images) or len(depths) != len(images)):
        raise BackendError("reconstructor must return one pose and one depth per image")
    out = []
    for pose_vals, depth_b64 in zip(poses, depths):
        pose = np.asarray(pose_vals, dtype=np.float64)
        if pose.size != 16:
            raise BackendError("reconstructor pose must hold 16 numbers")
        buf = base64.b64decode(depth_b64)
        with Image.open(io.BytesIO(buf)) as img:
            depth_m = np.asarray(img, dtype=np.float64) / 1000.0
        out.append((pose.reshape(4, 4), depth_m))
    return out


def export_reconstruction_inputs(images_dir, out_scene_dir,
                                 cfg: AdapterConfig | None = None) -> list[str]:
    """Build an estimated-geometry scene directory from a folder of images.

    Needs at least two images; raises BackendError otherwise. Returns the
    frame ids in manifest order.
    """
    images_dir = Path(images_dir)
    out_scene_dir = Path(out_scene_dir)
    cfg = cfg or AdapterConfig()
    if not images_dir.is_dir():
        raise BackendError(f"image directory not found: {images_dir}")
    images = _list_images(images_dir)
    if len(images) < MIN_IMAGES:
        raise BackendError(
            f"reconstruction needs at least {MIN_IMAGES} images, found {len(images)}")
    if cfg.mode == "live":
        if cfg.reconstructor is None:
            raise BackendError("live reconstruction needs a reconstructor endpoint")
        estimates = _estimate_live(cfg, images)

    frame_ids, records = [], []
    for i, src in enumerate(images):
        fid = src.stem
        try:
            with Image.open(src) as img:
                w, h = img.size
        except Exception as e:
            raise BackendError(f"cannot read image {src.name!r}: {e}") from None
        if cfg.mode == "live":
            pose, depth_m = estimates[i]
        else:
            pose, depth_m = _ring_pose(i, len(images)), _analytic_depth(w, h)
        write_pose_text(out_scene_dir / "poses" / f"{fid}.txt", pose)
        write_depth_png(out_scene_dir / "depth" / f"{fid}.png", depth_m)
        dst = out_scene_dir / "images" / f"{fid}{src.suffix.lower()}"
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dst)
        records.append(_frame_record(fid, w, h, cfg.focal_scale, src.suffix.lower()))
        frame_ids.append(fid)

    if len(set(frame_ids)) != len(frame_ids):
        raise BackendError("image stems collide; frame ids must be unique")
    write_scene_manifest(out_scene_dir, out_scene_dir.name, cfg.embedding_dim, records)
    return frame_ids
