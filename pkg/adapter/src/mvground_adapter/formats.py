"""Writers for the grounding pipeline's on-disk formats.

The pipeline consumes plain files: a scene manifest, 16-bit millimeter
depth PNGs, whitespace-separated 4x4 pose matrices, a binary embedding
container, and run-length masks on the oracle wire. Those formats are
the adapter's entire contract, so they are written here directly rather
than through the pipeline's own code.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import AdapterError

EMBEDDINGS_MAGIC = b"EMB1"


def write_embedding_file(path, dim: int, records) -> None:
    """Write (id, vector) records: magic, u32 dim, u32 count, then
    u16 id length + utf-8 id + dim little-endian float32 per record."""
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(EMBEDDINGS_MAGIC)
        fh.write(struct.pack("<II", dim, len(records)))
        for rec_id, vec in records:
            raw = rec_id.encode("utf-8")
            vec = np.asarray(vec, dtype="<f4").reshape(-1)
            if vec.shape[0] != dim:
                raise AdapterError(f"record {rec_id!r}: dim {vec.shape[0]} != {dim}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.tobytes())


def write_depth_png(path, depth_m: np.ndarray) -> None:
    """Depth in meters -> 16-bit grayscale PNG holding millimeters."""
    mm = np.round(np.asarray(depth_m, dtype=np.float64) * 1000.0)
    if mm.min() < 0 or mm.max() > 65535:
        raise AdapterError(f"depth outside the millimeter range: [{mm.min()}, {mm.max()}]")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


def write_pose_text(path, matrix: np.ndarray) -> None:
    """Camera-to-world transform as 16 whitespace-separated numbers."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise AdapterError(f"pose must be 4x4, got {m.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [" ".join(f"{v:.17g}" for v in row) for row in m]
    path.write_text("\n".join(rows) + "\n")


def write_scene_manifest(scene_dir, scene_id: str, embedding_dim: int,
                         frame_records: list[dict]) -> None:
    """scene.json with per-frame intrinsics and relative asset paths."""
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"id": scene_id, "embedding_dim": embedding_dim, "frames": frame_records}
    (scene_dir / "scene.json").write_text(json.dumps(manifest, indent=2) + "\n")


def read_scene_manifest(scene_dir) -> dict:
    """Load scene.json and check the keys this package relies on."""
    path = Path(scene_dir) / "scene.json"
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise AdapterError(f"no scene manifest at {path}") from None
    except json.JSONDecodeError as e:
        raise AdapterError(f"scene manifest is not valid JSON: {path}: {e.msg}") from None
    if not isinstance(data, dict) or not isinstance(data.get("frames"), list):
        raise AdapterError(f"scene manifest needs a frames list: {path}")
    if not isinstance(data.get("embedding_dim"), int) or data["embedding_dim"] < 1:
        raise AdapterError(f"scene manifest needs a positive embedding_dim: {path}")
    for rec in data["frames"]:
        if not isinstance(rec, dict) or "id" not in rec or "intrinsics" not in rec:
            raise AdapterError(f"frame record needs id and intrinsics: {path}")
    return data


def rle_runs(dense: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating background/foreground, background
    first (a leading 0 when pixel (0, 0) is set); runs sum to width*height."""
    flat = np.asarray(dense, dtype=bool).reshape(-1)
    if flat.size == 0:
        raise AdapterError("cannot run-length encode an empty mask")
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(starts).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs
