"""Frame and query embedding export.

Dry-run vectors are seeded from a hash of the input bytes, so identical
images (or identical query text) always produce identical unit vectors
and reruns are byte-stable. Live mode posts each image to the encoder
endpoint and expects ``{"vector": [...]}`` back.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .backends import RateLimiter, post_json
from .config import AdapterConfig, validate_backends
from .errors import AdapterError, BackendError
from .formats import read_scene_manifest, write_embedding_file


def seeded_unit_vector(tag: bytes, dim: int) -> np.ndarray:
    """Deterministic unit vector: hash -> rng seed -> normalized gaussian."""
    seed = int.from_bytes(hashlib.sha256(tag).digest()[:8], "little")
    vec = np.random.default_rng(seed).standard_normal(dim)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-8:
        # measure-zero fallback, mostly a dim=1 safeguard
        vec = np.ones(dim)
        norm = float(np.linalg.norm(vec))
    return vec / norm


def _encode_live(cfg: AdapterConfig, limiter: RateLimiter, blob: bytes,
                 dim: int, what: str) -> np.ndarray:
    limiter.wait()
    payload = {"input": base64.b64encode(blob).decode("ascii"), "dim": dim}
    data = post_json(cfg.encoder, payload, cfg.timeout_s)
    vec = np.asarray(data.get("vector", ()), dtype=np.float64).reshape(-1)
    if vec.shape[0] != dim:
        raise BackendError(f"encoder returned {vec.shape[0]} values for {what}, need {dim}")
    norm = float(np.linalg.norm(vec))
    if norm < 1e-8:
        raise BackendError(f"encoder returned a zero vector for {what}")
    return vec / norm


def _load_queries(path: Path) -> list[dict]:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise AdapterError(f"queries file is not valid JSON: {path}: {e.msg}") from None
    if not isinstance(data, list):
        raise AdapterError(f"queries file must be a JSON list: {path}")
    for rec in data:
        if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
            raise AdapterError(f"query records need id and text: {path}")
    return data


def export_embeddings(scene_dir, out_file, cfg: AdapterConfig | None = None,
                      queries_path=None) -> int:
    """Embed every frame image plus every query text into one binary file.

    The vector dimension comes from the scene manifest. Returns the record
    count. Raises BackendError when a frame's image is missing or unreadable,
    naming the frame.
    """
    scene_dir = Path(scene_dir)
    cfg = cfg or AdapterConfig()
    if cfg.mode == "live":
        if cfg.encoder is None:
            raise BackendError("live embedding export needs an encoder endpoint")
        validate_backends(cfg)
    limiter = RateLimiter(cfg.rate_limit_per_s)

    manifest = read_scene_manifest(scene_dir)
    dim = manifest["embedding_dim"]
    records: list[tuple[str, np.ndarray]] = []
    for rec in manifest["frames"]:
        fid = str(rec["id"])
        rel = rec.get("image")
        if not rel:
            raise BackendError(f"frame {fid!r} has no image to encode")
        try:
            blob = (scene_dir / rel).read_bytes()
        except OSError as e:
            raise BackendError(f"frame {fid!r}: cannot read image {rel!r}: {e}") from None
        if cfg.mode == "live":
            vec = _encode_live(cfg, limiter, blob, dim, f"frame {fid!r}")
        else:
            vec = seeded_unit_vector(b"image\x00" + blob, dim)
        records.append((fid, vec))

    qpath = Path(queries_path) if queries_path else scene_dir / "queries.json"
    if qpath.is_file():
        for q in _load_queries(qpath):
            text = str(q["text"])
            if cfg.mode == "live":
                vec = _encode_live(cfg, limiter, text.encode("utf-8"), dim,
                                   f"query {q['id']!r}")
            else:
                vec = seeded_unit_vector(b"text\x00" + text.encode("utf-8"), dim)
            records.append((str(q["id"]), vec))

    ids = [rid for rid, _ in records]
    if len(set(ids)) != len(ids):
        dup = next(rid for rid in ids if ids.count(rid) > 1)
        raise AdapterError(f"duplicate record id {dup!r} across frames and queries")
    write_embedding_file(out_file, dim, records)
    return len(records)
