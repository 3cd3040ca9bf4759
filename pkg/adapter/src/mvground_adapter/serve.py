"""Line-oriented oracle server.

Speaks the grounding pipeline's pipe protocol: one JSON request per stdin
line, one JSON response per stdout line, answered strictly in arrival
order (one in-flight request per session). A request that cannot be
parsed or dispatched gets an error record carrying the original id, so
the caller can always correlate.

Dry-run mode answers from the request alone: view rankings echo the
candidate order with linearly decaying scores, and segmentation grows a
deterministic window from a hash of the query and frame, refined over a
configured number of rounds. Live mode forwards to the reasoner and
segmenter endpoints; a backend failure ends the session with a nonzero
exit so the caller's transport reports the oracle as unavailable.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .backends import RateLimiter, post_json
from .config import AdapterConfig, validate_backends
from .errors import AdapterError, BackendError
from .formats import read_scene_manifest, rle_runs

REQUEST_KINDS = ("select_views", "segment", "relevance")


def _frame_dims(scene_dir) -> dict[str, tuple[int, int]]:
    manifest = read_scene_manifest(scene_dir)
    dims = {}
    for rec in manifest["frames"]:
        intr = rec["intrinsics"]
        try:
            dims[str(rec["id"])] = (int(intr["width"]), int(intr["height"]))
        except (KeyError, TypeError, ValueError):
            raise AdapterError(f"frame {rec.get('id')!r} has malformed intrinsics") from None
    return dims


def _image_dims(path: str) -> tuple[int, int]:
    from PIL import Image
    try:
        with Image.open(path) as img:
            return img.size
    except Exception as e:
        raise AdapterError(f"cannot read image {path!r} for mask dims: {e}") from None


def _checked_request(rec) -> dict:
    if not isinstance(rec, dict):
        raise AdapterError("request must be a JSON object")
    for key in ("id", "kind", "query_text", "frame_ids"):
        if key not in rec:
            raise AdapterError(f"request missing {key!r}")
    if rec["kind"] not in REQUEST_KINDS:
        raise AdapterError(f"unknown request kind {rec['kind']!r}")
    if not isinstance(rec["frame_ids"], list) or not all(
            isinstance(f, str) for f in rec["frame_ids"]):
        raise AdapterError("frame_ids must be a list of strings")
    return rec


def _ranked_frames(frame_ids: list[str]) -> list[dict]:
    n = len(frame_ids)
    return [{"frame_id": fid, "score": (n - i) / n}
            for i, fid in enumerate(frame_ids)]


def _refine_window(w: int, h: int, seed_tag: bytes, rounds: int):
    """Start from the full frame and close in on a hashed target window."""
    seed = int.from_bytes(hashlib.sha256(seed_tag).digest()[:8], "little")
    rng = np.random.default_rng(seed)
    tw = max(1, int(w * (0.2 + 0.3 * float(rng.random()))))
    th = max(1, int(h * (0.2 + 0.3 * float(rng.random()))))
    tx = int(rng.integers(0, w - tw + 1))
    ty = int(rng.integers(0, h - th + 1))
    x0, y0, x1, y1 = 0, 0, w, h
    for _ in range(rounds):
        x0 = (x0 + tx + 1) // 2
        y0 = (y0 + ty + 1) // 2
        x1 = (x1 + tx + tw) // 2
        y1 = (y1 + ty + th) // 2
    return x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)


class DryRunResponder:
    """Answers every request deterministically with no model backend."""

    def __init__(self, cfg: AdapterConfig, scene_dir=None):
        self.cfg = cfg
        self.dims = _frame_dims(scene_dir) if scene_dir else {}

    def _mask_dims(self, rec: dict) -> tuple[int, int]:
        fid = rec["frame_ids"][0]
        if fid in self.dims:
            return self.dims[fid]
        paths = rec.get("image_paths") or ()
        if paths:
            return _image_dims(paths[0])
        raise AdapterError(
            f"cannot size a mask for frame {fid!r}: not in the scene manifest "
            "and the request carries no image path")

    def handle(self, rec: dict) -> dict:
        if rec["kind"] in ("select_views", "relevance"):
            return {"id": rec["id"], "kind": rec["kind"],
                    "frames": _ranked_frames(rec["frame_ids"])}
        if not rec["frame_ids"]:
            raise AdapterError("segment request names no frame")
        w, h = self._mask_dims(rec)
        tag = f"{rec['query_text']}\x00{rec['frame_ids'][0]}".encode("utf-8")
        x0, y0, x1, y1 = _refine_window(w, h, tag, self.cfg.segment_iterations)
        dense = np.zeros((h, w), dtype=bool)
        dense[y0:y1, x0:x1] = True
        return {"id": rec["id"], "kind": "segment",
                "mask": {"width": w, "height": h, "runs": rle_runs(dense)}}


class LiveResponder:
    """Forwards requests to the configured reasoner and segmenter."""

    def __init__(self, cfg: AdapterConfig, scene_dir=None):
        if cfg.reasoner is None or cfg.segmenter is None:
            raise BackendError("live serving needs reasoner and segmenter endpoints")
        validate_backends(cfg)
        self.cfg = cfg
        self.dims = _frame_dims(scene_dir) if scene_dir else {}
        self.limiter = RateLimiter(cfg.rate_limit_per_s)

    def _checked_mask(self, rec: dict, mask) -> dict:
        if not isinstance(mask, dict) or not all(
                k in mask for k in ("width", "height", "runs")):
            raise BackendError("segmenter response lacks a width/height/runs mask")
        fid = rec["frame_ids"][0]
        if fid in self.dims and (mask["width"], mask["height"]) != self.dims[fid]:
            raise BackendError(
                f"segmenter mask is {mask['width']}x{mask['height']}, frame "
                f"{fid!r} is {self.dims[fid][0]}x{self.dims[fid][1]}")
        return mask

    def handle(self, rec: dict) -> dict:
        prompts = self.cfg.prompts
        if rec["kind"] in ("select_views", "relevance"):
            self.limiter.wait()
            data = post_json(self.cfg.reasoner, {
                "prompt": prompts[rec["kind"]].format(query=rec["query_text"]),
                "frame_ids": rec["frame_ids"],
                "image_paths": rec.get("image_paths") or [],
            }, self.cfg.timeout_s)
            frames = data.get("frames")
            if not isinstance(frames, list):
                raise BackendError("reasoner response lacks a frames list")
            return {"id": rec["id"], "kind": rec["kind"], "frames": frames}

        # iterative prompt refinement, capped at the configured budget
        budget = self.cfg.segment_iterations
        mask, previous = None, None
        for round_no in range(1, budget + 1):
            self.limiter.wait()
            prompt_key = "segment" if round_no == 1 else "segment_refine"
            data = post_json(self.cfg.segmenter, {
                "prompt": prompts[prompt_key].format(
                    query=rec["query_text"], round=round_no, budget=budget),
                "frame_ids": rec["frame_ids"],
                "image_paths": rec.get("image_paths") or [],
                "previous_mask": previous,
            }, self.cfg.timeout_s)
            mask = self._checked_mask(rec, data.get("mask"))
            if previous is not None and previous.get("runs") == mask.get("runs"):
                break
            previous = mask
        return {"id": rec["id"], "kind": "segment", "mask": mask}


def _error_record(request_id, message: str) -> dict:
    return {"id": "" if request_id is None else str(request_id),
            "kind": "error", "error": message}


def serve_stdio(cfg: AdapterConfig, scene_dir=None, stdin=None, stdout=None) -> int:
    """Serve until stdin closes. Returns a process exit status."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    if cfg.mode == "live":
        responder = LiveResponder(cfg, scene_dir)
    else:
        responder = DryRunResponder(cfg, scene_dir)

    for line in stdin:
        if not line.strip():
            continue
        rid = None
        try:
            raw = json.loads(line)
            if isinstance(raw, dict):
                rid = raw.get("id")
            rec = _checked_request(raw)
            rid = rec["id"]
            out = responder.handle(rec)
        except json.JSONDecodeError as e:
            out = _error_record(rid, f"invalid JSON: {e.msg}")
        except BackendError:
            # dead backend: end the session so the caller's transport
            # reports the oracle as unavailable
            raise
        except AdapterError as e:
            out = _error_record(rid, str(e))
        stdout.write(json.dumps(out) + "\n")
        stdout.flush()
    return 0
