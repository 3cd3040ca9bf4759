"""Oracle transport: request/response records over a child-process pipe or
a directory of fixture files.

Records are newline-delimited JSON. A request looks like::

    {"id": "...", "kind": "select_views", "query_text": "...",
     "frame_ids": [...], "image_paths": [...]}

and a response is either a ranked frame list or a mask::

    {"id": "...", "kind": "select_views", "frames": [{"frame_id": "...", "score": 0.9}]}
    {"id": "...", "kind": "segment", "mask": {"width": W, "height": H, "runs": [...]}}

Fixture mode matches responses by request id; any mismatch is a protocol
violation. One transport session processes one request at a time.
"""

from __future__ import annotations

import json
import re
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigInvalid, OracleUnavailable, ProtocolViolation

REQUEST_KINDS = ("select_views", "segment", "relevance")


@dataclass(frozen=True)
class OracleRequest:
    id: str
    kind: str
    query_text: str
    frame_ids: tuple[str, ...]
    image_paths: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in REQUEST_KINDS:
            raise ProtocolViolation(f"unknown request kind {self.kind!r}")
        object.__setattr__(self, "frame_ids", tuple(self.frame_ids))
        object.__setattr__(self, "image_paths", tuple(self.image_paths))

    def to_record(self) -> dict:
        return {"id": self.id, "kind": self.kind, "query_text": self.query_text,
                "frame_ids": list(self.frame_ids), "image_paths": list(self.image_paths)}


@dataclass(frozen=True)
class OracleResponse:
    id: str
    kind: str
    frames: tuple[tuple[str, float | None], ...] | None = None
    mask: dict | None = None

    def to_record(self) -> dict:
        rec = {"id": self.id, "kind": self.kind}
        if self.frames is not None:
            rec["frames"] = [
                {"frame_id": fid} if score is None else {"frame_id": fid, "score": score}
                for fid, score in self.frames]
        if self.mask is not None:
            rec["mask"] = self.mask
        return rec


def response_from_record(rec) -> OracleResponse:
    if not isinstance(rec, dict) or "id" not in rec or "kind" not in rec:
        raise ProtocolViolation(f"response record needs id and kind: {rec!r}")
    frames = None
    if "frames" in rec:
        if not isinstance(rec["frames"], list):
            raise ProtocolViolation("response frames must be a list")
        frames = []
        for item in rec["frames"]:
            if not isinstance(item, dict) or "frame_id" not in item:
                raise ProtocolViolation(f"malformed frame entry {item!r}")
            score = item.get("score")
            if score is not None and not isinstance(score, (int, float)):
                raise ProtocolViolation(f"non-numeric score {score!r}")
            frames.append((str(item["frame_id"]), None if score is None else float(score)))
        frames = tuple(frames)
    mask = rec.get("mask")
    if mask is not None and (not isinstance(mask, dict)
                             or not all(k in mask for k in ("width", "height", "runs"))):
        raise ProtocolViolation("response mask needs width, height, runs")
    return OracleResponse(id=str(rec["id"]), kind=str(rec["kind"]), frames=frames, mask=mask)


def validate_response(request: OracleRequest, response: OracleResponse) -> OracleResponse:
    """Enforce the protocol invariants; raises ProtocolViolation on any breach."""
    if response.id != request.id:
        raise ProtocolViolation(
            f"response id {response.id!r} does not match request id {request.id!r}")
    if response.kind != request.kind:
        raise ProtocolViolation(
            f"response kind {response.kind!r} does not match request kind {request.kind!r}")
    if request.kind in ("select_views", "relevance"):
        if response.frames is None:
            raise ProtocolViolation(f"{request.kind} response carries no frames")
        seen = set()
        for fid, score in response.frames:
            if fid not in request.frame_ids:
                raise ProtocolViolation(f"response frame {fid!r} not among request candidates")
            if fid in seen:
                raise ProtocolViolation(f"duplicate frame {fid!r} in response")
            seen.add(fid)
            if score is not None and not (0.0 <= score <= 1.0):
                raise ProtocolViolation(f"score {score} for frame {fid!r} outside [0, 1]")
    elif request.kind == "segment":
        if response.mask is None:
            raise ProtocolViolation("segment response carries no mask")
    return response


class Oracle:
    """Base transport. Subclasses implement _transact(request) -> OracleResponse."""

    def request(self, request: OracleRequest) -> OracleResponse:
        return validate_response(request, self._transact(request))

    def _transact(self, request: OracleRequest) -> OracleResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def fixture_name(request_id: str) -> str:
    """Filesystem-safe fixture file name for a request id."""
    return re.sub(r"[^A-Za-z0-9._-]", "_", request_id) + ".json"


class FixtureOracle(Oracle):
    """Replays canned responses from a directory, matched by request id."""

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)
        if not self.fixture_dir.is_dir():
            raise OracleUnavailable(f"fixture directory {self.fixture_dir} does not exist")

    def _transact(self, request: OracleRequest) -> OracleResponse:
        path = self.fixture_dir / fixture_name(request.id)
        if not path.is_file():
            raise ProtocolViolation(
                f"no fixture response for request {request.id!r} (expected {path.name})")
        try:
            rec = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ProtocolViolation(f"fixture {path.name}: invalid JSON ({e.msg})") from None
        return response_from_record(rec)


def write_fixture_response(fixture_dir, response: OracleResponse) -> Path:
    """Store a response record where FixtureOracle will find it."""
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    path = fixture_dir / fixture_name(response.id)
    path.write_text(json.dumps(response.to_record(), indent=2) + "\n")
    return path


class PipeOracle(Oracle):
    """Speaks the protocol with a child process over stdin/stdout."""

    def __init__(self, command: str):
        self.command = command
        try:
            self.proc = subprocess.Popen(
                shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as e:
            raise OracleUnavailable(f"cannot start oracle {command!r}: {e}") from None

    def _transact(self, request: OracleRequest) -> OracleResponse:
        if self.proc.poll() is not None:
            raise OracleUnavailable(
                f"oracle process exited with status {self.proc.returncode}")
        try:
            self.proc.stdin.write(json.dumps(request.to_record()) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise OracleUnavailable(f"oracle pipe broken: {e}") from None
        if not line:
            raise OracleUnavailable("oracle closed its stdout before responding")
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolViolation(f"oracle sent invalid JSON: {e.msg}") from None
        return response_from_record(rec)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()


class EchoOracle(Oracle):
    """In-memory identity oracle for tests and synthetic fixtures.

    select_views and relevance echo the candidate frames in request order
    with score 1.0; segment answers via the provided callback.
    """

    def __init__(self, segment_fn=None):
        self.segment_fn = segment_fn
        self.transcript: list[OracleRequest] = []

    def _transact(self, request: OracleRequest) -> OracleResponse:
        self.transcript.append(request)
        if request.kind in ("select_views", "relevance"):
            return OracleResponse(id=request.id, kind=request.kind,
                                  frames=tuple((fid, 1.0) for fid in request.frame_ids))
        if self.segment_fn is None:
            raise ProtocolViolation("echo oracle has no segmentation source")
        mask = self.segment_fn(request)
        return OracleResponse(id=request.id, kind="segment",
                              mask={"width": mask.width, "height": mask.height,
                                    "runs": list(mask.runs)})


def make_oracle(spec: str) -> Oracle:
    """Build a transport from a CLI-style endpoint string.

    ``fixtures:<dir>`` replays canned responses; ``exec:<command>`` spawns a
    child process speaking the pipe protocol.
    """
    if spec.startswith("fixtures:"):
        return FixtureOracle(spec[len("fixtures:"):])
    if spec.startswith("exec:"):
        return PipeOracle(spec[len("exec:"):])
    raise ConfigInvalid(f"oracle endpoint must be fixtures:<dir> or exec:<cmd>, got {spec!r}")
