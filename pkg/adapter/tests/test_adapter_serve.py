"""Oracle server: protocol compliance against the pipeline's transport."""

import json
import subprocess
import sys

import pytest

from mvground.errors import ProtocolViolation
from mvground.oracle import OracleRequest, make_oracle, validate_response
from mvground.scene import Mask2D

from mvground_adapter.config import AdapterConfig, save_adapter_config


def serve_command(scene_dir=None, config_path=None):
    cmd = f"exec:{sys.executable} -m mvground_adapter serve"
    if scene_dir is not None:
        cmd += f" --scene {scene_dir}"
    if config_path is not None:
        cmd += f" --config {config_path}"
    return cmd


def raw_session(lines, scene_dir=None):
    """Feed raw stdin lines to the server, return (response records, rc)."""
    cmd = [sys.executable, "-m", "mvground_adapter", "serve"]
    if scene_dir is not None:
        cmd += ["--scene", str(scene_dir)]
    proc = subprocess.run(cmd, input="".join(line + "\n" for line in lines),
                          capture_output=True, text=True, timeout=60)
    records = [json.loads(line) for line in proc.stdout.splitlines() if line]
    return records, proc.returncode


def select_request(frame_ids=("f0", "f1", "f2"), kind="select_views"):
    return OracleRequest(id=f"q0.{kind}", kind=kind,
                         query_text="the round table", frame_ids=frame_ids)


def test_select_views_echoes_ranked_candidates(image_scene):
    with make_oracle(serve_command(image_scene)) as oracle:
        req = select_request()
        resp = validate_response(req, oracle.request(req))
    assert [fid for fid, _ in resp.frames] == ["f0", "f1", "f2"]
    scores = [score for _, score in resp.frames]
    assert scores == sorted(scores, reverse=True)
    assert all(0.0 <= s <= 1.0 for s in scores)


def test_relevance_is_schema_valid(image_scene):
    with make_oracle(serve_command(image_scene)) as oracle:
        req = select_request(kind="relevance")
        resp = validate_response(req, oracle.request(req))
    assert len(resp.frames) == 3


def test_segment_mask_matches_frame_dims(image_scene):
    with make_oracle(serve_command(image_scene)) as oracle:
        req = OracleRequest(id="q0.segment.f1", kind="segment",
                            query_text="the round table", frame_ids=("f1",))
        resp = validate_response(req, oracle.request(req))
    assert (resp.mask["width"], resp.mask["height"]) == (12, 10)
    mask = Mask2D(frame_id="f1", width=resp.mask["width"], height=resp.mask["height"],
                  runs=tuple(resp.mask["runs"]), source="oracle_segmenter")
    assert 0 < mask.foreground_count < 120


def test_segment_is_deterministic_across_sessions(image_scene):
    masks = []
    for _ in range(2):
        with make_oracle(serve_command(image_scene)) as oracle:
            req = OracleRequest(id="q0.segment.f0", kind="segment",
                                query_text="the round table", frame_ids=("f0",))
            masks.append(oracle.request(req).mask)
    assert masks[0] == masks[1]


def test_segment_sizes_from_image_when_frame_unknown(image_scene):
    # no --scene: the request's image path is the only size source
    with make_oracle(serve_command()) as oracle:
        req = OracleRequest(id="q.segment.f2", kind="segment",
                            query_text="a lamp", frame_ids=("f2",),
                            image_paths=(str(image_scene / "images" / "f2.png"),))
        resp = validate_response(req, oracle.request(req))
    assert (resp.mask["width"], resp.mask["height"]) == (12, 10)


def test_segment_without_any_size_source_is_surfaced(image_scene):
    with make_oracle(serve_command()) as oracle:
        req = OracleRequest(id="q.segment.ghost", kind="segment",
                            query_text="a lamp", frame_ids=("ghost",))
        with pytest.raises(ProtocolViolation):
            validate_response(req, oracle.request(req))


def test_iteration_budget_changes_the_mask(image_scene, tmp_path):
    masks = []
    for budget in (1, 6):
        cfg_path = tmp_path / f"cfg{budget}.json"
        save_adapter_config(cfg_path, AdapterConfig(segment_iterations=budget))
        with make_oracle(serve_command(image_scene, cfg_path)) as oracle:
            req = OracleRequest(id="q0.segment.f0", kind="segment",
                                query_text="the round table", frame_ids=("f0",))
            masks.append(oracle.request(req).mask)
    # fewer refinement rounds leave a looser window
    fg = [sum(m["runs"][1::2]) for m in masks]
    assert fg[0] > fg[1]


def test_malformed_json_gets_error_record():
    records, rc = raw_session(["{ not json"])
    assert rc == 0
    assert records == [{"id": "", "kind": "error",
                        "error": records[0]["error"]}]
    assert "JSON" in records[0]["error"]


def test_missing_field_error_carries_original_id():
    records, _ = raw_session([json.dumps({"id": "req-17", "kind": "segment"})])
    assert records[0]["kind"] == "error"
    assert records[0]["id"] == "req-17"


def test_unknown_kind_error_carries_original_id():
    rec = {"id": "req-9", "kind": "paint", "query_text": "x", "frame_ids": []}
    records, _ = raw_session([json.dumps(rec)])
    assert records[0] == {"id": "req-9", "kind": "error",
                          "error": records[0]["error"]}


def test_session_answers_in_arrival_order(image_scene):
    reqs = [{"id": f"r{i}", "kind": "relevance", "query_text": "x",
             "frame_ids": ["f0", "f1"]} for i in range(4)]
    records, rc = raw_session([json.dumps(r) for r in reqs], scene_dir=image_scene)
    assert rc == 0
    assert [r["id"] for r in records] == ["r0", "r1", "r2", "r3"]


def test_blank_lines_are_skipped(image_scene):
    rec = {"id": "r0", "kind": "relevance", "query_text": "x", "frame_ids": ["f0"]}
    records, rc = raw_session(["", json.dumps(rec), ""], scene_dir=image_scene)
    assert rc == 0
    assert len(records) == 1 and records[0]["id"] == "r0"


def test_error_does_not_end_the_session(image_scene):
    good = {"id": "r1", "kind": "relevance", "query_text": "x", "frame_ids": ["f0"]}
    records, rc = raw_session(["nonsense", json.dumps(good)], scene_dir=image_scene)
    assert rc == 0
    assert [r["kind"] for r in records] == ["error", "relevance"]


def test_eof_is_a_clean_exit(image_scene):
    records, rc = raw_session([], scene_dir=image_scene)
    assert (records, rc) == ([], 0)


def test_live_mode_without_endpoints_refuses_to_start(tmp_path):
    cfg_path = tmp_path / "live.json"
    save_adapter_config(cfg_path, AdapterConfig(mode="live"))
    cmd = [sys.executable, "-m", "mvground_adapter", "serve", "--config", str(cfg_path)]
    proc = subprocess.run(cmd, input="", capture_output=True, text=True, timeout=60)
    assert proc.returncode == 2
    assert "error [serve] BackendError" in proc.stderr
