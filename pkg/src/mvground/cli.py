"""Command-line entry point.

Subcommands mirror the pipeline stages (reconstruct, select-views, propose,
ground, eval) plus an orchestrating `pipeline`, all driven by one config
record with auditable presets. Artifact formats are the ones the library
loaders read back, so stages can be re-run and diffed in isolation. With
fixed inputs, config, and oracle fixtures, outputs are byte-identical
across runs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, preset, save_config
from .errors import (ConfigInvalid, MissingEmbedding, OracleUnavailable,
                     PipelineError, annotate_stage)
from .evaluate import (load_predictions, save_predictions, save_report,
                       split_metrics, top1_accuracy)
from .grounding import ground, proposals_from_candidates
from .oracle import Oracle, make_oracle
from .plyio import write_ply_mesh, write_ply_points
from .proposals import Proposal, consensus_proposals, load_proposals, save_proposals
from .scene import (Scene, load_all_masks, load_embeddings, load_queries,
                    load_scene)
from .tsdf import extract_mesh, extract_points, integrate, volume_for_scene
from .views import cosine_topk, oracle_select_views


def _resolve_config(args) -> PipelineConfig:
    try:
        if getattr(args, "preset", None) and getattr(args, "config", None):
            raise ConfigInvalid("give either --preset or --config, not both")
        if getattr(args, "preset", None):
            cfg = preset(args.preset)
        elif getattr(args, "config", None):
            cfg = load_config(args.config)
        else:
            cfg = PipelineConfig()
        overrides = {}
        if getattr(args, "oracle", None):
            overrides["oracle"] = args.oracle
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        return dataclasses.replace(cfg, **overrides) if overrides else cfg
    except PipelineError as e:
        raise annotate_stage(e, "config")


def _open_oracle(cfg: PipelineConfig, scene_dir: Path) -> Oracle:
    spec = cfg.oracle
    if spec is None:
        default_dir = scene_dir / "fixtures"
        if default_dir.is_dir():
            spec = f"fixtures:{default_dir}"
        else:
            raise OracleUnavailable(
                f"no oracle configured and {default_dir} does not exist")
    return make_oracle(spec)


def _load_scene_with_embeddings(scene_dir: Path, cfg: PipelineConfig,
                                queries) -> tuple[Scene, dict]:
    scene = load_scene(scene_dir, cfg.mode)
    emb_path = scene_dir / "embeddings.bin"
    if not emb_path.is_file():
        return scene, {}
    return load_embeddings(emb_path, scene, [q.id for q in queries])


def _reconstruct(scene: Scene, cfg: PipelineConfig, out_dir: Path) -> dict:
    vol = volume_for_scene(scene.frames, cfg.tsdf.voxel_size,
                           cfg.tsdf.truncation, cfg.tsdf.margin)
    for frame in scene.frames:
        if frame.pose is not None and frame.depth is not None:
            integrate(vol, frame)
    mesh = extract_mesh(vol)
    points = extract_points(vol)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ply_mesh(out_dir / "mesh.ply", mesh.vertices, mesh.triangles)
    write_ply_points(out_dir / "points.ply", points.points)
    return {"vertices": len(mesh.vertices), "faces": len(mesh.triangles),
            "points": len(points)}


def _rank_views(scene: Scene, queries, query_vecs, cfg: PipelineConfig,
                oracle: Oracle | None) -> dict[str, list]:
    out = {}
    for q in queries:
        if q.id not in query_vecs:
            raise MissingEmbedding(f"query {q.id!r} has no embedding record")
        candidates = cosine_topk(query_vecs[q.id], scene, cfg.k_preselect)
        if cfg.use_oracle_views and oracle is not None \
                and cfg.m_views < len(candidates):
            views = oracle_select_views(candidates, q, oracle, cfg.m_views)
        else:
            views = candidates[:cfg.m_views]
        out[q.id] = views
    return out


def _views_record(views_by_query: dict[str, list]) -> dict:
    return {qid: [{"frame_id": v.frame_id, "sim_score": round(v.sim_score, 6),
                   "oracle_rank": v.oracle_rank, "oracle_score": v.oracle_score}
                  for v in views]
            for qid, views in views_by_query.items()}


def _largest_proposal(proposals: list[Proposal]) -> Proposal:
    return max(proposals, key=lambda p: (p.box.volume(), -p.id))


def _ground_scene(scene_dir: Path, cfg: PipelineConfig,
                  proposals_path: Path | None = None) -> list[dict]:
    """Run grounding for every query of one scene; returns prediction records."""
    queries = load_queries(scene_dir / "queries.json")
    scene, query_vecs = _load_scene_with_embeddings(scene_dir, cfg, queries)

    shared: list[Proposal] | None = None
    if proposals_path is not None:
        shared = load_proposals(proposals_path, scene.point_cloud)

    oracle = None
    records = []
    try:
        for q in queries:
            closed_set = q.candidate_boxes is not None
            if closed_set:
                props = proposals_from_candidates(q)
            elif shared is not None:
                props = shared
            else:
                masks = load_all_masks(scene_dir, scene)
                shared = consensus_proposals(scene, masks, cfg.consensus)
                props = shared
            if cfg.strategy == "largest":
                best = _largest_proposal(props)
                rec = {"query_id": q.id, "box": best.box.to_list(),
                       "proposal_id": best.id, "used_fallback": False,
                       "views": [], "votes": []}
            else:
                if q.id not in query_vecs:
                    raise MissingEmbedding(f"query {q.id!r} has no embedding record")
                if oracle is None:
                    oracle = _open_oracle(cfg, scene_dir)
                result = ground(scene, q, query_vecs[q.id], props, oracle,
                                k=cfg.k_preselect, m=cfg.m_views,
                                min_iou=cfg.min_iou, trim=cfg.trim_lo,
                                sim_weight=cfg.sim_weight,
                                use_oracle_views=cfg.use_oracle_views)
                rec = result.to_record()
            rec["closed_set"] = closed_set
            rec["scene_id"] = scene.id
            records.append(rec)
    finally:
        if oracle is not None:
            oracle.close()
    return records


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_reconstruct(args) -> int:
    cfg = _resolve_config(args)
    scene_dir = Path(args.scene)
    scene = load_scene(scene_dir, cfg.mode if cfg.mode != "images_only" else "full")
    out_dir = Path(args.out) if args.out else scene_dir / "recon"
    stats = _reconstruct(scene, cfg, out_dir)
    print(f"reconstructed {scene.id}: {stats['vertices']} vertices, "
          f"{stats['faces']} faces -> {out_dir}")
    return 0


def cmd_select_views(args) -> int:
    cfg = _resolve_config(args)
    scene_dir = Path(args.scene)
    queries = load_queries(args.queries or scene_dir / "queries.json")
    scene, query_vecs = _load_scene_with_embeddings(scene_dir, cfg, queries)
    oracle = _open_oracle(cfg, scene_dir) if cfg.use_oracle_views else None
    try:
        views = _rank_views(scene, queries, query_vecs, cfg, oracle)
    finally:
        if oracle is not None:
            oracle.close()
    out = Path(args.out) if args.out else scene_dir / "views.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(_views_record(views), indent=2, sort_keys=True) + "\n")
    print(f"selected views for {len(queries)} queries -> {out}")
    return 0


def cmd_propose(args) -> int:
    cfg = _resolve_config(args)
    scene_dir = Path(args.scene)
    scene = load_scene(scene_dir, cfg.mode)
    masks = load_all_masks(scene_dir, scene)
    proposals = consensus_proposals(scene, masks, cfg.consensus)
    out = Path(args.out) if args.out else scene_dir / "proposals.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_proposals(out, proposals)
    print(f"{len(proposals)} proposals from {len(masks)} masks -> {out}")
    return 0


def cmd_ground(args) -> int:
    cfg = _resolve_config(args)
    scene_dir = Path(args.scene)
    records = _ground_scene(scene_dir, cfg,
                            Path(args.proposals) if args.proposals else None)
    out = Path(args.out) if args.out else scene_dir / "predictions.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_predictions(out, sorted(records, key=lambda r: r["query_id"]))
    print(f"grounded {len(records)} queries -> {out}")
    return 0


def cmd_eval(args) -> int:
    thresholds = tuple(float(t) for t in args.thresholds.split(","))
    queries = load_queries(args.queries)
    preds, selections = load_predictions(args.preds)
    known = {q.id for q in queries}
    for qid in sorted(preds):
        if qid not in known:
            raise ConfigInvalid(f"prediction for unknown query id {qid!r}")
    top1 = None
    if any(q.candidate_boxes is not None for q in queries) and selections:
        top1 = top1_accuracy(selections, queries)
    report = split_metrics(preds, queries, thresholds, top1)
    if args.report:
        save_report(args.report, report)
    print(report.render_table())
    return 0


def _pipeline_one(scene_dir: Path, cfg: PipelineConfig, out_root: Path,
                  force_reconstruct: bool = False) -> list[dict]:
    scene_dir = Path(scene_dir)
    queries = load_queries(scene_dir / "queries.json")
    scene, query_vecs = _load_scene_with_embeddings(scene_dir, cfg, queries)
    out_dir = out_root / scene.id
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.mode != "full" or force_reconstruct:
        try:
            _reconstruct(scene, cfg, out_dir)
        except PipelineError as e:
            raise annotate_stage(e, "reconstruct")

    if cfg.strategy == "vote":
        oracle = _open_oracle(cfg, scene_dir) if cfg.use_oracle_views else None
        try:
            views = _rank_views(scene, queries, query_vecs, cfg, oracle)
        finally:
            if oracle is not None:
                oracle.close()
        (out_dir / "views.json").write_text(
            json.dumps(_views_record(views), indent=2, sort_keys=True) + "\n")

    needs_proposals = any(q.candidate_boxes is None for q in queries)
    proposals_path = None
    if needs_proposals:
        masks = load_all_masks(scene_dir, scene)
        proposals = consensus_proposals(scene, masks, cfg.consensus)
        proposals_path = out_dir / "proposals.json"
        save_proposals(proposals_path, proposals)

    records = _ground_scene(scene_dir, cfg, proposals_path)
    save_predictions(out_dir / "predictions.json",
                     sorted(records, key=lambda r: r["query_id"]))
    return records


def cmd_pipeline(args) -> int:
    cfg = _resolve_config(args)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    save_config(out_root / "config.json", cfg)

    scene_dirs = [Path(s) for s in args.scenes]
    all_records: list[list[dict]] = [[] for _ in scene_dirs]
    if args.jobs > 1 and len(scene_dirs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_pipeline_one, d, cfg, out_root,
                                   args.force_reconstruct): i
                       for i, d in enumerate(scene_dirs)}
            for fut in concurrent.futures.as_completed(futures):
                all_records[futures[fut]] = fut.result()
    else:
        for i, d in enumerate(scene_dirs):
            all_records[i] = _pipeline_one(d, cfg, out_root, args.force_reconstruct)

    merged = sorted((r for recs in all_records for r in recs),
                    key=lambda r: r["query_id"])
    save_predictions(out_root / "predictions.json", merged)

    queries = []
    for d in scene_dirs:
        queries.extend(load_queries(Path(d) / "queries.json"))
    preds, selections = load_predictions(out_root / "predictions.json")
    top1 = None
    if any(q.candidate_boxes is not None for q in queries) and selections:
        top1 = top1_accuracy(selections, queries)
    report = split_metrics(preds, queries, top1=top1)
    save_report(out_root / "report.json", report)
    table = report.render_table()
    (out_root / "report.txt").write_text(table + "\n")
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvground",
                                 description="multi-view 3D grounding pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, oracle=True):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--preset", help="named config preset (stage1..stage4)")
        p.add_argument("--seed", type=int, default=None)
        if oracle:
            p.add_argument("--oracle",
                           help="exec:<cmd> or fixtures:<dir>; defaults to "
                                "fixtures under the scene directory")

    p = sub.add_parser("reconstruct", help="fuse depth frames and extract a mesh")
    p.add_argument("scene")
    p.add_argument("--out")
    common(p, oracle=False)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("select-views", help="rank frames per query")
    p.add_argument("scene")
    p.add_argument("--queries")
    p.add_argument("--out")
    common(p)
    p.set_defaults(fn=cmd_select_views)

    p = sub.add_parser("propose", help="cluster scene masks into 3D proposals")
    p.add_argument("scene")
    p.add_argument("--out")
    common(p, oracle=False)
    p.set_defaults(fn=cmd_propose)

    p = sub.add_parser("ground", help="answer queries with 3D boxes")
    p.add_argument("scene")
    p.add_argument("--proposals")
    p.add_argument("--out")
    common(p)
    p.set_defaults(fn=cmd_ground)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--preds", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--thresholds", default="0.25,0.5")
    p.add_argument("--report", help="also write a JSON report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="run all stages over one or more scenes")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--force-reconstruct", action="store_true",
                   help="run reconstruction even in full mode")
    common(p)
    p.set_defaults(fn=cmd_pipeline)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as e:
        stage = getattr(e, "stage", None) or args.command
        print(f"error [{stage}] {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error [io] {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
