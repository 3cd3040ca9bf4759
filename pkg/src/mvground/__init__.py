"""Zero-shot multi-view 3D visual grounding pipeline.

Given a posed RGB-D scene, per-frame embeddings, and a natural-language
query, the pipeline ranks frames by embedding similarity, lets an external
oracle pick the best views and segment the target in each, lifts the masks
to 3D, and resolves the query to a single box by voting over class-agnostic
proposals. Reconstruction (TSDF fusion plus mesh extraction) and evaluation
utilities round out the toolkit.
"""

from .config import PRESETS, PipelineConfig, TsdfParams, load_config, preset
from .errors import PipelineError
from .evaluate import EvalReport, acc_at, split_metrics, top1_accuracy
from .geometry import (PointSet, aabb_of, box_iou, lift_mask, project,
                       trim_outliers, unproject)
from .grounding import (GroundingResult, Vote, VoteTally, cast_votes, ground,
                        proposals_from_candidates, segment_target, select_final)
from .oracle import (FixtureOracle, Oracle, OracleRequest, OracleResponse,
                     PipeOracle, make_oracle)
from .proposals import (ConsensusParams, Proposal, consensus_proposals,
                        load_proposals, save_proposals)
from .scene import (Box3, DepthMap, Frame, Intrinsics, Mask2D, Pose, Query,
                    Scene, load_embeddings, load_queries, load_scene,
                    scene_fingerprint, write_embeddings)
from .tsdf import TriangleMesh, TsdfVolume, extract_mesh, extract_points, \
    integrate, volume_for_scene
from .views import (RankedView, combined_relevance, cosine_topk,
                    normalized_similarity, oracle_select_views)

__version__ = "0.1.0"

__all__ = [
    "Box3", "ConsensusParams", "DepthMap", "EvalReport", "FixtureOracle",
    "Frame", "GroundingResult", "Intrinsics", "Mask2D", "Oracle",
    "OracleRequest", "OracleResponse", "PRESETS", "PipeOracle",
    "PipelineConfig", "PipelineError", "PointSet", "Pose", "Proposal",
    "Query", "RankedView", "Scene", "TriangleMesh", "TsdfParams",
    "TsdfVolume", "Vote", "VoteTally", "aabb_of", "acc_at", "box_iou",
    "cast_votes", "combined_relevance", "consensus_proposals", "cosine_topk",
    "extract_mesh", "extract_points", "ground", "integrate", "lift_mask",
    "load_config", "load_embeddings", "load_proposals", "load_queries",
    "load_scene", "make_oracle", "normalized_similarity",
    "oracle_select_views", "preset", "project", "proposals_from_candidates",
    "save_proposals", "scene_fingerprint", "segment_target", "select_final",
    "split_metrics", "top1_accuracy", "trim_outliers", "unproject",
    "volume_for_scene", "write_embeddings",
]
