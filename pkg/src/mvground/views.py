"""Two-stage view selection.

Stage one ranks frames by cosine similarity between the query embedding and
frame embeddings (default keeps six). Stage two asks the oracle transport to
pick the best views among them (default three). Ties on similarity are broken
by manifest frame order, so selection is deterministic for a fixed scene,
query, and oracle transcript.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, MissingEmbedding, MissingScore
from .oracle import Oracle, OracleRequest
from .scene import Query, Scene

DEFAULT_PRESELECT = 6
DEFAULT_ORACLE_VIEWS = 3


@dataclass(frozen=True)
class RankedView:
    frame_id: str
    sim_score: float
    oracle_rank: int | None = None
    oracle_score: float | None = None

    def __post_init__(self):
        if (self.oracle_rank is None) != (self.oracle_score is None):
            raise InvariantViolation("RankedView", "rank-iff-score", self.frame_id)


def cosine_topk(query_emb: np.ndarray, scene: Scene, k: int = DEFAULT_PRESELECT) -> list[RankedView]:
    """Top-k frames by cosine similarity, descending, ties by manifest order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query_emb, dtype=np.float64).reshape(-1)
    sims = []
    for frame in scene.frames:
        if frame.embedding is None:
            raise MissingEmbedding(f"frame {frame.id!r} has no embedding")
        sims.append(float(np.dot(q, frame.embedding)))
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
    return [RankedView(frame_id=scene.frames[i].id, sim_score=sims[i])
            for i in order[:k]]


def oracle_select_views(candidates: list[RankedView], query: Query, oracle: Oracle,
                        m: int = DEFAULT_ORACLE_VIEWS,
                        image_paths=None) -> list[RankedView]:
    """Ask the oracle to order the candidates; keep at most m.

    The oracle's ranking is trusted as-is; missing scores degrade to linearly
    decaying rank scores 1, (m-1)/m, ... so rank-only oracles still work.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    by_id = {c.frame_id: c for c in candidates}
    request = OracleRequest(
        id=f"{query.id}.select_views",
        kind="select_views",
        query_text=query.text,
        frame_ids=tuple(c.frame_id for c in candidates),
        image_paths=tuple(image_paths or ()))
    response = oracle.request(request)
    selected = []
    for rank, (fid, score) in enumerate(response.frames[:m], start=1):
        if score is None:
            score = (m - rank + 1) / m
        base = by_id[fid]
        selected.append(RankedView(frame_id=fid, sim_score=base.sim_score,
                                   oracle_rank=rank, oracle_score=score))
    return selected


def normalized_similarity(sim_score: float) -> float:
    """Affine map of cosine similarity from [-1, 1] to [0, 1]."""
    return (sim_score + 1.0) / 2.0


def combined_relevance(view: RankedView, sim_weight: float = 0.5) -> float:
    """Blend of normalized cosine similarity and oracle relevance."""
    if view.oracle_score is None:
        raise MissingScore(f"view {view.frame_id!r} has no oracle score")
    return sim_weight * normalized_similarity(view.sim_score) \
        + (1.0 - sim_weight) * view.oracle_score


def relevance_of(view: RankedView, sim_weight: float = 0.5) -> float:
    """combined_relevance when the oracle stage ran, normalized similarity otherwise."""
    if view.oracle_score is None:
        return normalized_similarity(view.sim_score)
    return combined_relevance(view, sim_weight)
