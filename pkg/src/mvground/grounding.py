"""Query grounding: turn per-view masks into one 3D box.

Each selected view contributes one target mask. A mask is lifted to 3D and
votes for the proposal it overlaps best, provided that overlap clears a
floor. The most voted proposal wins; vote-count ties go to the proposal
backed by the most relevant view, and any residual tie to the lowest
proposal id. With no votes at all, the best view's lifted box picks the
nearest proposal directly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (DimMismatch, FallbackFailed, InvariantViolation,
                     NoProposals, annotate_stage)
from .geometry import aabb_of, box_iou, lift_mask, trim_outliers
from .oracle import Oracle, OracleRequest
from .proposals import Proposal
from .scene import Box3, Frame, Mask2D, Query, Scene
from .views import (DEFAULT_ORACLE_VIEWS, DEFAULT_PRESELECT, RankedView,
                    cosine_topk, oracle_select_views, relevance_of)

DEFAULT_MIN_IOU = 0.05
DEFAULT_TRIM = 0.02


@dataclass(frozen=True)
class Vote:
    """One mask backing one proposal."""

    frame_id: str
    proposal_id: int
    iou: float
    relevance: float

    def __post_init__(self):
        if not (0.0 <= self.iou <= 1.0):
            raise InvariantViolation("Vote", "iou-in-unit-interval", repr(self.iou))


@dataclass(frozen=True)
class VoteTally:
    """Vote counts per proposal plus the resolved winner, if any."""

    votes: tuple[Vote, ...]
    winner: int | None = None

    @property
    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for v in self.votes:
            out[v.proposal_id] = out.get(v.proposal_id, 0) + 1
        return out

    def __post_init__(self):
        if self.winner is not None:
            counts = self.counts
            if self.winner not in counts or counts[self.winner] != max(counts.values()):
                raise InvariantViolation("VoteTally", "winner-attains-max-count")


@dataclass(frozen=True)
class GroundingResult:
    query_id: str
    box: Box3
    proposal_id: int
    tally: VoteTally
    views: tuple[RankedView, ...]
    masks: tuple[Mask2D, ...] = ()
    used_fallback: bool = False

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "box": self.box.to_list(),
            "proposal_id": self.proposal_id,
            "used_fallback": self.used_fallback,
            "views": [v.frame_id for v in self.views],
            "votes": [{"frame_id": v.frame_id, "proposal_id": v.proposal_id,
                       "iou": round(v.iou, 6)} for v in self.tally.votes],
        }


def segment_target(frame: Frame, query: Query, oracle: Oracle) -> Mask2D:
    """Ask the segmentation oracle for the query target in one frame.

    Empty masks are legal: they mean the target is not visible here.
    """
    req = OracleRequest(
        id=f"{query.id}.segment.{frame.id}",
        kind="segment",
        query_text=query.text,
        frame_ids=(frame.id,),
        image_paths=(frame.image_path,) if frame.image_path else (),
    )
    resp = oracle.request(req)
    w, h = resp.mask["width"], resp.mask["height"]
    if (w, h) != (frame.intrinsics.width, frame.intrinsics.height):
        raise DimMismatch(
            f"oracle mask is {w}x{h}, frame {frame.id} is "
            f"{frame.intrinsics.width}x{frame.intrinsics.height}")
    return Mask2D(frame_id=frame.id, width=w, height=h,
                  runs=tuple(resp.mask["runs"]), source="oracle_segmenter")


def _mask_box(scene: Scene, mask: Mask2D, trim: float) -> Box3 | None:
    frame = scene.frame(mask.frame_id)
    pts = trim_outliers(lift_mask(mask, frame), trim, trim)
    if pts.is_empty:
        return None
    return aabb_of(pts)


def cast_votes(scene: Scene, masks: list[Mask2D], views: list[RankedView],
               proposals: list[Proposal], min_iou: float = DEFAULT_MIN_IOU,
               trim: float = DEFAULT_TRIM,
               sim_weight: float = 0.5) -> VoteTally:
    """Each mask votes once, for its best-overlap proposal past min_iou.

    Empty masks and masks whose lift has no valid depth abstain. A best
    overlap below ``min_iou`` is an abstention too, not a weak vote.
    IoU ties go to the lower proposal id.
    """
    if not proposals:
        raise NoProposals("no candidate proposals to vote on")
    by_frame = {v.frame_id: v for v in views}
    votes = []
    for mask in masks:
        if mask.is_empty:
            continue
        mbox = _mask_box(scene, mask, trim)
        if mbox is None:
            continue
        best_iou = -1.0
        best: Proposal | None = None
        for prop in proposals:
            iou = box_iou(mbox, prop.box)
            if iou > best_iou or (iou == best_iou and prop.id < best.id):
                best_iou, best = iou, prop
        if best is None or best_iou < min_iou:
            continue
        rel = relevance_of(by_frame[mask.frame_id], sim_weight)
        votes.append(Vote(frame_id=mask.frame_id, proposal_id=best.id,
                          iou=best_iou, relevance=rel))
    return VoteTally(votes=tuple(votes))


def select_final(scene: Scene, tally: VoteTally, views: list[RankedView],
                 masks: list[Mask2D], proposals: list[Proposal],
                 trim: float = DEFAULT_TRIM) -> tuple[Proposal, VoteTally, bool]:
    """Resolve the tally to a winning proposal.

    Count ties are broken by the relevance of the supporting views, residual
    ties by lowest proposal id. With zero votes, the proposal nearest (by
    box overlap) to the best usable view's lifted box wins; if no view
    produced a liftable mask the query is unanswerable.

    Returns (winner, tally with winner set, used_fallback).
    """
    if tally.votes:
        counts = tally.counts
        top = max(counts.values())
        tied = [pid for pid, c in counts.items() if c == top]
        if len(tied) > 1:
            # break the tie by the most relevant supporting view
            best_rel = max(v.relevance for v in tally.votes if v.proposal_id in tied)
            tied = [pid for pid in tied
                    if any(v.proposal_id == pid and v.relevance == best_rel
                           for v in tally.votes)]
        winner_id = min(tied)
        winner = next(p for p in proposals if p.id == winner_id)
        return winner, VoteTally(votes=tally.votes, winner=winner_id), False

    # nothing cleared the overlap floor: anchor on the best view's lifted box
    order = {v.frame_id: i for i, v in enumerate(views)}
    for mask in sorted(masks, key=lambda m: order.get(m.frame_id, len(order))):
        if mask.is_empty:
            continue
        mbox = _mask_box(scene, mask, trim)
        if mbox is None:
            continue
        best = min(proposals, key=lambda p: (-box_iou(mbox, p.box), p.id))
        return best, VoteTally(votes=()), True
    raise FallbackFailed("no votes and no usable mask to anchor a fallback")


def ground(scene: Scene, query: Query, query_embedding, proposals: list[Proposal],
           oracle: Oracle, k: int = DEFAULT_PRESELECT, m: int = DEFAULT_ORACLE_VIEWS,
           min_iou: float = DEFAULT_MIN_IOU, trim: float = DEFAULT_TRIM,
           sim_weight: float = 0.5, use_oracle_views: bool = True) -> GroundingResult:
    """Full grounding path for one query.

    Preselect k frames by embedding similarity, narrow to m views (via the
    view-selection oracle unless disabled), segment the target in each view,
    vote, and resolve. Stage names ride on raised errors for CLI reporting.
    """
    if not proposals:
        raise annotate_stage(NoProposals("no candidate proposals"), "ground")
    try:
        candidates = cosine_topk(query_embedding, scene, k)
    except Exception as e:
        raise annotate_stage(e, "select-views")
    if use_oracle_views and m < len(candidates):
        try:
            image_paths = tuple(
                p for p in (scene.frame(c.frame_id).image_path for c in candidates)
                if p is not None)
            views = oracle_select_views(candidates, query, oracle, m,
                                        image_paths or None)
        except Exception as e:
            raise annotate_stage(e, "select-views")
    else:
        views = candidates[:m]
    try:
        masks = [segment_target(scene.frame(v.frame_id), query, oracle)
                 for v in views]
    except Exception as e:
        raise annotate_stage(e, "segment")
    try:
        tally = cast_votes(scene, masks, views, proposals, min_iou, trim, sim_weight)
        winner, tally, fb = select_final(scene, tally, views, masks, proposals, trim)
    except Exception as e:
        raise annotate_stage(e, "ground")
    return GroundingResult(query_id=query.id, box=winner.box, proposal_id=winner.id,
                           tally=tally, views=tuple(views), masks=tuple(masks),
                           used_fallback=fb)


def proposals_from_candidates(query: Query) -> list[Proposal]:
    """Closed-set selection: the query's candidate boxes, ids in list order."""
    return [Proposal(id=i, box=b, source="external")
            for i, b in enumerate(query.candidate_boxes)]
