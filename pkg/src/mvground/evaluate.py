"""Grounding metrics: threshold accuracies, uniqueness splits, top-1 selection.

Threshold comparison is strict: a prediction counts only when its overlap
exceeds the threshold, so IoU exactly 0.25 is a miss at 0.25. Queries with
no prediction are misses at every threshold rather than errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyGroundTruth, IndexOutOfRange, InvariantViolation
from .geometry import box_iou
from .scene import Box3, Query

DEFAULT_THRESHOLDS = (0.25, 0.5)


@dataclass(frozen=True)
class EvalReport:
    """Accuracy per threshold, overall and per uniqueness bucket."""

    overall: dict[float, float]
    counts: dict[str, int]
    unique: dict[float, float] | None = None
    multiple: dict[float, float] | None = None
    top1_accuracy: float | None = None

    def __post_init__(self):
        for accs in (self.overall, self.unique, self.multiple):
            if accs is None:
                continue
            for thr, acc in accs.items():
                if not (0.0 <= acc <= 1.0):
                    raise InvariantViolation("EvalReport", "accuracy-in-unit-interval",
                                             f"{thr}: {acc}")
        if self.unique is not None and self.multiple is not None:
            if self.counts["unique"] + self.counts["multiple"] != self.counts["overall"]:
                raise InvariantViolation("EvalReport", "split-counts-sum-to-overall")

    def to_record(self) -> dict:
        rec = {
            "overall": {str(t): a for t, a in sorted(self.overall.items())},
            "counts": dict(self.counts),
        }
        if self.unique is not None:
            rec["unique"] = {str(t): a for t, a in sorted(self.unique.items())}
        if self.multiple is not None:
            rec["multiple"] = {str(t): a for t, a in sorted(self.multiple.items())}
        if self.top1_accuracy is not None:
            rec["top1_accuracy"] = self.top1_accuracy
        return rec

    def render_table(self) -> str:
        """Aligned plain-text table, one row per split."""
        thresholds = sorted(self.overall)
        rows = []
        header = ["split"] + [f"acc@{t:g}" for t in thresholds] + ["count"]
        for name, accs in (("unique", self.unique), ("multiple", self.multiple),
                           ("overall", self.overall)):
            if accs is None:
                continue
            rows.append([name] + [f"{accs[t]:.4f}" for t in thresholds]
                        + [str(self.counts.get(name, 0))])
        if self.top1_accuracy is not None:
            rows.append(["top-1"] + [f"{self.top1_accuracy:.4f}"]
                        + [""] * (len(thresholds) - 1)
                        + [str(self.counts.get("overall", 0))])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        lines = [fmt.format(*header), fmt.format(*["-" * w for w in widths])]
        lines += [fmt.format(*r) for r in rows]
        return "\n".join(lines)


def acc_at(preds: dict[str, Box3], gts: dict[str, Box3],
           thresholds=DEFAULT_THRESHOLDS) -> dict[float, float]:
    """Fraction of queries whose prediction overlaps ground truth past each threshold."""
    if not gts:
        raise EmptyGroundTruth("no ground-truth boxes to score against")
    ious = {}
    for qid, gt in gts.items():
        pred = preds.get(qid)
        ious[qid] = box_iou(pred, gt) if pred is not None else -1.0
    return {float(t): sum(1 for v in ious.values() if v > t) / len(gts)
            for t in thresholds}


def split_metrics(preds: dict[str, Box3], queries: list[Query],
                  thresholds=DEFAULT_THRESHOLDS,
                  top1: float | None = None) -> EvalReport:
    """Score predictions overall and per uniqueness bucket.

    Bucket membership comes from each query's stored label, never from
    counting objects. Unlabeled queries score in overall only; a split with
    no members is omitted rather than reported as 0.
    """
    gts = {q.id: q.gt_box for q in queries if q.gt_box is not None}
    overall = acc_at(preds, gts, thresholds)
    counts = {"overall": len(gts)}
    unique_q = [q for q in queries if q.uniqueness == "unique" and q.gt_box is not None]
    multiple_q = [q for q in queries if q.uniqueness == "multiple" and q.gt_box is not None]
    unique = multiple = None
    if unique_q:
        unique = acc_at(preds, {q.id: q.gt_box for q in unique_q}, thresholds)
        counts["unique"] = len(unique_q)
    if multiple_q:
        multiple = acc_at(preds, {q.id: q.gt_box for q in multiple_q}, thresholds)
        counts["multiple"] = len(multiple_q)
    labeled = len(unique_q) + len(multiple_q)
    if (unique is not None or multiple is not None) and labeled != counts["overall"]:
        # mixed labeled/unlabeled input: splits are not a partition, drop them
        unique = multiple = None
        counts = {"overall": len(gts)}
    return EvalReport(overall=overall, counts=counts, unique=unique,
                      multiple=multiple, top1_accuracy=top1)


def top1_accuracy(selections: dict[str, int], queries: list[Query]) -> float:
    """Fraction of closed-set queries whose selected candidate is the true one."""
    scored = [q for q in queries if q.candidate_boxes is not None]
    if not scored:
        raise EmptyGroundTruth("no queries with candidate boxes")
    hits = 0
    for q in scored:
        sel = selections.get(q.id)
        if sel is None:
            continue
        if not (0 <= sel < len(q.candidate_boxes)):
            raise IndexOutOfRange(
                f"query {q.id}: selection {sel} outside {len(q.candidate_boxes)} candidates")
        if sel == q.gt_candidate_index():
            hits += 1
    return hits / len(scored)


def load_predictions(path) -> tuple[dict[str, Box3], dict[str, int]]:
    """Read a predictions file into (query_id→box, query_id→selected index)."""
    data = json.loads(Path(path).read_text())
    boxes = {}
    selections = {}
    for rec in data["predictions"]:
        boxes[rec["query_id"]] = Box3.from_list(rec["box"])
        if rec.get("proposal_id") is not None and rec.get("closed_set"):
            selections[rec["query_id"]] = rec["proposal_id"]
    return boxes, selections


def save_predictions(path, records: list[dict]) -> None:
    Path(path).write_text(
        json.dumps({"predictions": records}, indent=2, sort_keys=True) + "\n")


def save_report(path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_record(), indent=2, sort_keys=True) + "\n")
