"""Ground-truth scoring: correct-ID percentage, incorrect IDs, FN/FP."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import BBox, FrameObservations, Identity
from .errors import DuplicateLabelInFrame, FrameRangeMismatch
from .pipeline import TrackOutput
from .primitives import hungarian, iou_matrix

DEFAULT_IOU_MIN = 0.5


@dataclass
class GroundTruth:
    frames: Dict[int, List[Tuple[str, BBox]]]
    total_frames: int

    def __post_init__(self):
        for f, rows in self.frames.items():
            labels = [lab for lab, _ in rows]
            if len(set(labels)) != len(labels):
                raise DuplicateLabelInFrame(f"frame {f} lists a label twice")
            if not 0 <= f < self.total_frames:
                raise ValueError(f"gt frame {f} outside [0, {self.total_frames})")

    @property
    def total_detections(self) -> int:
        return sum(len(v) for v in self.frames.values())

    def at(self, frame: int) -> List[Tuple[str, BBox]]:
        return self.frames.get(frame, [])


@dataclass
class FrameMatch:
    pairs: List[Tuple[int, int]]  # (pred index, gt index)
    unmatched_pred: List[int]
    unmatched_gt: List[int]


@dataclass
class FrameScore:
    frame: int
    gt: int
    incorrect: int
    fn: int
    fp: int


@dataclass
class EvalReport:
    total_gt_detections: int
    incorrect_id: int
    correct_pct: float
    reid_count: int
    reid_events: int
    fn: int
    fp: int
    id_source: str = "identity"
    iou_min: float = DEFAULT_IOU_MIN
    per_frame: List[FrameScore] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["per_frame"] = [FrameScore(**fs) for fs in d.get("per_frame", [])]
        return cls(**d)


def correct_pct(total: int, incorrect: int) -> float:
    """100 * (total - incorrect) / total truncated (not rounded) to 2 decimals."""
    if total <= 0:
        return 100.0
    hundredths = (10000 * (total - incorrect)) // total
    return hundredths / 100.0


def format_pct(pct: float) -> str:
    return f"{pct:.2f}%"


def match_frame(pred: Sequence[BBox], gt: Sequence[BBox], iou_min: float = DEFAULT_IOU_MIN) -> FrameMatch:
    """Hungarian on 1 - IoU; pairs below ``iou_min`` are split back apart."""
    if not pred or not gt:
        return FrameMatch([], list(range(len(pred))), list(range(len(gt))))
    ious = iou_matrix(pred, gt)
    a = hungarian(1.0 - ious)
    pairs = []
    um_p, um_g = set(a.unmatched_rows), set(a.unmatched_cols)
    for p, g in a.pairs:
        if ious[p, g] >= iou_min:
            pairs.append((p, g))
        else:
            um_p.add(p)
            um_g.add(g)
    return FrameMatch(sorted(pairs), sorted(um_p), sorted(um_g))


def _check_range(output: TrackOutput, gt: GroundTruth) -> None:
    if output.num_frames != gt.total_frames:
        raise FrameRangeMismatch(f"tracks cover {output.num_frames} frames, ground truth {gt.total_frames}")
    for fo in output.frames:
        if not 0 <= fo.frame < gt.total_frames:
            raise FrameRangeMismatch(f"track frame {fo.frame} outside ground truth range")


def track_label_map(output: TrackOutput, gt: GroundTruth, iou_min: float = DEFAULT_IOU_MIN) -> Dict[int, str]:
    """One-to-one track id -> gt label mapping maximising agreeing detections.

    Used to score tracker-only runs, where a person keeps the right ID only
    while one track follows them.
    """
    counts: Dict[Tuple[int, str], int] = {}
    for fo in output.frames:
        rows = gt.at(fo.frame)
        m = match_frame([e.bbox for e in fo.entries], [b for _, b in rows], iou_min)
        for p, g in m.pairs:
            key = (fo.entries[p].track_id, rows[g][0])
            counts[key] = counts.get(key, 0) + 1
    if not counts:
        return {}
    tids = sorted({k[0] for k in counts})
    labels = sorted({k[1] for k in counts})
    benefit = np.zeros((len(tids), len(labels)))
    for (t, lab), n in counts.items():
        benefit[tids.index(t), labels.index(lab)] = n
    a = hungarian(benefit.max() - benefit)
    return {tids[r]: labels[c] for r, c in a.pairs if benefit[r, c] > 0}


def score(output: TrackOutput, gt: GroundTruth, iou_min: float = DEFAULT_IOU_MIN,
          id_source: str = "identity") -> EvalReport:
    """Compare tracked identities with ground truth frame by frame.

    ``id_source="identity"`` uses the labels assigned by re-identification;
    ``"track"`` scores raw track ids through ``track_label_map``. A matched
    detection with the wrong (or Unknown) label and an unmatched gt
    detection both count as incorrect.
    """
    if id_source not in ("identity", "track"):
        raise ValueError(f"unknown id_source {id_source!r}")
    _check_range(output, gt)
    mapping = track_label_map(output, gt, iou_min) if id_source == "track" else {}
    by_frame = {fo.frame: fo for fo in output.frames}
    incorrect = fn = fp = 0
    per_frame: List[FrameScore] = []
    for f in range(gt.total_frames):
        rows = gt.at(f)
        fo = by_frame.get(f)
        entries = fo.entries if fo is not None else []
        m = match_frame([e.bbox for e in entries], [b for _, b in rows], iou_min)
        bad = len(m.unmatched_gt)
        for p, g in m.pairs:
            if id_source == "track":
                pred_label = mapping.get(entries[p].track_id)
            else:
                pred_label = entries[p].identity.label
            if pred_label != rows[g][0]:
                bad += 1
        incorrect += bad
        fn += len(m.unmatched_gt)
        fp += len(m.unmatched_pred)
        if rows or entries:
            per_frame.append(FrameScore(f, len(rows), bad, len(m.unmatched_gt), len(m.unmatched_pred)))
    total = gt.total_detections
    return EvalReport(
        total_gt_detections=total,
        incorrect_id=incorrect,
        correct_pct=correct_pct(total, incorrect),
        reid_count=output.reid_count,
        reid_events=output.reid_events,
        fn=fn,
        fp=fp,
        id_source=id_source,
        iou_min=iou_min,
        per_frame=per_frame,
    )


def count_det_errors(stream: Iterable[FrameObservations], gt: GroundTruth,
                     iou_min: float = DEFAULT_IOU_MIN) -> Tuple[int, int]:
    """Identity-blind detector accounting: (missed gt boxes, spurious detections)."""
    seen = set()
    fn = fp = 0
    for obs in stream:
        seen.add(obs.frame)
        rows = gt.at(obs.frame)
        m = match_frame([d.bbox for d in obs.detections], [b for _, b in rows], iou_min)
        fn += len(m.unmatched_gt)
        fp += len(m.unmatched_pred)
    for f, rows in gt.frames.items():
        if f not in seen:
            fn += len(rows)
    return fn, fp


TABLE_COLUMNS = ("DT", "Tracker", "Result", "ReIDer", "ReID Count", "Incorrect ID", "Result")


def render_table(rows: Sequence[dict]) -> str:
    """Plain-text comparison table, one row per tracker run.

    Each row dict carries: dt, tracker, tracker_result, reider, reid_count,
    incorrect_id, result (pre-formatted strings or numbers).
    """
    keys = ("dt", "tracker", "tracker_result", "reider", "reid_count", "incorrect_id", "result")
    body = [[str(r.get(k, "")) for k in keys] for r in rows]
    widths = [max([len(h)] + [len(b[i]) for b in body]) for i, h in enumerate(TABLE_COLUMNS)]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    out = [sep, line(TABLE_COLUMNS), sep]
    out += [line(b) for b in body]
    out.append(sep)
    return "\n".join(out)
