"""Frame-by-frame orchestration: tracker step, then the three re-identification rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import UNKNOWN, BBox, FrameObservations, Identity, Point, representative_point
from .errors import FrameRangeMismatch, OutOfOrderFrame
from .primitives import euclidean
from .reid import RbfSvmModel
from .trackers import StepResult, Tracker, TrackerConfig, make_tracker


class Rule(str, enum.Enum):
    NEW_OR_UNKNOWN = "NewOrUnknown"
    DUPLICATE_ID = "DuplicateId"
    SPEED_LIMIT = "SpeedLimit"


@dataclass(frozen=True)
class Outcome:
    track_id: int
    old: Identity
    new: Identity
    confidence: Optional[float]  # None when the detection had no embedding


@dataclass(frozen=True)
class ReidEvent:
    frame: int
    rule: Rule
    track_ids: Tuple[int, ...]
    outcomes: Tuple[Outcome, ...]


@dataclass(frozen=True)
class PipelineConfig:
    tracker: TrackerConfig
    model: Optional[RbfSvmModel] = None
    min_conf: Optional[float] = None  # overrides the model's threshold when set
    speed_limit: Optional[float] = None

    def __post_init__(self):
        if self.speed_limit is not None and not self.speed_limit > 0:
            raise ValueError("speed_limit must be positive when given")

    def classifier(self) -> Optional[RbfSvmModel]:
        if self.model is None:
            return None
        if self.min_conf is None:
            return self.model
        return self.model.with_min_conf(self.min_conf)


@dataclass(frozen=True)
class TrackedBox:
    identity: Identity
    bbox: BBox
    track_id: int


@dataclass
class FrameOutput:
    frame: int
    entries: List[TrackedBox] = field(default_factory=list)


@dataclass
class TrackOutput:
    frames: List[FrameOutput] = field(default_factory=list)
    events: List[ReidEvent] = field(default_factory=list)
    reid_count: int = 0
    num_frames: int = 0

    @property
    def reid_events(self) -> int:
        return len(self.events)


@dataclass
class _Candidate:
    track_id: int
    det_index: int
    ranked: List[Tuple[str, float]]  # empty when no embedding

    @property
    def top(self) -> Tuple[Optional[str], float]:
        return self.ranked[0] if self.ranked else (None, -1.0)


def resolve_duplicates(
    candidates: Sequence[Tuple[int, Sequence[Tuple[str, float]]]],
    min_conf: float,
    held_elsewhere: Iterable[str] = (),
) -> Dict[int, Identity]:
    """Hand out labels to re-classified tracks so no label is held twice.

    ``candidates`` are ``(track_id, ranked labels)`` pairs, each ranking
    sorted by confidence. Candidates are served in order of their best
    confidence (descending, ties to the lower track id); each takes its
    highest-ranked label that clears ``min_conf`` and is not already held
    by an earlier candidate or by a track outside the group, else Unknown.
    """
    taken = set(held_elsewhere)
    order = sorted(candidates, key=lambda c: (-(c[1][0][1] if c[1] else -1.0), c[0]))
    out: Dict[int, Identity] = {}
    for tid, ranked in order:
        ident = UNKNOWN
        for label, conf in ranked:
            if conf < min_conf:
                break
            if label not in taken:
                ident = Identity(label)
                taken.add(label)
                break
        out[tid] = ident
    return out


class Pipeline:
    """One stream, strictly increasing frames."""

    def __init__(self, cfg: PipelineConfig, monitor: Optional[Callable[["Pipeline", FrameOutput], None]] = None):
        self.cfg = cfg
        self.tracker: Tracker = make_tracker(cfg.tracker)
        self.model = cfg.classifier()
        self.identities: Dict[int, Identity] = {}
        self.last_points: Dict[int, Point] = {}
        self.last_frame: Optional[int] = None
        self.reid_count = 0
        self.monitor = monitor

    def _classify(self, obs: FrameObservations, det_index: int) -> List[Tuple[str, float]]:
        emb = obs.detections[det_index].embedding
        if emb is None:
            return []
        return self.model.ranked(emb)

    def _event(self, frame, rule, outcomes: List[Outcome], events: List[ReidEvent]):
        ev = ReidEvent(frame, rule, tuple(o.track_id for o in outcomes), tuple(outcomes))
        events.append(ev)
        self.reid_count += len(ev.track_ids)

    def process_frame(self, obs: FrameObservations) -> Tuple[FrameOutput, List[ReidEvent]]:
        if self.last_frame is not None and obs.frame <= self.last_frame:
            raise OutOfOrderFrame(f"frame {obs.frame} after frame {self.last_frame}")
        self.last_frame = obs.frame
        step = self.tracker.step(obs)
        events: List[ReidEvent] = []

        for tid in step.retired:
            self.identities.pop(tid, None)
            self.last_points.pop(tid, None)
        det_of: Dict[int, int] = {}
        for a in step.assignments:
            det_of[a.track_id] = a.det_index
            if a.parent_id is not None:
                self.identities[a.track_id] = self.identities.get(a.parent_id, UNKNOWN)
            elif a.is_new_track:
                self.identities[a.track_id] = UNKNOWN
            else:
                self.identities.setdefault(a.track_id, UNKNOWN)
        live = [a.track_id for a in step.assignments]

        if self.model is not None:
            # rule 1: new or unknown tracks, one event each
            for a in step.assignments:
                tid = a.track_id
                if not (a.is_new_track or not self.identities[tid].is_known):
                    continue
                old = self.identities[tid]
                ranked = self._classify(obs, a.det_index)
                new = resolve_duplicates([(tid, ranked)], self.model.min_conf)[tid] if ranked else UNKNOWN
                self.identities[tid] = new
                conf = ranked[0][1] if ranked else None
                self._event(obs.frame, Rule.NEW_OR_UNKNOWN, [Outcome(tid, old, new, conf)], events)

            self._rule_duplicates(obs, live, det_of, events)

            # rule 3: optional speed limit
            if self.cfg.speed_limit is not None:
                fast = []
                for a in step.assignments:
                    prev = self.last_points.get(a.track_id)
                    if prev is None:
                        continue
                    if euclidean(prev, representative_point(obs.detections[a.det_index])) > self.cfg.speed_limit:
                        fast.append(a.track_id)
                if fast:
                    held = {str(self.identities[t]) for t in live if t not in fast and self.identities[t].is_known}
                    cands = [(t, self._classify(obs, det_of[t])) for t in fast]
                    resolved = resolve_duplicates(cands, self.model.min_conf, held)
                    outcomes = []
                    for t, ranked in cands:
                        outcomes.append(Outcome(t, self.identities[t], resolved[t], ranked[0][1] if ranked else None))
                        self.identities[t] = resolved[t]
                    self._event(obs.frame, Rule.SPEED_LIMIT, outcomes, events)

        for a in step.assignments:
            self.last_points[a.track_id] = representative_point(obs.detections[a.det_index])
            t = self.tracker.get(a.track_id)
            if t is not None:
                new = self.identities[a.track_id]
                if t.identity.is_known and new.is_known and new != t.identity:
                    # older samples show whoever the track followed before
                    t.forget_appearance()
                t.identity = new
        out = FrameOutput(
            obs.frame,
            [TrackedBox(self.identities[a.track_id], obs.detections[a.det_index].bbox, a.track_id)
             for a in step.assignments],
        )
        if self.monitor is not None:
            self.monitor(self, out)
        return out, events

    def _rule_duplicates(self, obs, live: List[int], det_of: Dict[int, int], events: List[ReidEvent]) -> None:
        holders: Dict[str, List[int]] = {}
        for tid in live:
            ident = self.identities[tid]
            if ident.is_known:
                holders.setdefault(ident.label, []).append(tid)
        for label in sorted(holders):
            group = holders[label]
            # an earlier group may have moved one of these tracks already
            group = [t for t in group if self.identities[t].label == label]
            if len(group) < 2:
                continue
            held = {self.identities[t].label for t in live if t not in group and self.identities[t].is_known}
            cands = [(t, self._classify(obs, det_of[t])) for t in group]
            resolved = resolve_duplicates(cands, self.model.min_conf, held)
            outcomes = []
            for t, ranked in cands:
                outcomes.append(Outcome(t, self.identities[t], resolved[t], ranked[0][1] if ranked else None))
                self.identities[t] = resolved[t]
            self._event(obs.frame, Rule.DUPLICATE_ID, outcomes, events)


def run_stream(stream: Iterable[FrameObservations], cfg: PipelineConfig, num_frames: Optional[int] = None,
               monitor=None) -> TrackOutput:
    """Fold ``process_frame`` over a detection stream."""
    pipe = Pipeline(cfg, monitor=monitor)
    out = TrackOutput()
    for obs in stream:
        frame_out, events = pipe.process_frame(obs)
        out.frames.append(frame_out)
        out.events.extend(events)
    out.reid_count = pipe.reid_count
    last = out.frames[-1].frame + 1 if out.frames else 0
    if num_frames is not None and last > num_frames:
        raise FrameRangeMismatch(f"stream reaches frame {last - 1}, beyond the declared {num_frames} frames")
    out.num_frames = last if num_frames is None else num_frames
    return out
