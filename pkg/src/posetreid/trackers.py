"""Centroid, SORT and DeepSORT-style trackers behind one ``step`` contract.

Each step consumes one frame of detections and returns a StepResult that
gives every tracked detection a track id. Trackers own their track list;
identities are written onto tracks by the pipeline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple, Union

import numpy as np

from .core import UNKNOWN, BBox, FrameObservations, Identity, Point, representative_point
from .primitives import (
    DEFAULT_KALMAN,
    KalmanParams,
    KalmanState,
    hungarian,
    iou,
    iou_matrix,
    kf_init,
    kf_predict,
    kf_update,
    pairwise_distances,
)


@dataclass(frozen=True)
class CentroidConfig:
    max_dist: float = 50.0

    kind = "centroid"

    def __post_init__(self):
        if not self.max_dist > 0:
            raise ValueError("max_dist must be positive")


@dataclass(frozen=True)
class SortConfig:
    max_age: int = 1
    min_hits: int = 3
    iou_thresh: float = 0.3
    kalman: KalmanParams = DEFAULT_KALMAN

    kind = "sort"

    def __post_init__(self):
        if self.max_age <= 0 or self.min_hits <= 0 or not self.iou_thresh > 0:
            raise ValueError("SORT thresholds must be positive")


@dataclass(frozen=True)
class DeepSortConfig:
    nn_budget: int = 100
    nms_overlap: float = 0.5
    max_cos_dist: float = 0.1
    max_age: int = 1
    min_hits: int = 3
    iou_thresh: float = 0.3
    kalman: KalmanParams = DEFAULT_KALMAN

    kind = "deepsort"

    def __post_init__(self):
        if (
            self.nn_budget <= 0
            or not self.nms_overlap > 0
            or not self.max_cos_dist > 0
            or self.max_age <= 0
            or self.min_hits <= 0
            or not self.iou_thresh > 0
        ):
            raise ValueError("DeepSORT thresholds must be positive")

    @property
    def sort(self) -> SortConfig:
        return SortConfig(self.max_age, self.min_hits, self.iou_thresh, self.kalman)


TrackerConfig = Union[CentroidConfig, SortConfig, DeepSortConfig]


@dataclass
class Track:
    track_id: int
    bbox: BBox
    repr_point: Point
    identity: Identity = UNKNOWN
    kstate: Optional[KalmanState] = None
    hits: int = 1
    hit_streak: int = 1
    age_since_update: int = 0
    appearance_gallery: Deque[np.ndarray] = field(default_factory=deque)
    confirmed: bool = False

    def forget_appearance(self) -> None:
        """Drop all but the newest appearance sample (after a relabel)."""
        while len(self.appearance_gallery) > 1:
            self.appearance_gallery.popleft()


@dataclass(frozen=True)
class Assoc:
    det_index: int
    track_id: int
    is_new_track: bool
    # centroid only: the previous track this detection also claimed
    parent_id: Optional[int] = None

    @property
    def claimed_id(self) -> int:
        return self.parent_id if self.parent_id is not None else self.track_id


@dataclass
class StepResult:
    assignments: List[Assoc] = field(default_factory=list)
    retired: List[int] = field(default_factory=list)
    suppressed: List[int] = field(default_factory=list)

    def track_of(self, det_index: int) -> Optional[int]:
        for a in self.assignments:
            if a.det_index == det_index:
                return a.track_id
        return None


@dataclass
class TrackerState:
    tracks: List[Track] = field(default_factory=list)
    next_id: int = 1

    def new_id(self) -> int:
        tid = self.next_id
        self.next_id += 1
        return tid

    def get(self, track_id: int) -> Optional[Track]:
        for t in self.tracks:
            if t.track_id == track_id:
                return t
        return None


def centroid_step(state: TrackerState, obs: FrameObservations, cfg: CentroidConfig) -> StepResult:
    """Nearest previous representative point per detection, independently.

    Several detections may claim one previous track. The closest claimant
    keeps the id; the others get fresh ids whose ``parent_id`` records the
    claim, so the duplicate stays visible to the pipeline.
    """
    prev = sorted(state.tracks, key=lambda t: t.track_id)
    points = [representative_point(d) for d in obs.detections]
    dist = pairwise_distances([t.repr_point for t in prev], points)
    claims: Dict[int, List[Tuple[float, int]]] = {}
    claim_of: List[Optional[int]] = []
    for j in range(len(points)):
        if len(prev) == 0:
            claim_of.append(None)
            continue
        i = int(np.argmin(dist[:, j]))  # first minimum, lowest track id
        if dist[i, j] <= cfg.max_dist:
            claim_of.append(i)
            claims.setdefault(i, []).append((float(dist[i, j]), j))
        else:
            claim_of.append(None)

    keeper = {i: min(c)[1] for i, c in claims.items()}
    result = StepResult()
    new_tracks: List[Track] = []
    for j, det in enumerate(obs.detections):
        i = claim_of[j]
        if i is None:
            tid = state.new_id()
            new_tracks.append(Track(tid, det.bbox, points[j], confirmed=True))
            result.assignments.append(Assoc(j, tid, True))
        elif keeper[i] == j:
            old = prev[i]
            new_tracks.append(
                Track(old.track_id, det.bbox, points[j], old.identity, hits=old.hits + 1,
                      hit_streak=old.hit_streak + 1, confirmed=True)
            )
            result.assignments.append(Assoc(j, old.track_id, False))
        else:
            old = prev[i]
            tid = state.new_id()
            new_tracks.append(
                Track(tid, det.bbox, points[j], old.identity, hits=old.hits + 1,
                      hit_streak=old.hit_streak + 1, confirmed=True)
            )
            result.assignments.append(Assoc(j, tid, False, parent_id=old.track_id))
    result.retired = [prev[i].track_id for i in range(len(prev)) if i not in claims]
    state.tracks = sorted(new_tracks, key=lambda t: t.track_id)
    return result


def _predict_all(state: TrackerState, cfg: SortConfig) -> None:
    for t in state.tracks:
        t.kstate = kf_predict(t.kstate, cfg.kalman)
        t.age_since_update += 1
        if t.age_since_update > 1:
            t.hit_streak = 0


def _iou_match(tracks: List[Track], dets, det_idx: List[int], thresh: float):
    """Hungarian on 1 - IoU between predicted track boxes and detections."""
    if not tracks or not det_idx:
        return [], list(range(len(tracks))), list(det_idx)
    ious = iou_matrix([t.kstate.bbox() for t in tracks], [dets[j].bbox for j in det_idx])
    a = hungarian(1.0 - ious)
    pairs, um_t, um_d = [], set(a.unmatched_rows), set(a.unmatched_cols)
    for r, c in a.pairs:
        if ious[r, c] < thresh:
            um_t.add(r)
            um_d.add(c)
        else:
            pairs.append((r, det_idx[c]))
    return pairs, sorted(um_t), [det_idx[c] for c in sorted(um_d)]


def _apply_update(t: Track, det, cfg: SortConfig) -> None:
    t.kstate = kf_update(t.kstate, det.bbox, cfg.kalman)
    t.bbox = det.bbox
    t.repr_point = representative_point(det)
    t.hits += 1
    t.hit_streak += 1
    t.age_since_update = 0
    if t.hit_streak >= cfg.min_hits:
        t.confirmed = True


def _finish(state: TrackerState, obs, cfg: SortConfig, matched: Dict[int, int], result: StepResult,
            skip: set, nn_budget: Optional[int] = None) -> StepResult:
    """Spawn tracks for leftover detections, retire stale ones, fill the result."""
    for j in range(len(obs.detections)):
        if j in skip or j in matched:
            continue
        det = obs.detections[j]
        t = Track(state.new_id(), det.bbox, representative_point(det),
                  kstate=kf_init(det.bbox, cfg.kalman), confirmed=cfg.min_hits <= 1)
        if nn_budget is not None:
            t.appearance_gallery = deque(maxlen=nn_budget)
            if det.embedding is not None:
                t.appearance_gallery.append(det.embedding)
        state.tracks.append(t)
        matched[j] = t.track_id
        result.assignments.append(Assoc(j, t.track_id, True))
    keep = []
    for t in state.tracks:
        if t.age_since_update > cfg.max_age or (t.age_since_update > 0 and not t.confirmed):
            result.retired.append(t.track_id)
        else:
            keep.append(t)
    state.tracks = keep
    result.assignments.sort(key=lambda a: a.det_index)
    return result


def sort_step(state: TrackerState, obs: FrameObservations, cfg: SortConfig) -> StepResult:
    """Kalman predict, IoU Hungarian with gating, update, spawn, retire.

    Tentative tracks get ids straight away; a tentative track that misses a
    frame is dropped, a confirmed one survives up to ``max_age`` misses.
    """
    return _sort_core(state, obs, cfg, skip=set())


def _sort_core(state, obs, cfg: SortConfig, skip: set, nn_budget=None) -> StepResult:
    _predict_all(state, cfg)
    det_idx = [j for j in range(len(obs.detections)) if j not in skip]
    pairs, _, _ = _iou_match(state.tracks, obs.detections, det_idx, cfg.iou_thresh)
    result = StepResult(suppressed=sorted(skip))
    matched: Dict[int, int] = {}
    for r, j in pairs:
        t = state.tracks[r]
        _apply_update(t, obs.detections[j], cfg)
        matched[j] = t.track_id
        result.assignments.append(Assoc(j, t.track_id, False))
    return _finish(state, obs, cfg, matched, result, skip, nn_budget)


def nms(obs: FrameObservations, overlap: float) -> List[int]:
    """Indices of detections suppressed by a higher-confidence overlapping one."""
    order = sorted(range(len(obs.detections)), key=lambda j: (-obs.detections[j].conf, j))
    kept, dropped = [], []
    for j in order:
        b = obs.detections[j].bbox
        if any(iou(b, obs.detections[k].bbox) > overlap for k in kept):
            dropped.append(j)
        else:
            kept.append(j)
    return sorted(dropped)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.where(n > 0, n, 1.0)


def _appearance_costs(t: Track, embs: np.ndarray) -> np.ndarray:
    """Smallest cosine distance from each embedding row to the track's samples."""
    g = _unit_rows(np.asarray(t.appearance_gallery, dtype=np.float64))
    return np.clip(1.0 - np.max(_unit_rows(embs) @ g.T, axis=1), 0.0, 2.0)


def deepsort_step(state: TrackerState, obs: FrameObservations, cfg: DeepSortConfig) -> StepResult:
    """Appearance cascade for confirmed tracks, then SORT-style IoU matching.

    Detections overlapping a more confident one by more than ``nms_overlap``
    are suppressed first and receive no track. Without embeddings the first
    stage is empty and the step reduces to ``sort_step``.
    """
    scfg = cfg.sort
    skip = set(nms(obs, cfg.nms_overlap))
    _predict_all(state, scfg)
    result = StepResult(suppressed=sorted(skip))
    matched: Dict[int, int] = {}
    free_dets = [j for j in range(len(obs.detections)) if j not in skip]
    emb_dets = [j for j in free_dets if obs.detections[j].embedding is not None]
    used_tracks = set()

    candidates = [t for t in state.tracks if t.confirmed and len(t.appearance_gallery) > 0]
    for age in sorted({t.age_since_update for t in candidates}):
        level = [t for t in candidates if t.age_since_update == age]
        dets = [j for j in emb_dets if j not in matched]
        if not dets:
            break
        embs = np.asarray([obs.detections[j].embedding for j in dets], dtype=np.float64)
        cost = np.stack([_appearance_costs(t, embs) for t in level])
        gated = np.where(cost > cfg.max_cos_dist, 3.0, cost)
        a = hungarian(gated)
        for r, c in a.pairs:
            if cost[r, c] <= cfg.max_cos_dist:
                t = level[r]
                j = dets[c]
                _apply_update(t, obs.detections[j], scfg)
                t.appearance_gallery.append(obs.detections[j].embedding)
                matched[j] = t.track_id
                used_tracks.add(t.track_id)
                result.assignments.append(Assoc(j, t.track_id, False))

    rest_tracks = [t for t in state.tracks if t.track_id not in used_tracks]
    rest_dets = [j for j in free_dets if j not in matched]
    pairs, _, _ = _iou_match(rest_tracks, obs.detections, rest_dets, scfg.iou_thresh)
    for r, j in pairs:
        t = rest_tracks[r]
        det = obs.detections[j]
        _apply_update(t, det, scfg)
        if det.embedding is not None:
            t.appearance_gallery.append(det.embedding)
        matched[j] = t.track_id
        result.assignments.append(Assoc(j, t.track_id, False))
    return _finish(state, obs, scfg, matched, result, skip, nn_budget=cfg.nn_budget)


class Tracker:
    """Stateful single-stream wrapper around one of the step functions."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.state = TrackerState()

    @property
    def kind(self) -> str:
        return self.cfg.kind

    @property
    def tracks(self) -> List[Track]:
        return self.state.tracks

    def get(self, track_id: int) -> Optional[Track]:
        return self.state.get(track_id)

    def step(self, obs: FrameObservations) -> StepResult:
        if isinstance(self.cfg, CentroidConfig):
            return centroid_step(self.state, obs, self.cfg)
        if isinstance(self.cfg, DeepSortConfig):
            return deepsort_step(self.state, obs, self.cfg)
        if isinstance(self.cfg, SortConfig):
            return sort_step(self.state, obs, self.cfg)
        raise TypeError(f"unsupported tracker config {self.cfg!r}")


def make_tracker(cfg: TrackerConfig) -> Tracker:
    return Tracker(cfg)


def default_config(kind: str) -> TrackerConfig:
    try:
        return {"centroid": CentroidConfig, "sort": SortConfig, "deepsort": DeepSortConfig}[kind]()
    except KeyError:
        raise ValueError(f"unknown tracker kind {kind!r}") from None
