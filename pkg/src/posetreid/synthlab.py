"""Deterministic desk-scale scenarios: trajectories, ground truth, noisy detections, embeddings.

Agents live in horizontal lanes and drift back and forth. Events override
that default motion:

* ``Crossing`` brings two agents from adjacent lanes onto a shared row where
  they walk past each other in opposite directions, necks 5 px apart.
* ``ExitReenter`` walks an agent off the nearest side of the image and back.

Every segment is linear in time, joined by linear transitions whose speed
is capped, so trajectories are piecewise linear with bounded speed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import NUM_KEYPOINTS, BBox, Detection, FrameObservations, Keypoints, keypoints_to_bbox
from .errors import InvalidSpec, UnknownPreset
from .evalkit import GroundTruth
from .primitives import iou
from .reid import GallerySample

MAX_SPEED = 8.0
NECK_FRAC = 0.2
CROSS_OFFSET = 5.0  # neck separation across the shared row

# unit-box template, BODY_25 order; extremes sit at 1/12 and 11/12 so that a
# 10% pad of the keypoint extent reproduces the full box
_A, _B = 1.0 / 12.0, 11.0 / 12.0
KEYPOINT_TEMPLATE = np.array([
    (0.50, 0.12), (0.50, NECK_FRAC), (0.35, 0.21), (0.28, 0.35), (_A, 0.48),
    (0.65, 0.21), (0.72, 0.35), (_B, 0.48), (0.50, 0.50), (0.42, 0.50),
    (0.40, 0.70), (0.40, 0.88), (0.58, 0.50), (0.60, 0.70), (0.60, 0.88),
    (0.47, _A), (0.53, _A), (0.44, 0.11), (0.56, 0.11), (0.65, _B),
    (0.68, 0.91), (0.58, 0.90), (0.35, _B), (0.32, 0.91), (0.42, 0.90),
])
assert KEYPOINT_TEMPLATE.shape == (NUM_KEYPOINTS, 2)


@dataclass(frozen=True)
class Crossing:
    agents: Tuple[int, int]
    start: int
    end: int

    kind = "crossing"


@dataclass(frozen=True)
class ExitReenter:
    agent: int
    exit_frame: int
    reenter_frame: int

    kind = "exit_reenter"


Event = Union[Crossing, ExitReenter]


@dataclass(frozen=True)
class EmbeddingSpec:
    dim: int = 64
    # distance between class means in units of the within-class spread
    # (noise_std * sqrt(dim), the RMS distance of a sample to its mean)
    class_sep: float = 8.0
    noise_std: float = 0.05


@dataclass(frozen=True)
class ScenarioSpec:
    agents: int
    frames: int
    image_size: Tuple[int, int] = (1920, 1080)
    events: Tuple[Event, ...] = ()
    det_noise: float = 0.5
    drop_rate: float = 0.0
    fp_rate: float = 0.0
    emb: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    seed: int = 0
    keypoints: bool = True
    occlusion_iou: Optional[float] = None  # hide the rear agent above this overlap
    idle_speed: float = 1.0
    cross_speed: float = 2.0
    transit_speed: float = 7.0
    gallery_per_agent: int = 30

    def to_dict(self) -> dict:
        d = asdict(self)
        d["events"] = [dict(kind=e.kind, **asdict(e)) for e in self.events]
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        events = []
        for e in d.pop("events", []):
            e = dict(e)
            kind = e.pop("kind", None)
            if kind == "crossing":
                events.append(Crossing(tuple(e["agents"]), int(e["start"]), int(e["end"])))
            elif kind == "exit_reenter":
                events.append(ExitReenter(int(e["agent"]), int(e["exit_frame"]), int(e["reenter_frame"])))
            else:
                raise InvalidSpec(f"unknown event kind {kind!r}")
        emb = EmbeddingSpec(**d.pop("emb", {}))
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        try:
            return cls(events=tuple(events), emb=emb, **d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None


@dataclass
class ScenarioBundle:
    gt: GroundTruth
    detections: List[FrameObservations]
    gallery: List[GallerySample]
    spec: ScenarioSpec
    necks: np.ndarray  # (agents, frames, 2), NaN while absent
    labels: List[str]
    class_means: np.ndarray


def agent_label(k: int) -> str:
    return f"p{k + 1}"


def agent_size(k: int) -> Tuple[float, float]:
    return 44.0 + 4.0 * (k % 3), 120.0 + 6.0 * (k % 4)


def neck_to_box(neck, size) -> BBox:
    w, h = size
    return BBox(float(neck[0] - w / 2.0), float(neck[1] - NECK_FRAC * h), w, h)


def validate(spec: ScenarioSpec) -> None:
    if spec.agents < 1 or spec.frames < 1:
        raise InvalidSpec("need at least one agent and one frame")
    if not 0.0 <= spec.drop_rate < 1.0:
        raise InvalidSpec("drop_rate must lie in [0, 1)")
    if spec.fp_rate < 0 or spec.det_noise < 0:
        raise InvalidSpec("fp_rate and det_noise must be non-negative")
    if not spec.emb.class_sep > 0 or spec.emb.noise_std <= 0 or spec.emb.dim < 2:
        raise InvalidSpec("embedding spec needs class_sep > 0, noise_std > 0, dim >= 2")
    if spec.agents + 1 > spec.emb.dim:
        raise InvalidSpec("embedding dim must exceed the number of agents")
    for sp in (spec.idle_speed, spec.cross_speed, spec.transit_speed):
        if not 0 < sp <= MAX_SPEED:
            raise InvalidSpec(f"speeds must lie in (0, {MAX_SPEED}]")
    for e in spec.events:
        if isinstance(e, Crossing):
            a, b = e.agents
            if a == b or not (0 <= a < spec.agents and 0 <= b < spec.agents):
                raise InvalidSpec(f"bad crossing agents {e.agents}")
            if abs(a - b) != 1:
                raise InvalidSpec("crossings must involve agents in adjacent lanes")
            if not 0 <= e.start < e.end < spec.frames:
                raise InvalidSpec(f"crossing span {e.start}..{e.end} outside [0, {spec.frames})")
        elif isinstance(e, ExitReenter):
            if not 0 <= e.agent < spec.agents:
                raise InvalidSpec(f"bad exit agent {e.agent}")
            if not 0 <= e.exit_frame < e.reenter_frame < spec.frames:
                raise InvalidSpec("exit/reenter frames must satisfy 0 <= exit < reenter < frames")
        else:
            raise InvalidSpec(f"unknown event {e!r}")


class _Motion:
    """Default lane motion plus piecewise-linear event overrides for one agent."""

    def __init__(self, spec: ScenarioSpec, k: int):
        W, H = spec.image_size
        self.spec = spec
        self.lo, self.hi = 0.15 * W, 0.85 * W
        if spec.agents > 1:
            self.lane_y = 0.2 * H + k * (0.6 * H / (spec.agents - 1))
        else:
            self.lane_y = 0.5 * H
        span = self.hi - self.lo
        # phase along a triangle wave of period 2 * span
        self.phase = (k + 0.5) / spec.agents * span + (span if k % 2 else 0.0)
        # (start, end, fn) with fn(t) -> (x, y) or None when absent
        self.segments: List[Tuple[int, int, object]] = []

    def default(self, t: float) -> np.ndarray:
        span = self.hi - self.lo
        u = (self.phase + self.spec.idle_speed * t) % (2 * span)
        x = self.lo + (u if u <= span else 2 * span - u)
        return np.array([x, self.lane_y])

    def add(self, start, end, fn):
        for s, e, _ in self.segments:
            if start <= e and s <= end:
                raise InvalidSpec(f"overlapping events for one agent around frames {start}..{end}")
        self.segments.append((start, end, fn))

    def add_linear(self, t0, p0, t1, p1):
        p0, p1 = np.asarray(p0, float), np.asarray(p1, float)

        def fn(t, t0=t0, t1=t1, p0=p0, p1=p1):
            a = (t - t0) / (t1 - t0) if t1 > t0 else 1.0
            return p0 + a * (p1 - p0)

        self.add(t0, t1, fn)

    def transit_frames(self, p_from, p_to) -> int:
        d = float(np.hypot(*(np.asarray(p_to) - np.asarray(p_from))))
        # default motion drifts by idle_speed while we travel
        return max(1, int(math.ceil(d / (self.spec.transit_speed - self.spec.idle_speed))) + 1)

    def enter_from_default(self, t_arrive: int, p: np.ndarray) -> int:
        r = self.transit_frames(self.default(t_arrive), p)
        t0 = t_arrive - r
        self.add_linear(t0, self.default(t0), t_arrive, p)
        return t0

    def return_to_default(self, t_leave: int, p: np.ndarray) -> int:
        r = self.transit_frames(p, self.default(t_leave))
        t1 = t_leave + r
        self.add_linear(t_leave, p, t1, self.default(t1))
        return t1

    def position(self, t: int) -> Optional[np.ndarray]:
        for s, e, fn in self.segments:
            if s <= t <= e:
                return fn(t)
        return self.default(t)


def _build_motions(spec: ScenarioSpec) -> List[_Motion]:
    W, _ = spec.image_size
    motions = [_Motion(spec, k) for k in range(spec.agents)]
    for e in sorted(spec.events, key=lambda e: (e.start if isinstance(e, Crossing) else e.exit_frame)):
        if isinstance(e, Crossing):
            a, b = sorted(e.agents)
            ma, mb = motions[a], motions[b]
            mid = (e.start + e.end) / 2.0
            half = spec.cross_speed * (e.end - e.start) / 2.0
            xm = (ma.default(mid)[0] + mb.default(mid)[0]) / 2.0
            xm = min(max(xm, ma.lo + half), ma.hi - half)
            ym = (ma.lane_y + mb.lane_y) / 2.0
            pa0, pa1 = (xm - half, ym - CROSS_OFFSET / 2), (xm + half, ym - CROSS_OFFSET / 2)
            pb0, pb1 = (xm + half, ym + CROSS_OFFSET / 2), (xm - half, ym + CROSS_OFFSET / 2)
            for m, p0, p1 in ((ma, pa0, pa1), (mb, pb0, pb1)):
                p0, p1 = np.array(p0), np.array(p1)
                m.enter_from_default(e.start - 1, p0)
                m.add_linear(e.start, p0, e.end, p1)
                m.return_to_default(e.end + 1, p1)
        else:
            m = motions[e.agent]
            w = agent_size(e.agent)[0]
            x_here = m.default(e.exit_frame)[0]
            x_out = -(w / 2.0 + 1.0) if x_here < W / 2 else W + w / 2.0 + 1.0
            out = np.array([x_out, m.lane_y])
            m.enter_from_default(e.exit_frame - 1, out)
            m.add(e.exit_frame, e.reenter_frame - 1, lambda t: None)
            m.return_to_default(e.reenter_frame, out)
    for m in motions:
        for s, e, _ in m.segments:
            if s < 0 or e >= spec.frames + 200:
                raise InvalidSpec(f"event transitions run outside the video (frames {s}..{e})")
    return motions


def trajectories(spec: ScenarioSpec) -> np.ndarray:
    """Neck positions, shape (agents, frames, 2); NaN while an agent is out of view."""
    validate(spec)
    W, H = spec.image_size
    motions = _build_motions(spec)
    out = np.full((spec.agents, spec.frames, 2), np.nan)
    for k, m in enumerate(motions):
        for t in range(spec.frames):
            p = m.position(t)
            if p is not None and 0.0 <= p[0] < W and 0.0 <= p[1] < H:
                out[k, t] = p
    return out


def embedding_means(n: int, emb: EmbeddingSpec, seed: int) -> np.ndarray:
    """``n`` class means whose pairwise distance is exactly class_sep * spread."""
    if n > emb.dim:
        raise InvalidSpec("more classes than embedding dimensions")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE5]))
    q, _ = np.linalg.qr(rng.normal(size=(emb.dim, emb.dim)))
    scale = emb.class_sep * emb.noise_std * math.sqrt(emb.dim) / math.sqrt(2.0)
    return scale * q[:, :n].T


def _f32(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def _keypoints(box: BBox, rng, noise: float) -> np.ndarray:
    pts = np.empty((NUM_KEYPOINTS, 3))
    pts[:, 0] = box.x + KEYPOINT_TEMPLATE[:, 0] * box.w
    pts[:, 1] = box.y + KEYPOINT_TEMPLATE[:, 1] * box.h
    if noise > 0:
        pts[:, :2] += rng.normal(0.0, noise, size=(NUM_KEYPOINTS, 2))
    pts[:, 2] = 0.9
    return pts


def generate(spec: ScenarioSpec) -> ScenarioBundle:
    """Build the full scenario. Same spec, same bundle, bit for bit."""
    validate(spec)
    necks = trajectories(spec)
    W, H = spec.image_size
    K = spec.agents
    labels = [agent_label(k) for k in range(K)]
    sizes = [agent_size(k) for k in range(K)]
    ss = np.random.SeedSequence(spec.seed)
    r_noise, r_drop, r_fp, r_emb, r_gal, r_order, r_conf = (np.random.default_rng(s) for s in ss.spawn(7))

    means = embedding_means(K + 1, spec.emb, spec.seed)
    spur_mean = 1.5 * means[K]  # farther than class_sep from every class mean
    means = means[:K]
    sigma = spec.emb.noise_std
    dim = spec.emb.dim

    gt_frames: Dict[int, List[Tuple[str, BBox]]] = {}
    stream: List[FrameObservations] = []
    for t in range(spec.frames):
        present = [k for k in range(K) if not np.isnan(necks[k, t, 0])]
        gt_boxes = {k: neck_to_box(necks[k, t], sizes[k]) for k in present}
        if present:
            gt_frames[t] = [(labels[k], gt_boxes[k]) for k in present]
        hidden = set()
        if spec.occlusion_iou is not None:
            for i, a in enumerate(present):
                for b in present[i + 1:]:
                    if iou(gt_boxes[a], gt_boxes[b]) > spec.occlusion_iou:
                        # the agent whose feet are higher in the image is further away
                        ba, bb = gt_boxes[a], gt_boxes[b]
                        hidden.add(a if ba.y + ba.h < bb.y + bb.h else b)
        dets: List[Detection] = []
        for k in present:
            # draw every stream each frame so a drop does not shift later noise
            dropped = r_drop.random() < spec.drop_rate
            kp = _keypoints(gt_boxes[k], r_noise, spec.det_noise)
            box_jit = r_noise.normal(0.0, spec.det_noise, size=4)
            emb = _f32(means[k] + r_emb.normal(0.0, sigma, size=dim))
            conf = float(np.round(r_conf.uniform(0.5, 1.0), 6))
            if dropped or k in hidden:
                continue
            dets.append(_make_det(t, gt_boxes[k], kp, box_jit, conf, emb, spec.keypoints))
        n_fp = int(r_fp.poisson(spec.fp_rate)) if spec.fp_rate > 0 else 0
        for _ in range(n_fp):
            spot = _far_spot(necks, t, W, H, r_fp)
            if spot is None:
                continue
            size = (float(r_fp.uniform(40, 56)), float(r_fp.uniform(110, 140)))
            box = neck_to_box(spot, size)
            kp = _keypoints(box, r_noise, spec.det_noise)
            box_jit = r_noise.normal(0.0, spec.det_noise, size=4)
            emb = _f32(spur_mean + r_emb.normal(0.0, sigma, size=dim))
            conf = float(np.round(r_conf.uniform(0.5, 1.0), 6))
            dets.append(_make_det(t, box, kp, box_jit, conf, emb, spec.keypoints))
        order = r_order.permutation(len(dets))
        stream.append(FrameObservations(t, tuple(dets[i] for i in order)))

    gallery = [
        GallerySample(labels[k], _f32(means[k] + r_gal.normal(0.0, sigma, size=dim)))
        for k in range(K)
        for _ in range(spec.gallery_per_agent)
    ]
    gt = GroundTruth(gt_frames, spec.frames)
    return ScenarioBundle(gt, stream, gallery, spec, necks, labels, means)


def _make_det(t, gt_box: BBox, kp, box_jit, conf, emb, with_kps: bool) -> Detection:
    if with_kps:
        kp = np.round(kp, 4)
        return Detection(t, keypoints_to_bbox(kp), conf, Keypoints(kp), emb)
    x = gt_box.x + box_jit[0]
    y = gt_box.y + box_jit[1]
    w = max(gt_box.w + box_jit[2], 1.0)
    h = max(gt_box.h + box_jit[3], 1.0)
    return Detection(t, BBox(*(float(np.round(v, 4)) for v in (x, y, w, h))), conf, None, emb)


def _far_spot(necks, t, W, H, rng, clearance=250.0, tries=50):
    """A neck position at least ``clearance`` px from every agent around frame t."""
    lo, hi = max(t - 1, 0), min(t + 2, necks.shape[1])
    near = necks[:, lo:hi].reshape(-1, 2)
    near = near[~np.isnan(near[:, 0])]
    for _ in range(tries):
        p = np.array([rng.uniform(0.05 * W, 0.95 * W), rng.uniform(0.1 * H, 0.8 * H)])
        if len(near) == 0 or np.min(np.hypot(*(near - p).T)) > clearance:
            return p
    return None


PRESETS = ("normal_high", "hard_surveillance")


def preset(name: str) -> ScenarioSpec:
    """Fixed scenario structures.

    normal_high: 3 agents in view for all 455 frames; agents 2 and 3 cross once.
    hard_surveillance: 5 agents over 876 frames; agents p4 and p5 walk out of
    view and come back, crossings happen before, between and after the exits
    (p4 and p5 cross each other once both are back).
    Agent speeds never exceed 8 px/frame.
    """
    if name == "normal_high":
        return ScenarioSpec(
            agents=3,
            frames=455,
            events=(Crossing((1, 2), 200, 260),),
            det_noise=0.3,
            drop_rate=0.0,
            fp_rate=0.005,
            emb=EmbeddingSpec(dim=64, class_sep=8.0, noise_std=0.05),
            seed=455,
        )
    if name == "hard_surveillance":
        return ScenarioSpec(
            agents=5,
            frames=876,
            events=(
                Crossing((1, 2), 100, 160),
                Crossing((0, 1), 370, 430),
                ExitReenter(4, 380, 520),
                ExitReenter(3, 440, 570),
                Crossing((3, 4), 800, 860),
            ),
            det_noise=0.5,
            drop_rate=0.01,
            fp_rate=0.03,
            emb=EmbeddingSpec(dim=64, class_sep=8.0, noise_std=0.05),
            seed=876,
        )
    raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
