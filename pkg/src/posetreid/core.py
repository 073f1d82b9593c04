"""Domain types shared by every stage: boxes, keypoints, detections, identities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NoVisibleKeypoints

NUM_KEYPOINTS = 25
NECK = 1  # BODY_25 layout
DEFAULT_PAD_FRAC = 0.10

Point = Tuple[float, float]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels, (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent {vals}")

    @property
    def center(self) -> Point:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


@dataclass(frozen=True)
class Keypoints:
    """25 (x, y, conf) rows; conf == 0 marks a missing point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (NUM_KEYPOINTS, 3):
            raise ValueError(f"expected ({NUM_KEYPOINTS}, 3) keypoints, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite keypoint values")
        if np.any(pts[:, 2] < 0) or np.any(pts[:, 2] > 1):
            raise ValueError("keypoint confidence outside [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def visible(self) -> np.ndarray:
        return self.points[:, 2] > 0

    def point(self, index: int) -> Optional[Point]:
        row = self.points[index]
        if row[2] <= 0:
            return None
        return (float(row[0]), float(row[1]))

    def __eq__(self, other):
        if not isinstance(other, Keypoints):
            return NotImplemented
        return bool(np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class Detection:
    frame: int
    bbox: BBox
    conf: float = 1.0
    keypoints: Optional[Keypoints] = None
    embedding: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError("frame index must be non-negative")
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"detection confidence {self.conf} outside [0, 1]")
        if self.keypoints is not None and not self.keypoints.visible.any():
            raise ValueError("keypoints given but none visible")
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=float)
            if emb.ndim != 1 or not np.all(np.isfinite(emb)):
                raise ValueError("embedding must be a finite 1-D vector")
            emb.setflags(write=False)
            object.__setattr__(self, "embedding", emb)

    def without_embedding(self) -> "Detection":
        return Detection(self.frame, self.bbox, self.conf, self.keypoints, None)


@dataclass(frozen=True)
class FrameObservations:
    frame: int
    detections: Tuple[Detection, ...] = ()

    def __post_init__(self):
        dets = tuple(self.detections)
        for d in dets:
            if d.frame != self.frame:
                raise ValueError(f"detection frame {d.frame} inside frame {self.frame}")
        object.__setattr__(self, "detections", dets)

    def __len__(self):
        return len(self.detections)


@dataclass(frozen=True)
class Identity:
    """Known(label) or Unknown (label is None)."""

    label: Optional[str] = None

    def __post_init__(self):
        if self.label is not None and not self.label:
            raise ValueError("a known identity needs a non-empty label")

    @classmethod
    def known(cls, label: str) -> "Identity":
        return cls(label)

    @property
    def is_known(self) -> bool:
        return self.label is not None

    def __str__(self):
        return self.label if self.label is not None else "<unknown>"


UNKNOWN = Identity(None)


def keypoints_to_bbox(kps: Union[Keypoints, np.ndarray], pad_frac: float = DEFAULT_PAD_FRAC) -> BBox:
    """Box around the visible keypoints, padded by ``pad_frac`` of its extent on each side.

    Raises NoVisibleKeypoints when every confidence is zero.
    """
    if pad_frac < 0:
        raise ValueError("pad_frac must be >= 0")
    pts = kps.points if isinstance(kps, Keypoints) else np.asarray(kps, dtype=float)
    vis = pts[pts[:, 2] > 0]
    if len(vis) == 0:
        raise NoVisibleKeypoints("no keypoint with confidence > 0")
    x0, y0 = vis[:, 0].min(), vis[:, 1].min()
    w = vis[:, 0].max() - x0
    h = vis[:, 1].max() - y0
    px, py = pad_frac * w, pad_frac * h
    return BBox(float(x0 - px), float(y0 - py), float(max(w + 2 * px, 0.0)), float(max(h + 2 * py, 0.0)))


def representative_point(det: Detection) -> Point:
    """Neck keypoint when visible, box center otherwise."""
    if det.keypoints is not None:
        neck = det.keypoints.point(NECK)
        if neck is not None:
            return neck
    return det.bbox.center


def as_points(dets: Sequence[Detection]) -> list:
    return [representative_point(d) for d in dets]
