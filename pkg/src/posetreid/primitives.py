"""Association and estimation building blocks used by the trackers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import _backend
from .core import BBox, Point
from .errors import DegenerateBox, ZeroVector


def euclidean(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def pairwise_distances(prev: Sequence[Point], cur: Sequence[Point]) -> np.ndarray:
    """Matrix of euclidean distances, rows follow ``prev`` and columns ``cur``."""
    p = np.asarray(prev, dtype=float).reshape(-1, 2)
    c = np.asarray(cur, dtype=float).reshape(-1, 2)
    diff = p[:, None, :] - c[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_matrix(rows: Sequence[BBox], cols: Sequence[BBox]) -> np.ndarray:
    out = np.zeros((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = iou(a, b)
    return out


@dataclass
class Assignment:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_rows: List[int] = field(default_factory=list)
    unmatched_cols: List[int] = field(default_factory=list)

    def total_cost(self, cost) -> float:
        c = np.asarray(cost, dtype=float)
        return math.fsum(c[r, k] for r, k in self.pairs)


def hungarian(cost) -> Assignment:
    """Minimum-cost one-to-one matching of size min(rows, cols).

    Rectangular input is padded to square with a sentinel of
    10 * max + 1; pairs landing on padding come back as unmatched.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        c = c.reshape(0, 0) if c.size == 0 else c.reshape(1, -1)
    rows, cols = c.shape
    if rows == 0 or cols == 0:
        return Assignment([], list(range(rows)), list(range(cols)))
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    n = max(rows, cols)
    if rows != cols:
        sentinel = 10.0 * float(np.max(np.abs(c))) + 1.0
        square = np.full((n, n), sentinel)
        square[:rows, :cols] = c
    else:
        square = c
    col_of = _backend.lap_square(square)
    pairs, um_rows = [], []
    matched_cols = set()
    for r in range(rows):
        k = int(col_of[r])
        if k < cols:
            pairs.append((r, k))
            matched_cols.add(k)
        else:
            um_rows.append(r)
    um_cols = [k for k in range(cols) if k not in matched_cols]
    return Assignment(pairs, um_rows, um_cols)


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine distance of a zero vector")
    d = 1.0 - float(u @ v) / (nu * nv)
    return min(max(d, 0.0), 2.0)


# --- constant-velocity Kalman filter over [cx, cy, s, r, vcx, vcy, vs] ---

_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)


@dataclass(frozen=True)
class KalmanParams:
    """Noise model. Standard deviations are per frame, in state units."""

    meas_std: Tuple[float, float, float, float] = (1.0, 1.0, 10.0, 0.01)
    # process variance = process_frac * scale**2, scale = measurement std
    # extended to the velocity terms
    process_frac: float = 1e-2
    init_pos_factor: float = 10.0
    init_vel_var: float = 1e4

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.square(self.meas_std))

    @property
    def Q(self) -> np.ndarray:
        m = self.meas_std
        scale = np.array([m[0], m[1], m[2], m[3], m[0], m[1], m[2]])
        return np.diag(self.process_frac * scale**2)

    @property
    def P0(self) -> np.ndarray:
        d = np.concatenate([self.init_pos_factor * np.square(self.meas_std), np.full(3, self.init_vel_var)])
        return np.diag(d)


DEFAULT_KALMAN = KalmanParams()


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray

    def bbox(self) -> BBox:
        return state_to_bbox(self.mean)


def bbox_to_z(b: BBox) -> np.ndarray:
    if b.w <= 0 or b.h <= 0:
        raise DegenerateBox(f"box {b.as_list()} has zero area")
    cx, cy = b.center
    return np.array([cx, cy, b.w * b.h, b.w / b.h])


def state_to_bbox(mean) -> BBox:
    cx, cy, s, r = (float(v) for v in mean[:4])
    s = max(s, 0.0)
    r = max(r, 1e-9)
    w = math.sqrt(s * r)
    h = s / w if w > 0 else 0.0
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def _sym(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def kf_init(b: BBox, params: KalmanParams = DEFAULT_KALMAN) -> KalmanState:
    mean = np.zeros(7)
    mean[:4] = bbox_to_z(b)
    return KalmanState(mean, params.P0.copy())


def kf_predict(s: KalmanState, params: KalmanParams = DEFAULT_KALMAN) -> KalmanState:
    mean = s.mean.copy()
    if mean[2] + mean[6] <= 0:
        mean[6] = 0.0  # area must stay non-negative
    mean = _F @ mean
    cov = _sym(_F @ s.cov @ _F.T + params.Q)
    return KalmanState(mean, cov)


def kf_update(s: KalmanState, z: BBox, params: KalmanParams = DEFAULT_KALMAN) -> KalmanState:
    """Linear-Gaussian correction with a Joseph-form covariance update."""
    zv = bbox_to_z(z)
    R = params.R
    P = s.cov
    S = _H @ P @ _H.T + R
    K = np.linalg.solve(S, _H @ P).T
    mean = s.mean + K @ (zv - _H @ s.mean)
    mean[3] = max(mean[3], 1e-9)
    mean[2] = max(mean[2], 0.0)
    A = np.eye(7) - K @ _H
    cov = _sym(A @ P @ A.T + K @ R @ K.T)
    return KalmanState(mean, cov)
