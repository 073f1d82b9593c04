"""Gallery classifier: one-vs-rest RBF-kernel SVMs with a confidence gate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import _backend
from .core import UNKNOWN, Identity
from .errors import DimMismatch, EmptyGallery, SingleClass

DEFAULT_C = 10.0
DEFAULT_MIN_CONF = 0.35
KKT_TOL = 1e-3


def as_embedding(values, normalize: bool = False) -> np.ndarray:
    e = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(e)):
        raise ValueError("embedding has non-finite entries")
    if normalize:
        n = np.linalg.norm(e)
        if n > 0:
            e = e / n
    return e


@dataclass(frozen=True)
class GallerySample:
    label: str
    embedding: np.ndarray = field(compare=False)

    def __post_init__(self):
        if not self.label:
            raise ValueError("gallery label must be non-empty")
        object.__setattr__(self, "embedding", as_embedding(self.embedding))


def rbf_kernel(x, x2, gamma: float) -> float:
    """exp(-|x - x2|^2 / (2 gamma^2)); gamma is the kernel length scale."""
    a = np.asarray(x, dtype=float).reshape(-1)
    b = np.asarray(x2, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DimMismatch(f"kernel inputs have dims {a.shape[0]} and {b.shape[0]}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = a - b
    return math.exp(-float(d @ d) / (2.0 * gamma * gamma))


def median_distance(x: np.ndarray) -> float:
    """Median of the non-zero pairwise euclidean distances between rows."""
    x = np.asarray(x, dtype=float)
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(len(x), k=1)
    d = np.sqrt(np.maximum(d2[iu], 0.0))
    d = d[d > 1e-12]
    if len(d) == 0:
        return 1.0
    return float(np.median(d))


@dataclass
class RbfSvmModel:
    classes: List[str]
    support_vectors: List[np.ndarray]  # per class, (n_sv, dim)
    dual_coefs: List[np.ndarray]  # per class, alpha_i * y_i
    biases: List[float]
    gamma: float
    C: float
    min_conf: float = DEFAULT_MIN_CONF

    def __post_init__(self):
        if len(self.classes) < 2:
            raise SingleClass("a classifier needs at least two classes")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.min_conf <= 1.0:
            raise ValueError("min_conf must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return int(self.support_vectors[0].shape[1])

    def decision_scores(self, e) -> np.ndarray:
        x = as_embedding(e)
        if x.shape[0] != self.dim:
            raise DimMismatch(f"embedding dim {x.shape[0]} != model dim {self.dim}")
        out = np.empty(len(self.classes))
        for k, (sv, coef, b) in enumerate(zip(self.support_vectors, self.dual_coefs, self.biases)):
            kv = _backend.rbf_gram(x[None, :], sv, self.gamma)[0]
            out[k] = float(kv @ coef) + b
        return out

    def confidences(self, e) -> np.ndarray:
        return softmax(self.decision_scores(e))

    def with_min_conf(self, min_conf: float) -> "RbfSvmModel":
        return RbfSvmModel(self.classes, self.support_vectors, self.dual_coefs, self.biases, self.gamma, self.C, min_conf)

    def ranked(self, e) -> List[Tuple[str, float]]:
        """Labels sorted by confidence, ties broken by label."""
        conf = self.confidences(e)
        return sorted(zip(self.classes, conf.tolist()), key=lambda lc: (-lc[1], lc[0]))

    def kkt_max_violation(self) -> float:
        """Largest KKT violation over the stored support vectors."""
        worst = 0.0
        for k in range(len(self.classes)):
            sv, coef, b = self.support_vectors[k], self.dual_coefs[k], self.biases[k]
            if len(coef) == 0:
                continue
            f = _backend.rbf_gram(sv, sv, self.gamma) @ coef + b
            y = np.sign(coef)
            margin = y * f - 1.0
            at_bound = np.abs(coef) >= self.C * (1 - 1e-12)
            free_v = np.abs(margin[~at_bound])
            bound_v = np.maximum(margin[at_bound], 0.0)
            for v in (free_v, bound_v):
                if len(v):
                    worst = max(worst, float(v.max()))
        return worst


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def train_classifier(
    samples: Sequence[GallerySample],
    gamma: Optional[float] = None,
    C: float = DEFAULT_C,
    min_conf: float = DEFAULT_MIN_CONF,
    tol: float = KKT_TOL,
    max_iter: int = 10_000_000,
) -> RbfSvmModel:
    """Fit one SVM per label against the rest by SMO.

    ``gamma`` defaults to the median pairwise distance of the gallery.
    Deterministic for a given sample order.
    """
    if len(samples) == 0:
        raise EmptyGallery("no gallery samples")
    classes = sorted({s.label for s in samples})
    if len(classes) < 2:
        raise SingleClass(f"gallery has only label {classes[0]!r}")
    if len({s.embedding.shape for s in samples}) > 1:
        raise DimMismatch("gallery embeddings differ in dimension")
    x = np.stack([s.embedding for s in samples])
    labels = np.array([s.label for s in samples])
    if gamma is None:
        gamma = median_distance(x)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not C > 0:
        raise ValueError("C must be positive")
    kmat = _backend.rbf_gram(x, x, gamma)
    svs, coefs, biases = [], [], []
    for label in classes:
        y = np.where(labels == label, 1.0, -1.0)
        alpha, rho, _ = _backend.smo_solve(kmat, y, float(C), float(tol), int(max_iter))
        keep = alpha > 0
        svs.append(x[keep].copy())
        coefs.append((alpha[keep] * y[keep]).copy())
        biases.append(-float(rho))
    return RbfSvmModel(classes, svs, coefs, biases, float(gamma), float(C), float(min_conf))


def classify(m: RbfSvmModel, e) -> Tuple[Identity, float]:
    """Best label and its softmax confidence; Unknown below ``m.min_conf``."""
    label, conf = m.ranked(e)[0]
    if conf >= m.min_conf:
        return Identity(label), conf
    return UNKNOWN, conf


def classify_crop_batch(m: RbfSvmModel, es: Iterable) -> List[Tuple[Identity, float]]:
    return [classify(m, e) for e in es]
