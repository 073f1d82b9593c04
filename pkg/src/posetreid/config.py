"""Flat ``key = value`` run configuration with dotted keys.

Blank lines and ``#`` comments are ignored. Unknown keys are an error, so a
typo never silently falls back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError
from .pipeline import PipelineConfig
from .primitives import KalmanParams
from .reid import DEFAULT_C, DEFAULT_MIN_CONF, RbfSvmModel
from .trackers import CentroidConfig, DeepSortConfig, SortConfig, TrackerConfig

TRACKER_KINDS = ("centroid", "sort", "deepsort")


def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt(conv):
    def parse(v: str):
        return None if v.strip().lower() in ("", "none", "auto") else conv(v)
    return parse


def _floats4(v: str) -> Tuple[float, float, float, float]:
    parts = [float(p) for p in v.split(",")]
    if len(parts) != 4:
        raise ValueError("need 4 comma-separated numbers")
    return tuple(parts)


def _kinds(v: str) -> Tuple[str, ...]:
    ks = tuple(p.strip() for p in v.split(",") if p.strip())
    bad = [k for k in ks if k not in TRACKER_KINDS]
    if not ks or bad:
        raise ValueError(f"tracker kinds must come from {', '.join(TRACKER_KINDS)}")
    return ks


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_K = KalmanParams()

# dotted key -> (attribute, parser)
_KEYS: Dict[str, Tuple[str, object]] = {
    "tracker.kind": ("trackers", _kinds),
    "tracker.max_dist": ("max_dist", float),
    "tracker.max_age": ("max_age", int),
    "tracker.min_hits": ("min_hits", int),
    "tracker.iou_thresh": ("iou_thresh", float),
    "tracker.nn_budget": ("nn_budget", int),
    "tracker.nms_overlap": ("nms_overlap", float),
    "tracker.max_cos_dist": ("max_cos_dist", float),
    "kalman.meas_std": ("meas_std", _floats4),
    "kalman.process_frac": ("process_frac", float),
    "kalman.init_pos_factor": ("init_pos_factor", float),
    "kalman.init_vel_var": ("init_vel_var", float),
    "reid.enabled": ("reid", _parse_bool),
    "reid.min_conf": ("min_conf", float),
    "reid.gamma": ("gamma", _opt(float)),
    "reid.C": ("C", float),
    "reid.speed_limit": ("speed_limit", _opt(float)),
    "eval.iou_min": ("iou_min", float),
    "input.detections": ("detections", _opt(str)),
    "input.embeddings": ("embeddings", _opt(str)),
    "input.gt": ("gt", _opt(str)),
    "input.gallery": ("gallery", _opt(str)),
    "input.model": ("model", _opt(str)),
    "output.report": ("report", _opt(str)),
    "output.tracks": ("tracks", _opt(str)),
    "seed": ("seed", int),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run. Defaults match the tracker and classifier defaults."""

    trackers: Tuple[str, ...] = ("centroid",)
    max_dist: float = 50.0
    max_age: int = 1
    min_hits: int = 3
    iou_thresh: float = 0.3
    nn_budget: int = 100
    nms_overlap: float = 0.5
    max_cos_dist: float = 0.1
    meas_std: Tuple[float, float, float, float] = _K.meas_std
    process_frac: float = _K.process_frac
    init_pos_factor: float = _K.init_pos_factor
    init_vel_var: float = _K.init_vel_var
    reid: bool = True
    min_conf: float = DEFAULT_MIN_CONF
    gamma: Optional[float] = None
    C: float = DEFAULT_C
    speed_limit: Optional[float] = None
    iou_min: float = 0.5
    detections: Optional[str] = None
    embeddings: Optional[str] = None
    gt: Optional[str] = None
    gallery: Optional[str] = None
    model: Optional[str] = None
    report: Optional[str] = None
    tracks: Optional[str] = None
    seed: int = 0

    @property
    def kalman(self) -> KalmanParams:
        return KalmanParams(self.meas_std, self.process_frac, self.init_pos_factor, self.init_vel_var)

    def tracker_config(self, kind: str) -> TrackerConfig:
        if kind == "centroid":
            return CentroidConfig(self.max_dist)
        if kind == "sort":
            return SortConfig(self.max_age, self.min_hits, self.iou_thresh, self.kalman)
        if kind == "deepsort":
            return DeepSortConfig(self.nn_budget, self.nms_overlap, self.max_cos_dist,
                                  self.max_age, self.min_hits, self.iou_thresh, self.kalman)
        raise ConfigError(f"unknown tracker kind {kind!r}")

    def pipeline_config(self, kind: str, model: Optional[RbfSvmModel]) -> PipelineConfig:
        return PipelineConfig(self.tracker_config(kind), model if self.reid else None,
                              self.min_conf, self.speed_limit)

    def to_dict(self) -> Dict[str, str]:
        """Config echo: every key, rendered as it would appear in a config file."""
        return {key: _fmt(getattr(self, attr)) for key, (attr, _) in _KEYS.items()}

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    def with_overrides(self, pairs: Dict[str, str], path=None) -> "RunConfig":
        changes = {}
        for key, raw in pairs.items():
            attr, conv = _lookup(key, path, None)
            changes[attr] = _convert(key, conv, raw, path, None)
        return _build(self, changes, path)


def _lookup(key: str, path, line):
    if key not in _KEYS:
        raise ConfigError(f"unknown config key {key!r}", path, line)
    return _KEYS[key]


def _convert(key, conv, raw, path, line):
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}", path, line) from None


def _build(base: RunConfig, changes: dict, path) -> RunConfig:
    cfg = replace(base, **changes)
    try:
        for kind in cfg.trackers:
            cfg.tracker_config(kind)
        if not 0.0 <= cfg.min_conf <= 1.0:
            raise ValueError("reid.min_conf must lie in [0, 1]")
        if not 0.0 < cfg.iou_min <= 1.0:
            raise ValueError("eval.iou_min must lie in (0, 1]")
        PipelineConfig(cfg.tracker_config(cfg.trackers[0]), None, None, cfg.speed_limit)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None
    return cfg


def parse_config(text: str, path=None, base: Optional[RunConfig] = None) -> RunConfig:
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("expected 'key = value'", path, lineno)
        key = key.strip()
        attr, conv = _lookup(key, path, lineno)
        changes[attr] = _convert(key, conv, value.strip(), path, lineno)
    return _build(base or RunConfig(), changes, path)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), path)


def config_keys() -> List[str]:
    return list(_KEYS)
