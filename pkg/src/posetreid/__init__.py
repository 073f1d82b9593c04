"""Pose-point multi-person tracking with classifier-based re-identification."""

from ._backend import BACKEND
from .core import UNKNOWN, BBox, Detection, FrameObservations, Identity, Keypoints
from .evalkit import EvalReport, GroundTruth, correct_pct, score
from .pipeline import Pipeline, PipelineConfig, TrackOutput, run_stream
from .primitives import hungarian, iou
from .reid import RbfSvmModel, classify, train_classifier
from .synthlab import ScenarioSpec, generate, preset
from .trackers import CentroidConfig, DeepSortConfig, SortConfig, Tracker, default_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "UNKNOWN", "BBox", "Detection", "FrameObservations", "Identity", "Keypoints",
    "EvalReport", "GroundTruth", "correct_pct", "score",
    "Pipeline", "PipelineConfig", "TrackOutput", "run_stream",
    "hungarian", "iou", "RbfSvmModel", "classify", "train_classifier",
    "ScenarioSpec", "generate", "preset",
    "CentroidConfig", "DeepSortConfig", "SortConfig", "Tracker", "default_config",
]
