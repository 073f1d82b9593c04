"""On-disk formats: detections, embeddings sidecar, ground truth, gallery, model, tracks, reports.

Every text format starts with a small JSON (or comment) header carrying a
format name and version. ``"-"`` as a path means stdin/stdout where that
makes sense (detections and reports).
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .core import NUM_KEYPOINTS, UNKNOWN, BBox, Detection, FrameObservations, Identity, Keypoints
from .errors import (
    DataError,
    DuplicateLabelInFrame,
    EmbeddingDimMismatch,
    NonMonotonicFrame,
    ParseError,
    VersionMismatch,
)
from .evalkit import EvalReport, GroundTruth, format_pct, render_table
from .pipeline import FrameOutput, Outcome, ReidEvent, Rule, TrackedBox, TrackOutput
from .reid import GallerySample, RbfSvmModel

PathLike = Union[str, Path]

FORMAT_VERSION = 1
DETS_FORMAT = "posetreid-dets"
GALLERY_FORMAT = "posetreid-gallery"
TRACKS_FORMAT = "posetreid-tracks"
REPORT_FORMAT = "posetreid-report"
GT_MAGIC_LINE = "# posetreid-gt v1"
GT_HEADER = ["frame", "label", "x", "y", "w", "h"]

EMB_MAGIC = b"PTEM"
MODEL_MAGIC = b"PTRM"
MODEL_VERSION = 1


# ---------------------------------------------------------------- helpers

@contextlib.contextmanager
def _open_text(path: PathLike, mode: str) -> Iterator[TextIO]:
    if str(path) == "-":
        stream = sys.stdin if "r" in mode else sys.stdout
        yield stream
        if "w" in mode:
            stream.flush()
        return
    with open(path, mode, encoding="utf-8", newline="") as fh:
        yield fh


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _json_lines(fh: TextIO, path) -> Iterator[Tuple[int, dict]]:
    for lineno, raw in enumerate(fh, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", path, lineno)
        yield lineno, obj


def _check_header(obj: dict, fmt: str, path, lineno: int) -> None:
    if obj.get("format") != fmt:
        raise ParseError(f"expected format {fmt!r}, got {obj.get('format')!r}", path, lineno)
    if obj.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"{fmt} version {obj.get('version')!r} (supported: {FORMAT_VERSION})", path, lineno)


def _floats(values, what: str, path, lineno: int, n: Optional[int] = None) -> List[float]:
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ParseError(f"{what} must be a list of numbers", path, lineno)
    if n is not None and len(values) != n:
        raise ParseError(f"{what} must have {n} entries, got {len(values)}", path, lineno)
    return [float(v) for v in values]


# ---------------------------------------------------------- embeddings sidecar

def write_embeddings(vectors: Sequence[np.ndarray], path: PathLike) -> None:
    """Raw little-endian float32 rows after an 8-byte header (magic, uint32 dim)."""
    if not vectors:
        dim = 0
        body = b""
    else:
        mat = np.asarray(np.stack(vectors), dtype="<f4")
        dim = mat.shape[1]
        body = mat.tobytes()
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC + struct.pack("<I", dim))
        fh.write(body)


def read_embeddings(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != EMB_MAGIC:
        raise ParseError("not an embeddings sidecar (bad magic)", path)
    (dim,) = struct.unpack("<I", data[4:8])
    body = data[8:]
    if dim == 0:
        if body:
            raise ParseError("dim 0 sidecar with trailing data", path)
        return np.zeros((0, 0))
    if len(body) % (4 * dim):
        raise ParseError(f"sidecar body is not a whole number of {dim}-dim vectors", path)
    return np.frombuffer(body, dtype="<f4").reshape(-1, dim).astype(np.float64)


# ---------------------------------------------------------------- detections

def _det_to_json(d: Detection, emb_ref: Optional[int]) -> dict:
    out = {"box": d.bbox.as_list(), "conf": d.conf}
    if d.keypoints is not None:
        out["kps"] = d.keypoints.points.tolist()
    if emb_ref is not None:
        out["emb_ref"] = emb_ref
    elif d.embedding is not None:
        out["emb"] = d.embedding.tolist()
    return out


def write_detections(stream: Sequence[FrameObservations], path: PathLike,
                     embeddings_path: Optional[PathLike] = None) -> None:
    """JSON Lines, one frame per line. With ``embeddings_path`` vectors go to a sidecar."""
    sidecar: List[np.ndarray] = []
    header = {"format": DETS_FORMAT, "version": FORMAT_VERSION}
    if embeddings_path is not None:
        header["embeddings"] = Path(embeddings_path).name
    with _open_text(path, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for obs in stream:
            dets = []
            for d in obs.detections:
                ref = None
                if embeddings_path is not None and d.embedding is not None:
                    ref = len(sidecar)
                    sidecar.append(d.embedding)
                dets.append(_det_to_json(d, ref))
            fh.write(_dumps({"frame": obs.frame, "dets": dets}) + "\n")
    if embeddings_path is not None:
        write_embeddings(sidecar, embeddings_path)


def _parse_det(obj, frame: int, sidecar, dim: List[Optional[int]], path, lineno: int) -> Detection:
    if not isinstance(obj, dict) or "box" not in obj:
        raise ParseError("each detection needs a 'box'", path, lineno)
    box = _floats(obj["box"], "box", path, lineno, 4)
    conf = obj.get("conf", 1.0)
    if not isinstance(conf, (int, float)) or isinstance(conf, bool):
        raise ParseError("conf must be a number", path, lineno)
    kps = None
    if obj.get("kps") is not None:
        rows = obj["kps"]
        if not isinstance(rows, list) or len(rows) != NUM_KEYPOINTS:
            raise ParseError(f"kps must hold {NUM_KEYPOINTS} rows", path, lineno)
        kps = Keypoints(np.array([_floats(r, "keypoint", path, lineno, 3) for r in rows]))
    emb = None
    if "emb" in obj and "emb_ref" in obj:
        raise ParseError("give either 'emb' or 'emb_ref', not both", path, lineno)
    if "emb" in obj:
        emb = np.array(_floats(obj["emb"], "emb", path, lineno))
    elif "emb_ref" in obj:
        ref = obj["emb_ref"]
        if sidecar is None:
            raise ParseError("emb_ref used but no embeddings sidecar given", path, lineno)
        if not isinstance(ref, int) or isinstance(ref, bool) or not 0 <= ref < len(sidecar):
            raise ParseError(f"emb_ref {ref!r} outside sidecar of {len(sidecar)} vectors", path, lineno)
        emb = sidecar[ref]
    if emb is not None:
        if dim[0] is None:
            dim[0] = emb.shape[0]
        elif emb.shape[0] != dim[0]:
            raise EmbeddingDimMismatch(f"embedding dim {emb.shape[0]}, earlier {dim[0]}", path, lineno)
    try:
        return Detection(frame, BBox(*box), float(conf), kps, emb)
    except (ValueError, DataError) as exc:
        raise ParseError(str(exc), path, lineno) from None


def iter_detections(path: PathLike, embeddings_path: Optional[PathLike] = None) -> Iterator[FrameObservations]:
    """Stream frames one line at a time.

    The sidecar is taken from ``embeddings_path`` or, failing that, from the
    header's ``embeddings`` entry (relative to the detections file).
    """
    sidecar = read_embeddings(embeddings_path) if embeddings_path is not None else None
    dim: List[Optional[int]] = [None]
    last = None
    with _open_text(path, "r") as fh:
        for lineno, obj in _json_lines(fh, path):
            if "format" in obj:
                if last is not None:
                    raise ParseError("header after frame lines", path, lineno)
                _check_header(obj, DETS_FORMAT, path, lineno)
                if sidecar is None and obj.get("embeddings") and str(path) != "-":
                    sidecar = read_embeddings(Path(path).parent / obj["embeddings"])
                continue
            frame = obj.get("frame")
            if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
                raise ParseError("'frame' must be a non-negative integer", path, lineno)
            if last is not None and frame <= last:
                raise NonMonotonicFrame(f"frame {frame} follows frame {last}", path, lineno)
            dets = obj.get("dets", [])
            if not isinstance(dets, list):
                raise ParseError("'dets' must be a list", path, lineno)
            last = frame
            yield FrameObservations(frame, tuple(_parse_det(d, frame, sidecar, dim, path, lineno) for d in dets))


def read_detections(path: PathLike, embeddings_path: Optional[PathLike] = None) -> List[FrameObservations]:
    return list(iter_detections(path, embeddings_path))


# -------------------------------------------------------------- ground truth

def write_ground_truth(gt: GroundTruth, path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        fh.write(f"{GT_MAGIC_LINE} total_frames={gt.total_frames} total_detections={gt.total_detections}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_HEADER)
        for f in sorted(gt.frames):
            for label, b in gt.frames[f]:
                w.writerow([f, label, repr(b.x), repr(b.y), repr(b.w), repr(b.h)])


def read_ground_truth(path: PathLike, total_frames: Optional[int] = None) -> GroundTruth:
    """CSV ``frame,label,x,y,w,h``. The frame count comes from the comment header,
    ``total_frames``, or last frame + 1, in that order."""
    frames: Dict[int, List[Tuple[str, BBox]]] = {}
    declared = None
    with _open_text(path, "r") as fh:
        lines = fh.read().splitlines()
    seen_header = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# posetreid-gt"):
                parts = line.split()
                if len(parts) < 3 or parts[2] != "v1":
                    raise VersionMismatch(f"unsupported ground-truth header {line!r}", path, lineno)
                for p in parts[3:]:
                    k, _, v = p.partition("=")
                    if k == "total_frames":
                        try:
                            declared = int(v)
                        except ValueError:
                            raise ParseError(f"bad total_frames {v!r}", path, lineno) from None
            continue
        row = next(csv.reader([line]))
        if not seen_header and [c.strip() for c in row] == GT_HEADER:
            seen_header = True
            continue
        if len(row) != 6:
            raise ParseError(f"expected 6 columns, got {len(row)}", path, lineno)
        try:
            f = int(row[0])
            box = BBox(*(float(v) for v in row[2:]))
        except (ValueError, DataError) as exc:
            raise ParseError(f"bad row: {exc}", path, lineno) from None
        label = row[1].strip()
        if not label:
            raise ParseError("empty label", path, lineno)
        frames.setdefault(f, []).append((label, box))
        labels = [lab for lab, _ in frames[f]]
        if len(set(labels)) != len(labels):
            raise DuplicateLabelInFrame(f"frame {f} lists {label!r} twice", path, lineno)
    n = declared if declared is not None else total_frames
    if n is None:
        n = max(frames) + 1 if frames else 0
    try:
        return GroundTruth(frames, n)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


# -------------------------------------------------------------------- gallery

def write_gallery(samples: Sequence[GallerySample], path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        fh.write(_dumps({"format": GALLERY_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for s in samples:
            fh.write(_dumps({"label": s.label, "emb": s.embedding.tolist()}) + "\n")


def read_gallery(path: PathLike) -> List[GallerySample]:
    out: List[GallerySample] = []
    dim = None
    with _open_text(path, "r") as fh:
        for lineno, obj in _json_lines(fh, path):
            if "format" in obj:
                _check_header(obj, GALLERY_FORMAT, path, lineno)
                continue
            label = obj.get("label")
            if not isinstance(label, str) or not label:
                raise ParseError("gallery line needs a non-empty 'label'", path, lineno)
            emb = np.array(_floats(obj.get("emb"), "emb", path, lineno))
            if dim is None:
                dim = emb.shape[0]
            elif emb.shape[0] != dim:
                raise EmbeddingDimMismatch(f"embedding dim {emb.shape[0]}, earlier {dim}", path, lineno)
            out.append(GallerySample(label, emb))
    return out


# ---------------------------------------------------------------------- model

def model_to_bytes(m: RbfSvmModel) -> bytes:
    meta = {
        "classes": list(m.classes),
        "gamma": m.gamma,
        "C": m.C,
        "min_conf": m.min_conf,
        "biases": list(m.biases),
        "n_sv": [int(sv.shape[0]) for sv in m.support_vectors],
        "dim": m.dim,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(blob)), blob]
    for sv, coef in zip(m.support_vectors, m.dual_coefs):
        parts.append(np.ascontiguousarray(sv, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(coef, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes, path=None) -> RbfSvmModel:
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise ParseError("not a model file (bad magic)", path)
    version, n = struct.unpack("<II", data[4:12])
    if version != MODEL_VERSION:
        raise VersionMismatch(f"model version {version} (supported: {MODEL_VERSION})", path)
    try:
        meta = json.loads(data[12:12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ParseError("corrupt model metadata", path) from None
    buf = io.BytesIO(data[12 + n:])
    dim = meta["dim"]
    svs, coefs = [], []
    for k in meta["n_sv"]:
        raw = buf.read(8 * k * dim)
        rc = buf.read(8 * k)
        if len(raw) != 8 * k * dim or len(rc) != 8 * k:
            raise ParseError("model file truncated", path)
        svs.append(np.frombuffer(raw, dtype="<f8").reshape(k, dim).astype(np.float64))
        coefs.append(np.frombuffer(rc, dtype="<f8").astype(np.float64))
    if buf.read(1):
        raise ParseError("trailing bytes after model arrays", path)
    return RbfSvmModel(meta["classes"], svs, coefs, [float(b) for b in meta["biases"]],
                       float(meta["gamma"]), float(meta["C"]), float(meta["min_conf"]))


def write_model(m: RbfSvmModel, path: PathLike) -> None:
    Path(path).write_bytes(model_to_bytes(m))


def read_model(path: PathLike) -> RbfSvmModel:
    return model_from_bytes(Path(path).read_bytes(), path)


# ---------------------------------------------------------------- track output

def _ident(label: Optional[str]) -> Identity:
    return UNKNOWN if label is None else Identity(label)


def _event_to_json(ev: ReidEvent) -> dict:
    return {
        "frame": ev.frame,
        "rule": ev.rule.value,
        "outcomes": [
            {"track": o.track_id, "old": o.old.label, "new": o.new.label, "conf": o.confidence}
            for o in ev.outcomes
        ],
    }


def write_tracks(output: TrackOutput, path: PathLike) -> None:
    """Frame lines ``{"frame", "tracks"}`` followed by event lines ``{"event"}``."""
    with _open_text(path, "w") as fh:
        fh.write(_dumps({"format": TRACKS_FORMAT, "version": FORMAT_VERSION,
                         "num_frames": output.num_frames, "reid_count": output.reid_count}) + "\n")
        for fo in output.frames:
            fh.write(_dumps({"frame": fo.frame, "tracks": [
                {"id": e.track_id, "label": e.identity.label, "box": e.bbox.as_list()} for e in fo.entries
            ]}) + "\n")
        for ev in output.events:
            fh.write(_dumps({"event": _event_to_json(ev)}) + "\n")


def read_tracks(path: PathLike) -> TrackOutput:
    out = TrackOutput()
    header = None
    last = None
    with _open_text(path, "r") as fh:
        for lineno, obj in _json_lines(fh, path):
            try:
                if "format" in obj:
                    _check_header(obj, TRACKS_FORMAT, path, lineno)
                    header = obj
                elif "event" in obj:
                    e = obj["event"]
                    outcomes = tuple(Outcome(int(o["track"]), _ident(o["old"]), _ident(o["new"]), o["conf"])
                                     for o in e["outcomes"])
                    out.events.append(ReidEvent(int(e["frame"]), Rule(e["rule"]),
                                                tuple(o.track_id for o in outcomes), outcomes))
                else:
                    f = obj["frame"]
                    if last is not None and f <= last:
                        raise NonMonotonicFrame(f"frame {f} follows frame {last}", path, lineno)
                    last = f
                    out.frames.append(FrameOutput(f, [
                        TrackedBox(_ident(t["label"]), BBox(*t["box"]), int(t["id"])) for t in obj["tracks"]
                    ]))
            except ParseError:
                raise
            except (KeyError, TypeError, ValueError, DataError) as exc:
                raise ParseError(f"malformed tracks line ({exc!r})", path, lineno) from None
    if header is None:
        raise ParseError("missing tracks header", path)
    out.num_frames = int(header["num_frames"])
    out.reid_count = int(header["reid_count"])
    return out


# -------------------------------------------------------------------- reports

@dataclass
class ReportEntry:
    """One table row: a tracker run, optionally followed by re-identification."""

    dt: str
    tracker: str
    reider: Optional[str]
    config: dict
    report: EvalReport
    tracker_report: Optional[EvalReport] = None
    det_errors: Optional[Tuple[int, int]] = None  # detector-level (FN, FP)

    def to_dict(self) -> dict:
        return {
            "det_errors": None if self.det_errors is None else {"fn": self.det_errors[0], "fp": self.det_errors[1]},
            "dt": self.dt,
            "tracker": self.tracker,
            "reider": self.reider,
            "config": self.config,
            "report": self.report.to_dict(),
            "tracker_report": None if self.tracker_report is None else self.tracker_report.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportEntry":
        tr = d.get("tracker_report")
        de = d.get("det_errors")
        return cls(d["dt"], d["tracker"], d.get("reider"), d.get("config", {}),
                   EvalReport.from_dict(d["report"]), None if tr is None else EvalReport.from_dict(tr),
                   None if de is None else (int(de["fn"]), int(de["fp"])))

    def table_row(self) -> dict:
        tracker_pct = self.tracker_report.correct_pct if self.tracker_report is not None else self.report.correct_pct
        dt = self.dt if self.det_errors is None else f"{self.dt} (FN {self.det_errors[0]}, FP {self.det_errors[1]})"
        row = {"dt": dt, "tracker": self.tracker, "tracker_result": format_pct(tracker_pct)}
        if self.reider:
            row.update(reider=self.reider, reid_count=self.report.reid_count,
                       incorrect_id=self.report.incorrect_id, result=format_pct(self.report.correct_pct))
        else:
            row.update(reider="-", reid_count="-", incorrect_id=self.report.incorrect_id, result="-")
        return row


@dataclass
class ReportDocument:
    entries: List[ReportEntry] = field(default_factory=list)
    version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {"format": REPORT_FORMAT, "version": self.version, "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict, path=None) -> "ReportDocument":
        if d.get("format") != REPORT_FORMAT:
            raise ParseError(f"expected format {REPORT_FORMAT!r}", path)
        if d.get("version") != FORMAT_VERSION:
            raise VersionMismatch(f"report version {d.get('version')!r} (supported: {FORMAT_VERSION})", path)
        try:
            return cls([ReportEntry.from_dict(e) for e in d["entries"]], d["version"])
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed report ({exc!r})", path) from None

    def render(self) -> str:
        return render_table([e.table_row() for e in self.entries])


def report_to_text(doc: ReportDocument) -> str:
    return json.dumps(doc.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_report(doc: ReportDocument, path: PathLike) -> None:
    with _open_text(path, "w") as fh:
        fh.write(report_to_text(doc))


def read_report(path: PathLike) -> ReportDocument:
    with _open_text(path, "r") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", path, exc.lineno) from None
    if not isinstance(d, dict):
        raise ParseError("report must be a JSON object", path)
    return ReportDocument.from_dict(d, path)
