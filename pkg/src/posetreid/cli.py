"""Command line: synth, train-reid, track, eval, run, report.

Exit status is 0 on success, 1 on a usage error and 2 when input data is
bad (the message names the file and, where known, the line).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

from . import formats
from .config import TRACKER_KINDS, RunConfig, load_config
from .errors import DataError, InvalidSpec, PoseTReIDError
from .evalkit import GroundTruth, count_det_errors, format_pct, score
from .pipeline import run_stream
from .reid import train_classifier
from .synthlab import PRESETS, ScenarioSpec, generate, preset

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

BUNDLE_FILES = {
    "detections": "detections.jsonl",
    "embeddings": "embeddings.bin",
    "gt": "gt.csv",
    "gallery": "gallery.jsonl",
    "scenario": "scenario.json",
}
REIDER_NAME = "RBF-SVM"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers

def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    pairs = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        pairs[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        pairs["seed"] = str(args.seed)
    return cfg.with_overrides(pairs) if pairs else cfg


def _load_spec(args) -> ScenarioSpec:
    if args.preset:
        spec = preset(args.preset)
    else:
        try:
            spec = ScenarioSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{args.spec}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    return spec


def write_bundle(bundle, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    formats.write_detections(bundle.detections, out / BUNDLE_FILES["detections"], out / BUNDLE_FILES["embeddings"])
    formats.write_ground_truth(bundle.gt, out / BUNDLE_FILES["gt"])
    formats.write_gallery(bundle.gallery, out / BUNDLE_FILES["gallery"])
    manifest = {
        "spec": bundle.spec.to_dict(),
        "labels": bundle.labels,
        "total_frames": bundle.gt.total_frames,
        "total_detections": bundle.gt.total_detections,
    }
    (out / BUNDLE_FILES["scenario"]).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class Scenario:
    name: str
    detections: list
    gt: GroundTruth
    gallery: list
    echo: dict


def _scenario_from_dir(d: Path) -> Scenario:
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    scen = d / BUNDLE_FILES["scenario"]
    echo = {"input": str(d)}
    if scen.exists():
        echo["scenario"] = json.loads(scen.read_text(encoding="utf-8"))["spec"]
    return Scenario(
        d.name,
        formats.read_detections(d / BUNDLE_FILES["detections"]),
        formats.read_ground_truth(d / BUNDLE_FILES["gt"]),
        formats.read_gallery(d / BUNDLE_FILES["gallery"]),
        echo,
    )


def _run_one(scn: Scenario, cfg: RunConfig, kind: str, model) -> formats.ReportEntry:
    n = scn.gt.total_frames
    plain = run_stream(scn.detections, cfg.pipeline_config(kind, None), num_frames=n)
    tracker_report = score(plain, scn.gt, cfg.iou_min, id_source="track")
    echo = {"run": _echo(cfg, kind), **scn.echo}
    det_errors = count_det_errors(scn.detections, scn.gt, cfg.iou_min)
    if model is None:
        return formats.ReportEntry(scn.name, kind, None, echo, tracker_report, det_errors=det_errors)
    out = run_stream(scn.detections, cfg.pipeline_config(kind, model), num_frames=n)
    return formats.ReportEntry(scn.name, kind, REIDER_NAME, echo, score(out, scn.gt, cfg.iou_min), tracker_report,
                               det_errors)


def _echo(cfg: RunConfig, kind: str) -> dict:
    d = cfg.to_dict()
    d["tracker.kind"] = kind
    # output locations do not change results
    return {k: v for k, v in d.items() if not k.startswith("output.")}


def run_scenarios(scenarios: Sequence[Scenario], cfg: RunConfig, jobs: int = 1) -> formats.ReportDocument:
    """Every (scenario, tracker) pair, optionally in parallel; entry order is fixed."""
    models = {}
    if cfg.reid:
        for s in scenarios:
            models[s.name] = train_classifier(s.gallery, gamma=cfg.gamma, C=cfg.C, min_conf=cfg.min_conf)
    tasks = [(s, k) for s in scenarios for k in cfg.trackers]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(lambda t: _run_one(t[0], cfg, t[1], models.get(t[0].name)), tasks))
    else:
        entries = [_run_one(s, cfg, k, models.get(s.name)) for s, k in tasks]
    return formats.ReportDocument(entries)


def _print_summary(doc: formats.ReportDocument, out) -> None:
    for e in doc.entries:
        line = f"{e.dt} {e.tracker}: correct_pct {format_pct(e.report.correct_pct)}"
        if e.tracker_report is not None:
            line = (f"{e.dt} {e.tracker}: tracker {format_pct(e.tracker_report.correct_pct)}, "
                    f"with {e.reider} {format_pct(e.report.correct_pct)} "
                    f"(incorrect {e.report.incorrect_id}, reid count {e.report.reid_count})")
        print(line, file=out)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    bundle = generate(_load_spec(args))
    write_bundle(bundle, Path(args.out))
    print(f"wrote {args.out}: {bundle.gt.total_frames} frames, {bundle.gt.total_detections} gt detections")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    samples = formats.read_gallery(args.gallery)
    m = train_classifier(samples, gamma=cfg.gamma, C=cfg.C, min_conf=cfg.min_conf)
    formats.write_model(m, args.out)
    n_sv = sum(sv.shape[0] for sv in m.support_vectors)
    print(f"wrote {args.out}: {len(m.classes)} classes, dim {m.dim}, {n_sv} support vectors, gamma {m.gamma:.6g}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args)
    model = formats.read_model(args.model) if args.model and cfg.reid else None
    kind = args.tracker or cfg.trackers[0]
    stream = formats.iter_detections(args.detections, args.embeddings)
    out = run_stream(stream, cfg.pipeline_config(kind, model), num_frames=args.num_frames)
    formats.write_tracks(out, args.out)
    if args.out != "-":
        print(f"wrote {args.out}: {len(out.frames)} frames, {out.reid_count} re-identifications")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = formats.read_tracks(args.tracks)
    gt = formats.read_ground_truth(args.gt)
    rep = score(out, gt, cfg.iou_min, id_source=args.id_source)
    reider = REIDER_NAME if args.id_source == "identity" else None
    entry = formats.ReportEntry(args.name, args.tracker_name, reider,
                                {"run": _echo(cfg, args.tracker_name), "tracks": str(args.tracks), "gt": str(args.gt)},
                                rep)
    doc = formats.ReportDocument([entry])
    if args.out:
        formats.write_report(doc, args.out)
    print(f"correct_pct {format_pct(rep.correct_pct)} (incorrect {rep.incorrect_id} of {rep.total_gt_detections})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.trackers:
        cfg = cfg.with_overrides({"tracker.kind": args.trackers})
    scenarios: List[Scenario] = []
    for name in args.preset or []:
        spec = preset(name)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        b = generate(spec)
        scenarios.append(Scenario(name, b.detections, b.gt, b.gallery, {"scenario": spec.to_dict()}))
    for d in args.input or []:
        scenarios.append(_scenario_from_dir(Path(d)))
    if not scenarios:
        raise UsageError("run needs --preset or --input")
    doc = run_scenarios(scenarios, cfg, jobs=args.jobs)
    report_path = args.out or cfg.report
    if report_path:
        formats.write_report(doc, report_path)
    if report_path != "-":
        _print_summary(doc, sys.stdout)
        print(doc.render())
    return EXIT_OK


def cmd_report(args) -> int:
    doc = formats.read_report(args.report)
    if args.json:
        sys.stdout.write(formats.report_to_text(doc))
    else:
        print(doc.render())
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _common(p, seed=True):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    if seed:
        p.add_argument("--seed", type=int, help="seed for every random draw")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="posetreid", description="Pose-point tracking with re-identification.")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic scenario bundle")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--spec", help="scenario spec JSON")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train-reid", help="train the RBF-SVM classifier on a gallery")
    t.add_argument("--gallery", required=True)
    t.add_argument("--out", required=True)
    _common(t)
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", help="track a detection stream")
    k.add_argument("--detections", required=True, help="detections JSONL or '-' for stdin")
    k.add_argument("--embeddings", help="embeddings sidecar")
    k.add_argument("--model", help="trained classifier; omit for tracker only")
    k.add_argument("--tracker", choices=TRACKER_KINDS)
    k.add_argument("--num-frames", type=int)
    k.add_argument("--out", required=True, help="tracks JSONL or '-' for stdout")
    _common(k)
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score tracks against ground truth")
    e.add_argument("--tracks", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--id-source", choices=("identity", "track"), default="identity")
    e.add_argument("--name", default="input", help="DT column value")
    e.add_argument("--tracker-name", default="tracker")
    e.add_argument("--out", help="report JSON or '-'")
    _common(e)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="end to end: tracker alone and with re-identification")
    r.add_argument("--preset", action="append", choices=PRESETS)
    r.add_argument("--input", action="append", help="bundle directory written by synth")
    r.add_argument("--trackers", help="comma-separated tracker kinds")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", help="report JSON or '-'")
    _common(r)
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("report", help="render a report as a table")
    q.add_argument("report")
    q.add_argument("--json", action="store_true", help="print the normalized JSON instead")
    q.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PoseTReIDError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
