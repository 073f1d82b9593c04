import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posetreid.core import UNKNOWN, BBox, Detection, FrameObservations, Identity
from posetreid.errors import DuplicateLabelInFrame, FrameRangeMismatch
from posetreid.evalkit import (
    TABLE_COLUMNS,
    EvalReport,
    GroundTruth,
    correct_pct,
    count_det_errors,
    match_frame,
    render_table,
    score,
)
from posetreid.pipeline import FrameOutput, TrackedBox, TrackOutput
from posetreid.synthlab import ScenarioSpec, generate


@pytest.mark.parametrize("total,incorrect,pct", [
    (1365, 2, 99.85), (3660, 198, 94.59), (3660, 56, 98.46), (3660, 64, 98.25),
    (1365, 0, 100.0), (3, 1, 66.66), (0, 0, 100.0),
])
def test_correct_pct_truncates(total, incorrect, pct):
    assert correct_pct(total, incorrect) == pct


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 10**6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_truncation_bounds(args):
    total, incorrect = args
    p = correct_pct(total, incorrect)
    assert p * total / 100 <= total - incorrect + 1e-9
    assert total - incorrect < (p + 0.01) * total / 100


def test_match_frame_identical():
    boxes = [BBox(0, 0, 10, 10), BBox(50, 50, 10, 20)]
    m = match_frame(boxes, boxes)
    assert m.pairs == [(0, 0), (1, 1)] and not m.unmatched_pred and not m.unmatched_gt


def test_match_frame_empty_prediction():
    m = match_frame([], [BBox(0, 0, 1, 1)] * 3)
    assert m.unmatched_gt == [0, 1, 2]


def test_match_frame_threshold():
    gt = [BBox(0, 0, 10, 10)]
    pred = [BBox(0, 0, 10, 6), BBox(0, 6, 10, 4)]  # IoU 0.6 and 0.4
    m = match_frame(pred, gt, 0.5)
    assert m.pairs == [(0, 0)] and m.unmatched_pred == [1] and m.unmatched_gt == []


def gt_of(frames, total):
    return GroundTruth({f: list(rows) for f, rows in frames.items()}, total)


def output_of(frames, total, reid_count=0):
    return TrackOutput([FrameOutput(f, list(e)) for f, e in sorted(frames.items())], [], reid_count, total)


A, B = BBox(0, 0, 40, 100), BBox(300, 0, 40, 100)


def test_score_counts_wrong_unknown_and_missing():
    gt = gt_of({0: [("p1", A), ("p2", B)], 1: [("p1", A), ("p2", B)], 2: [("p1", A)]}, 3)
    out = output_of({
        0: [TrackedBox(Identity("p1"), A, 1), TrackedBox(Identity("p2"), B, 2)],
        1: [TrackedBox(Identity("p2"), A, 1), TrackedBox(UNKNOWN, B, 2)],
        2: [TrackedBox(Identity("p1"), BBox(900, 0, 10, 10), 1)],
    }, 3, reid_count=7)
    rep = score(out, gt)
    assert rep.total_gt_detections == 5
    assert rep.incorrect_id == 3
    assert rep.correct_pct == 40.0
    assert (rep.fn, rep.fp, rep.reid_count) == (1, 1, 7)
    assert [fs.incorrect for fs in rep.per_frame] == [0, 2, 1]


def test_score_track_mode_maps_ids():
    gt = gt_of({f: [("p1", A), ("p2", B)] for f in range(4)}, 4)
    frames = {f: [TrackedBox(UNKNOWN, A, 5), TrackedBox(UNKNOWN, B, 9 if f < 3 else 11)] for f in range(4)}
    rep = score(output_of(frames, 4), gt, id_source="track")
    assert rep.incorrect_id == 1 and rep.id_source == "track"


def test_score_frame_range_mismatch():
    gt = gt_of({0: [("p1", A)]}, 2)
    with pytest.raises(FrameRangeMismatch):
        score(output_of({0: []}, 3), gt)
    with pytest.raises(FrameRangeMismatch):
        score(output_of({5: []}, 2), gt)


def test_duplicate_label_rejected():
    with pytest.raises(DuplicateLabelInFrame):
        gt_of({0: [("p1", A), ("p1", B)]}, 1)


def test_score_permutation_invariant(rng):
    boxes = [BBox(100 * k, 10 * k, 40, 90) for k in range(6)]
    labels = [f"p{k}" for k in range(6)]
    gt = gt_of({0: list(zip(labels, boxes))}, 1)
    ids = [Identity(labels[k]) if k % 3 else UNKNOWN for k in range(6)]
    entries = [TrackedBox(i, b.translate(2, 1), k) for k, (i, b) in enumerate(zip(ids, boxes))]
    base = score(output_of({0: entries}, 1), gt)
    for _ in range(10):
        perm = rng.permutation(6)
        rep = score(output_of({0: [entries[i] for i in perm]}, 1), gt)
        assert (rep.incorrect_id, rep.fn, rep.fp) == (base.incorrect_id, base.fn, base.fp)


def test_zero_incorrect_iff_all_matched_and_labelled():
    gt = gt_of({0: [("p1", A), ("p2", B)]}, 1)
    good = score(output_of({0: [TrackedBox(Identity("p1"), A, 1), TrackedBox(Identity("p2"), B, 2)]}, 1), gt)
    assert good.incorrect_id == 0 and good.correct_pct == 100.0
    missing = score(output_of({0: [TrackedBox(Identity("p1"), A, 1)]}, 1), gt)
    assert missing.incorrect_id == 1


def test_count_det_errors_examples():
    gt = gt_of({0: [("p1", A)], 1: [("p1", A)]}, 2)
    perfect = [FrameObservations(f, (Detection(f, A),)) for f in range(2)]
    assert count_det_errors(perfect, gt) == (0, 0)
    spurious = [perfect[0], FrameObservations(1, (Detection(1, A), Detection(1, BBox(1500, 800, 30, 30))))]
    assert count_det_errors(spurious, gt) == (0, 1)
    assert count_det_errors(perfect[:1], gt) == (1, 0)


def test_drop_rate_shows_up_as_missed_detections():
    b = generate(ScenarioSpec(agents=2, frames=500, drop_rate=0.01, det_noise=0.3, seed=21))
    assert b.gt.total_detections == 1000
    fn, fp = count_det_errors(b.detections, b.gt)
    dropped = b.gt.total_detections - sum(len(o.detections) for o in b.detections)
    assert fn == dropped and fp == 0
    assert abs(fn - 10) <= 3 * np.sqrt(10)


def test_render_table_layout():
    text = render_table([{"dt": "FN 0 / FP 0", "tracker": "SORT", "tracker_result": "98.00%",
                          "reider": "RBF-SVM", "reid_count": 12, "incorrect_id": 3, "result": "99.78%"}])
    header = text.splitlines()[1]
    assert [c.strip() for c in header.strip("|").split("|")] == list(TABLE_COLUMNS)
    assert "RBF-SVM" in text and "99.78%" in text
    widths = {len(line) for line in text.splitlines()}
    assert len(widths) == 1


def test_report_dict_round_trip():
    gt = gt_of({0: [("p1", A)], 1: [("p1", A)]}, 2)
    rep = score(output_of({0: [TrackedBox(Identity("p1"), A, 1)]}, 2), gt)
    assert EvalReport.from_dict(rep.to_dict()) == rep
