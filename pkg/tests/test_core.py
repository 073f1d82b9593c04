import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posetreid.core import (
    NECK,
    UNKNOWN,
    BBox,
    Detection,
    FrameObservations,
    Identity,
    Keypoints,
    keypoints_to_bbox,
    representative_point,
)
from posetreid.errors import NoVisibleKeypoints


def kps_from(points, conf=1.0):
    arr = np.zeros((25, 3))
    for i, (x, y) in enumerate(points):
        arr[i] = (x, y, conf)
    return Keypoints(arr)


def test_single_point_gives_degenerate_box():
    assert keypoints_to_bbox(kps_from([(10, 20)]), pad_frac=0) == BBox(10, 20, 0, 0)


def test_box_is_min_max():
    assert keypoints_to_bbox(kps_from([(0, 0), (10, 0), (10, 30)]), pad_frac=0) == BBox(0, 0, 10, 30)


def test_padding_is_fraction_of_extent():
    b = keypoints_to_bbox(kps_from([(0, 0), (10, 30)]), pad_frac=0.1)
    assert np.allclose(b.as_list(), [-1, -3, 12, 36])


def test_no_visible_keypoints():
    with pytest.raises(NoVisibleKeypoints):
        keypoints_to_bbox(np.zeros((25, 3)))


def test_missing_points_are_ignored():
    arr = np.zeros((25, 3))
    arr[0] = (5, 5, 1)
    arr[1] = (1000, 1000, 0)  # conf 0: coordinates mean nothing
    arr[2] = (15, 25, 0.4)
    assert keypoints_to_bbox(arr, pad_frac=0) == BBox(5, 5, 10, 20)


def test_representative_point_neck():
    arr = np.zeros((25, 3))
    arr[NECK] = (50, 60, 0.9)
    det = Detection(0, BBox(0, 0, 100, 100), keypoints=Keypoints(arr))
    assert representative_point(det) == (50, 60)


def test_representative_point_center_without_keypoints():
    assert representative_point(Detection(0, BBox(0, 0, 10, 20))) == (5, 10)


def test_representative_point_center_when_neck_missing():
    arr = np.zeros((25, 3))
    arr[0] = (11, 11, 1.0)
    det = Detection(0, BBox(10, 10, 4, 4), keypoints=Keypoints(arr))
    assert representative_point(det) == (12, 12)


@pytest.mark.parametrize("vals", [(0, 0, -1, 1), (0, 0, 1, -1), (float("nan"), 0, 1, 1), (0, float("inf"), 1, 1)])
def test_bbox_validation(vals):
    with pytest.raises(ValueError):
        BBox(*vals)


def test_keypoints_shape_and_conf_validation():
    with pytest.raises(ValueError):
        Keypoints(np.zeros((24, 3)))
    bad = np.zeros((25, 3))
    bad[0, 2] = 1.5
    with pytest.raises(ValueError):
        Keypoints(bad)


def test_detection_needs_a_visible_keypoint():
    with pytest.raises(ValueError):
        Detection(0, BBox(0, 0, 1, 1), keypoints=Keypoints(np.zeros((25, 3))))


def test_detection_embedding_is_frozen():
    d = Detection(0, BBox(0, 0, 1, 1), embedding=[1.0, 2.0])
    with pytest.raises(ValueError):
        d.embedding[0] = 3.0
    assert d.without_embedding().embedding is None


def test_frame_observations_frame_consistency():
    with pytest.raises(ValueError):
        FrameObservations(1, (Detection(2, BBox(0, 0, 1, 1)),))


def test_identity():
    assert not UNKNOWN.is_known
    assert Identity.known("p1").is_known
    assert str(Identity("p1")) == "p1"
    with pytest.raises(ValueError):
        Identity("")


coords = st.floats(-1e4, 1e4, allow_nan=False)
point_sets = st.lists(st.tuples(coords, coords), min_size=1, max_size=25)


@settings(max_examples=200, deadline=None)
@given(point_sets, st.floats(0, 0.5))
def test_box_contains_all_visible_points(points, pad):
    b = keypoints_to_bbox(kps_from(points), pad_frac=pad)
    tol = 1e-6 * (1 + max(abs(v) for p in points for v in p))
    for x, y in points:
        assert b.x - tol <= x <= b.x + b.w + tol
        assert b.y - tol <= y <= b.y + b.h + tol


@settings(max_examples=200, deadline=None)
@given(point_sets, st.floats(0, 0.5), coords, coords)
def test_translation_equivariance(points, pad, dx, dy):
    b = keypoints_to_bbox(kps_from(points), pad_frac=pad)
    moved = keypoints_to_bbox(kps_from([(x + dx, y + dy) for x, y in points]), pad_frac=pad)
    scale = 1e-6 * (1 + abs(dx) + abs(dy) + max(abs(v) for p in points for v in p))
    assert np.allclose(moved.as_list(), b.translate(dx, dy).as_list(), atol=scale, rtol=0)


@settings(max_examples=200, deadline=None)
@given(point_sets)
def test_neck_inside_keypoint_box(points):
    kps = kps_from(points)
    det = Detection(0, keypoints_to_bbox(kps), keypoints=kps)
    x, y = representative_point(det)
    b = det.bbox
    assert b.x <= x <= b.x + b.w and b.y <= y <= b.y + b.h
