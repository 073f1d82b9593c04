import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posetreid.errors import DimMismatch, EmptyGallery, SingleClass
from posetreid.reid import (
    GallerySample,
    RbfSvmModel,
    classify,
    classify_crop_batch,
    rbf_kernel,
    softmax,
    train_classifier,
)


def clusters(rng, centers, n=30, std=0.3):
    return [GallerySample(f"c{k}", c + rng.normal(0, std, len(c))) for k, c in enumerate(centers) for _ in range(n)]


@pytest.fixture
def five_class(rng):
    dim, std = 64, 0.05
    centers = np.eye(5, dim) * 5 * std * math.sqrt(dim)
    gal = clusters(rng, centers, std=std)
    return centers, std, train_classifier(gal)


def test_kernel_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.7) == 1.0
    assert rbf_kernel([0, 0], [1, 1], 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    with pytest.raises(DimMismatch):
        rbf_kernel([0, 0], [0, 0, 0], 1.0)
    with pytest.raises(ValueError):
        rbf_kernel([0], [1], 0.0)


vecs = st.lists(st.floats(-10, 10), min_size=3, max_size=3)


@settings(max_examples=200, deadline=None)
@given(vecs, vecs, st.floats(0.1, 10), st.floats(1.01, 3))
def test_kernel_symmetric_and_monotone(a, b, gamma, stretch):
    a, b = np.array(a), np.array(b)
    k = rbf_kernel(a, b, gamma)
    assert k == rbf_kernel(b, a, gamma)
    assert 0 <= k <= 1
    if np.linalg.norm(b - a) > 1e-6:
        assert rbf_kernel(a, a + stretch * (b - a), gamma) <= k


def test_separable_training_accuracy(rng):
    gal = clusters(rng, [np.array([0.0, 0.0]), np.array([5.0, 5.0])], n=20, std=0.5)
    m = train_classifier(gal, C=1000.0)
    assert all(classify(m, s.embedding)[0].label == s.label for s in gal)


def test_training_errors():
    with pytest.raises(EmptyGallery):
        train_classifier([])
    with pytest.raises(SingleClass):
        train_classifier([GallerySample("a", [0.0, 1.0]), GallerySample("a", [1.0, 0.0])])
    with pytest.raises(DimMismatch):
        train_classifier([GallerySample("a", [0.0, 1.0]), GallerySample("b", [1.0, 0.0, 2.0])])


def test_duplicate_sample_in_two_classes(rng):
    gal = clusters(rng, [np.zeros(3), np.full(3, 4.0)], n=10)
    gal.append(GallerySample("c1", gal[0].embedding))
    m = train_classifier(gal)
    assert m.kkt_max_violation() <= 1e-3


def test_held_out_accuracy_agrees_with_nearest_mean(rng, five_class):
    centers, std, m = five_class
    truth = rng.integers(0, 5, 500)
    probes = centers[truth] + rng.normal(0, std, (500, centers.shape[1]))
    nearest = np.argmin(((probes[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    predicted = [classify(m, p)[0].label for p in probes]
    assert np.mean(nearest == truth) == 1.0
    assert np.mean([p == f"c{t}" for p, t in zip(predicted, truth)]) >= 0.99


def test_kkt_within_tolerance(five_class):
    _, _, m = five_class
    assert m.kkt_max_violation() <= 1e-3
    for coef in m.dual_coefs:
        assert np.all(np.abs(coef) <= m.C + 1e-12)


def test_training_is_deterministic(rng):
    gal = clusters(rng, np.eye(3, 8) * 3, n=10)
    a, b = train_classifier(gal), train_classifier(gal)
    for x, y in zip(a.dual_coefs, b.dual_coefs):
        assert np.array_equal(x, y)
    assert a.biases == b.biases


def test_interior_support_vector_is_known(five_class):
    _, _, m = five_class
    pos = m.dual_coefs[2] > 0
    sv = m.support_vectors[2][pos][0]
    ident, conf = classify(m, sv)
    assert ident.label == "c2" and conf >= m.min_conf


def test_symmetric_midpoint_is_unsure(rng):
    pts = rng.normal(0, 0.3, (20, 2))
    gal = [GallerySample("a", p + [2, 0]) for p in pts] + [GallerySample("b", [-p[0] - 2, p[1]]) for p in pts]
    m = train_classifier(gal, gamma=1.0).with_min_conf(0.75)
    ident, conf = classify(m, [0.0, 0.0])
    assert conf == pytest.approx(0.5, abs=1e-2)
    assert not ident.is_known


def test_constant_scores_give_uniform_confidence():
    sv = [np.zeros((1, 2))] * 3
    m = RbfSvmModel(["a", "b", "c"], sv, [np.zeros(1)] * 3, [0.2, 0.2, 0.2], 1.0, 1.0)
    assert np.allclose(m.confidences([1.0, 1.0]), 1 / 3)
    assert np.allclose(softmax([3.0, 3.0]), 0.5)


def test_dim_mismatch_on_classify(five_class):
    _, _, m = five_class
    with pytest.raises(DimMismatch):
        classify(m, np.zeros(3))


def test_batch_matches_elementwise(rng, five_class):
    centers, std, m = five_class
    assert classify_crop_batch(m, []) == []
    es = list(centers[rng.integers(0, 5, 12)] + rng.normal(0, std, (12, centers.shape[1])))
    assert classify_crop_batch(m, es[:1]) == [classify(m, es[0])]
    perm = rng.permutation(12)
    batch = classify_crop_batch(m, [es[i] for i in perm])
    assert batch == [classify(m, es[i]) for i in perm]


def test_argmax_invariant_to_class_order(rng, five_class):
    centers, std, m = five_class
    order = [3, 0, 4, 1, 2]
    shuffled = RbfSvmModel([m.classes[i] for i in order], [m.support_vectors[i] for i in order],
                           [m.dual_coefs[i] for i in order], [m.biases[i] for i in order], m.gamma, m.C)
    for p in centers[rng.integers(0, 5, 40)] + rng.normal(0, std * 3, (40, centers.shape[1])):
        (a, ca), (b, cb) = classify(m, p), classify(shuffled, p)
        assert a == b and ca == pytest.approx(cb, abs=1e-12)


def test_raising_threshold_only_demotes(rng, five_class):
    centers, std, m = five_class
    probes = rng.normal(0, 1, (60, centers.shape[1])) * std * 8
    thresholds = (0.0, 0.2, 0.5, 0.8, 0.95)
    for lo_t, hi_t in zip(thresholds, thresholds[1:]):
        loose, strict = m.with_min_conf(lo_t), m.with_min_conf(hi_t)
        for p in probes:
            lo, hi = classify(loose, p)[0], classify(strict, p)[0]
            assert not hi.is_known or hi == lo
