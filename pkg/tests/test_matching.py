import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semvps.edt import no_feature_value, squared_edt
from semvps.images import LabelImage
from semvps.matching import (
    DEFAULT_FUSION,
    FusionParams,
    GaussianParams,
    MetricScores,
    bf_score,
    boundary_map,
    calibrate,
    class_similarity_dice,
    class_similarity_jaccard,
    collapse_to_skyline,
    extract_boundary,
    fuse,
    fuse_arrays,
    fusion_preset,
    score_pair,
    score_to_prob,
    weighted_region_score,
)

from .oracles import bf_exhaustive, boundary_set, edt_brute, per_class_dice_jaccard, random_labels, region_scores

labels = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 5))


# --- distance transform


@pytest.mark.parametrize("shape", [(1, 1), (1, 9), (7, 1), (13, 17), (40, 33)])
def test_edt_matches_brute_force(shape, rng, accel):
    for density in (0.0, 0.02, 0.2, 1.0):
        mask = rng.random(shape) < density
        want = edt_brute(mask) if mask.any() else np.full(shape, no_feature_value(shape))
        assert np.array_equal(squared_edt(mask), want)


def test_edt_single_pixel(accel):
    m = np.zeros((9, 11), bool)
    m[4, 2] = True
    yy, xx = np.mgrid[0:9, 0:11]
    assert np.array_equal(squared_edt(m), (yy - 4) ** 2 + (xx - 2) ** 2)


# --- region metrics


def test_class_similarity_definitions():
    a = np.array([[1, 1, 0, 0]], bool)
    b = np.array([[0, 1, 1, 0]], bool)
    assert class_similarity_dice(a, b) == pytest.approx(0.5)
    assert class_similarity_jaccard(a, b) == pytest.approx(1 / 3)
    z = np.zeros((1, 4), bool)
    assert class_similarity_dice(z, z) == 0.0 and class_similarity_jaccard(z, z) == 0.0
    with pytest.raises(ValueError):
        class_similarity_dice(a, np.zeros((2, 2), bool))


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_per_class_similarity_matches_sets(data):
    q = data.draw(labels)
    c = data.draw(arrays(np.uint8, q.shape, elements=st.integers(0, 5)))
    for k in range(6):
        d, j = per_class_dice_jaccard(q, c, k)
        assert class_similarity_dice(q == k, c == k) == pytest.approx(d, abs=1e-12)
        assert class_similarity_jaccard(q == k, c == k) == pytest.approx(j, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_weighted_region_matches_sets(data):
    q = data.draw(labels)
    c = data.draw(arrays(np.uint8, q.shape, elements=st.integers(0, 5)))
    d, j = region_scores(q, c)
    assert weighted_region_score(q, c, "dice") == pytest.approx(d, abs=1e-12)
    assert weighted_region_score(q, c, "jaccard") == pytest.approx(j, abs=1e-12)


def test_region_identity_and_disjoint(rng):
    img = random_labels(rng, 30, 40)
    assert weighted_region_score(img, img) == pytest.approx(1.0)
    assert weighted_region_score(img, img, "jaccard") == pytest.approx(1.0)
    a = np.zeros((4, 4), np.uint8)
    assert weighted_region_score(a, a + 1) == 0.0
    with pytest.raises(ValueError):
        weighted_region_score(a, a, "cosine")


def test_weights_come_from_candidate():
    q = np.array([[1, 1, 1, 2]], np.uint8)
    c = np.array([[1, 2, 2, 2]], np.uint8)
    # class 1: dice 2*1/(3+1)=0.5, weight 1/4; class 2: dice 2*1/(1+3)=0.5, weight 3/4
    assert weighted_region_score(q, c) == pytest.approx(0.5)
    # Jaccard: class 1 -> 1/3 weighted 1/4, class 2 -> 1/3 weighted 3/4
    assert weighted_region_score(q, c, "jaccard") == pytest.approx(1 / 3)
    # swapping arguments moves the weights
    q2 = np.array([[1, 1, 1, 1]], np.uint8)
    c2 = np.array([[1, 1, 2, 2]], np.uint8)
    assert weighted_region_score(q2, c2) == pytest.approx(2 / 3 * 0.5)
    assert weighted_region_score(c2, q2) == pytest.approx(2 / 3)


def test_label_image_inputs_accepted(rng):
    img = LabelImage(random_labels(rng, 8, 8))
    assert score_pair(img, img).as_tuple() == (1.0, 1.0, 1.0)


# --- boundaries


def test_boundary_map_matches_oracle(rng):
    for _ in range(20):
        img = random_labels(rng, 15, 21)
        for k in range(6):
            got = np.argwhere(extract_boundary(img, k)).astype(float)
            want = boundary_set(img, k)
            assert np.array_equal(got, want)
    assert boundary_map(np.zeros((3, 3), np.uint8)).tolist() == [[True] * 3, [True, False, True], [True] * 3]


@pytest.mark.parametrize("threshold", [1.0, 2.5, 5.0, 7.0])
@pytest.mark.parametrize("fixed", [False, True])
def test_bf_matches_exhaustive(threshold, fixed, rng, accel):
    for _ in range(25):
        h, w = rng.integers(4, 30, 2)
        q = random_labels(rng, h, w, n_blocks=rng.integers(0, 8))
        c = random_labels(rng, h, w, n_blocks=rng.integers(0, 8))
        assert bf_score(q, c, threshold, fixed) == bf_exhaustive(q, c, threshold, fixed=fixed)


def test_bf_threshold_is_strict():
    q = np.zeros((12, 12), np.uint8)
    c = np.zeros((12, 12), np.uint8)
    q[:, 6:] = 1
    c[:, 1:] = 1  # class-1 left edge five columns away
    near = bf_score(q, c, threshold=5.0000001)
    at = bf_score(q, c, threshold=5.0)
    assert near > at


def test_bf_identity_and_empty_classes():
    img = np.zeros((6, 6), np.uint8)
    img[2:4, 2:4] = 3
    assert bf_score(img, img) == 1.0
    assert bf_score(img, img, fixed_classes=True) == pytest.approx(2 / 6)


# --- fusion


def test_table_values():
    assert DEFAULT_FUSION.dice == GaussianParams(0.6686, 0.1813)
    assert DEFAULT_FUSION.jaccard == GaussianParams(0.5399, 0.1567)
    assert DEFAULT_FUSION.bf == GaussianParams(0.4275, 0.1387)
    assert fusion_preset("default") is DEFAULT_FUSION
    assert FusionParams.from_dict(DEFAULT_FUSION.to_dict()) == DEFAULT_FUSION
    with pytest.raises(ValueError):
        fusion_preset("nope")


def test_score_to_prob_is_normal_cdf():
    g = GaussianParams(0.3, 0.2)
    for x in np.linspace(-0.5, 1.5, 21):
        want = 0.5 * (1 + math.erf((x - 0.3) / (0.2 * math.sqrt(2))))
        assert score_to_prob(x, g) == pytest.approx(want, abs=1e-14)
    assert score_to_prob(np.array([0.3, 0.5]), g).shape == (2,)


def test_fuse_is_product():
    s = MetricScores(0.7, 0.55, 0.4)
    want = score_to_prob(0.7, DEFAULT_FUSION.dice) * score_to_prob(0.55, DEFAULT_FUSION.jaccard) * score_to_prob(0.4, DEFAULT_FUSION.bf)
    assert fuse(s) == pytest.approx(want, rel=1e-14)
    assert fuse_arrays(np.array([0.7]), np.array([0.55]), np.array([0.4]))[0] == pytest.approx(want)
    hi = MetricScores(0.9, 0.8, 0.7)
    assert fuse(hi) > fuse(s)


def test_metric_scores_range():
    with pytest.raises(ValueError):
        MetricScores(1.2, 0.5, 0.5)
    with pytest.raises(ValueError):
        GaussianParams(0.5, 0.0)


def test_calibrate(rng):
    s = rng.normal([0.6, 0.5, 0.4], [0.1, 0.05, 0.2], (500, 3))
    p = calibrate(s)
    assert p.dice.mean == pytest.approx(np.mean(s[:, 0]))
    assert p.bf.std == pytest.approx(np.std(s[:, 2], ddof=1))
    with pytest.raises(ValueError):
        calibrate(np.ones((5, 3)))
    with pytest.raises(ValueError):
        calibrate(np.ones((5, 2)))
    with pytest.raises(ValueError):
        calibrate(np.ones((1, 3)))


def test_collapse_to_skyline():
    img = np.array([[0, 1, 2, 3, 4, 5]], np.uint8)
    assert collapse_to_skyline(img).tolist() == [[0, 1, 1, 1, 1, 1]]
