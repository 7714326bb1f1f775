import numpy as np
import pytest

from semvps.geodesy import GridCoord, grid_to_geo
from semvps.images import LabelImage, Pose, Rotation
from semvps.matching import score_pair
from semvps.scenes import SCENE_CENTER
from semvps.sensitivity import (
    BinSummary,
    DistortionSpec,
    StudyConfig,
    bin_records,
    displacement_field,
    elastic_distort,
    ideal_view,
    measure_errors,
    run_study,
    summarize,
    summary_text,
    trial_seeds,
    trials_text,
)

from .oracles import bf_exhaustive, random_labels, region_scores


def test_zero_magnitude_is_identity(rng):
    img = LabelImage(random_labels(rng, 40, 50))
    assert elastic_distort(img, DistortionSpec(0.0)) == img


def test_field_bounded_and_smooth():
    dy, dx = displacement_field((60, 80), DistortionSpec(10.0, grid=6, smoothing=2, seed=4))
    assert dy.shape == (60, 80)
    assert np.abs(dy).max() <= 10.0 and np.abs(dx).max() <= 10.0
    # neighbouring pixels move together
    assert np.abs(np.diff(dy, axis=0)).max() < 2.0 and np.abs(np.diff(dx, axis=1)).max() < 2.0


def test_distortion_deterministic_per_seed(rng):
    img = LabelImage(random_labels(rng, 40, 50))
    a = elastic_distort(img, DistortionSpec(6.0, seed=1))
    b = elastic_distort(img, DistortionSpec(6.0, seed=1))
    c = elastic_distort(img, DistortionSpec(6.0, seed=2))
    assert a == b and a != c


def test_error_grows_with_magnitude(rng):
    img = LabelImage(random_labels(rng, 90, 120, n_blocks=12))
    errs = [np.mean([measure_errors(img, elastic_distort(img, DistortionSpec(m, seed=s)))[0] for s in range(6)]) for m in (2, 8, 24)]
    assert errs[0] < errs[1] < errs[2]


def test_measure_errors_definition(rng):
    a = LabelImage(random_labels(rng, 30, 30))
    b = LabelImage(random_labels(rng, 30, 30))
    reg, con = measure_errors(a, b)
    s = score_pair(b.pixels, a.pixels)
    assert reg == pytest.approx(1 - (s.dice + s.jaccard) / 2)
    assert con == pytest.approx(1 - s.bf)
    assert measure_errors(a, a) == (0.0, 0.0)
    with pytest.raises(ValueError):
        measure_errors(a, LabelImage(np.zeros((3, 3), np.uint8)))


def test_spec_validation():
    with pytest.raises(ValueError):
        DistortionSpec(-1.0)
    with pytest.raises(ValueError):
        DistortionSpec(1.0, grid=1)
    with pytest.raises(ValueError):
        StudyConfig(n_trials=0)
    assert StudyConfig.from_dict(StudyConfig().to_dict()) == StudyConfig()


def test_trial_seeds_independent_and_stable():
    s = trial_seeds(0, 50)
    assert len(set(s)) == 50
    assert trial_seeds(0, 10) == s[:10]


def test_binning_against_manual():
    err = np.array([0.01, 0.04, 0.05, 0.07, 0.21, 0.22, 0.24])
    pe = np.array([0.0, 2.0, 1.0, 3.0, 10.0, 20.0, 30.0])
    bins = bin_records(err, pe, "regional", 0.05)
    assert [(b.lo, b.hi, b.n) for b in bins] == [(0.0, 0.05, 2), (0.05, 0.1, 2), (0.2, 0.25, 3)]
    assert bins[2].median == 20.0 and bins[2].q1 == 15.0 and bins[2].q3 == 25.0 and bins[2].iqr == 10.0
    assert isinstance(bins[0], BinSummary)


def test_study_small(desk_db, desk_intr):
    gt = Pose(grid_to_geo(GridCoord(SCENE_CENTER.easting + 1, SCENE_CENTER.northing, desk_db.altitude), desk_db.datum), Rotation(60.0, 0.0, 0.0))
    cfg = StudyConfig(n_trials=4, magnitudes=(0.0, 40.0), radius=3.0, yaw_span=2.0)
    seen = []
    recs = run_study(desk_db, gt, desk_intr, cfg, progress=seen.append)
    assert len(recs) == 4 and seen == recs
    assert [r.magnitude for r in recs] == [0.0, 40.0, 0.0, 40.0]
    assert recs[0].position_error < 1e-6 and recs[0].regional_error == 0.0
    assert recs[1].regional_error > 0.0
    text = trials_text(recs)
    assert text.count("\n") == 5 and text.startswith("trial\tmagnitude")
    bins = summarize(recs)
    assert {b.kind for b in bins} == {"regional", "contour"}
    assert summary_text(bins).splitlines()[0].startswith("kind\tlo")
    # repeatable
    again = run_study(desk_db, gt, desk_intr, cfg)
    assert trials_text(again) == text


def test_ideal_view_requires_lattice_point(desk_db, desk_intr):
    off = Pose(grid_to_geo(GridCoord(SCENE_CENTER.easting + 0.5, SCENE_CENTER.northing, desk_db.altitude), desk_db.datum), Rotation())
    with pytest.raises(ValueError):
        ideal_view(desk_db, off, desk_intr)


def test_contour_error_grows_over_many_seeds(rng):
    img = LabelImage(random_labels(rng, 90, 120, n_blocks=12))
    means = [np.mean([measure_errors(img, elastic_distort(img, DistortionSpec(m, seed=s)))[1] for s in range(100)]) for m in (1, 4, 12, 32)]
    assert all(a <= b for a, b in zip(means, means[1:]))


def test_disjoint_labelings():
    a = np.zeros((20, 30), np.uint8)
    a[:, 15:] = 1
    b = np.full((20, 30), 2, np.uint8)
    b[:, 15:] = 3
    reg, con = measure_errors(LabelImage(a), LabelImage(b))
    assert reg == 1.0 and con == pytest.approx(1.0)


def test_shifted_block_against_oracles():
    a = np.zeros((30, 30), np.uint8)
    a[8:20, 6:18] = 3
    b = np.roll(a, 7, axis=1)
    reg, con = measure_errors(LabelImage(a), LabelImage(b))
    # the ideal image is the candidate side
    d, j = region_scores(b, a)
    assert reg == pytest.approx(1 - (d + j) / 2, abs=1e-12)
    assert con == 1 - bf_exhaustive(b, a)
