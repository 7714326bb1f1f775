import numpy as np
import pytest

from semvps import _accel
from semvps.camera import CameraIntrinsics
from semvps.matching import collapse_to_skyline, score_pair
from semvps.projection import view_sampling_maps, yaw_columns
from semvps.scoring import PreparedQuery, disk_offsets, score_views

from .oracles import random_labels

INTR = CameraIntrinsics.from_diagonal_fov(48, 36, 100.0)
W, H = 128, 64


def blocky_erps(rng, n):
    return np.stack([random_labels(rng, H, W, n_blocks=25) for _ in range(n)])


def maps(tilts, yaws):
    rows, cols = [], []
    for pitch, roll in tilts:
        r, az0 = view_sampling_maps(INTR, pitch, roll, W, H)
        rows.append(r.ravel())
        cols.append(np.stack([yaw_columns(az0, y, W).ravel() for y in yaws]))
    return np.stack(rows), np.stack(cols)


def test_disk_offsets():
    dy, dx = disk_offsets(2.5)
    pts = set(zip(dy.tolist(), dx.tolist()))
    want = {(y, x) for y in range(-3, 4) for x in range(-3, 4) if y * y + x * x < 6.25}
    assert pts == want and len(dy) == len(want)
    d2 = dy**2 + dx**2
    assert np.all(np.diff(d2) >= 0)
    assert len(disk_offsets(5.0)[0]) == sum(1 for y in range(-5, 6) for x in range(-5, 6) if y * y + x * x < 25)


@pytest.mark.parametrize("threshold", [1.0, 2.5, 5.0, 40.0])
@pytest.mark.parametrize("fixed", [False, True])
@pytest.mark.parametrize("skyline", [False, True])
def test_batch_scores_match_pairwise(threshold, fixed, skyline, rng, accel):
    erps = blocky_erps(rng, 3)
    tilts, yaws = [(0.0, 0.0), (3.0, -2.0)], [0.0, 7.0, 181.0]
    rows, cols = maps(tilts, yaws)
    query = random_labels(rng, INTR.height, INTR.width, n_blocks=8)
    pq = PreparedQuery.build(query, threshold, fixed, skyline)
    sel = np.array([2, 0])
    out = score_views(erps, sel, rows, cols, (INTR.height, INTR.width), pq)
    assert out.shape == (2, 2, 3, 3)
    for a, p in enumerate(sel):
        for t in range(len(tilts)):
            for y in range(len(yaws)):
                view = erps[p][rows[t], cols[t, y]].reshape(INTR.height, INTR.width)
                q, c, n = query, view, 6
                if skyline:
                    q, c, n = collapse_to_skyline(q), collapse_to_skyline(c), 2
                want = score_pair(q, c, threshold, fixed, n).as_tuple()
                got = out[a, t, y]
                assert got[0] == pytest.approx(want[0], abs=1e-12)
                assert got[1] == pytest.approx(want[1], abs=1e-12)
                assert got[2] == want[2]


def test_paths_bit_identical(rng):
    if not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    erps = blocky_erps(rng, 4)
    rows, cols = maps([(0.0, 0.0), (-2.0, 1.0)], np.arange(-10.0, 11.0, 2.5))
    pq = PreparedQuery.build(random_labels(rng, INTR.height, INTR.width), 5.0)
    res = {}
    saved = _accel.USE_NUMBA
    try:
        for use in (True, False):
            _accel.USE_NUMBA = use
            res[use] = score_views(erps, np.arange(4), rows, cols, (INTR.height, INTR.width), pq)
    finally:
        _accel.USE_NUMBA = saved
    assert np.array_equal(res[True], res[False])


def test_identical_view_scores_one(rng, accel):
    erps = blocky_erps(rng, 1)
    rows, cols = maps([(0.0, 0.0)], [33.0])
    query = erps[0][rows[0], cols[0, 0]].reshape(INTR.height, INTR.width)
    out = score_views(erps, np.array([0]), rows, cols, (INTR.height, INTR.width), PreparedQuery.build(query))
    assert out[0, 0, 0].tolist() == [1.0, 1.0, 1.0]


def test_empty_selection_and_bad_threshold(rng):
    rows, cols = maps([(0.0, 0.0)], [0.0])
    pq = PreparedQuery.build(np.zeros((INTR.height, INTR.width), np.uint8))
    assert score_views(blocky_erps(rng, 1), np.array([], dtype=np.int64), rows, cols, (INTR.height, INTR.width), pq).shape == (0, 1, 1, 3)
    with pytest.raises(ValueError):
        PreparedQuery.build(np.zeros((4, 4), np.uint8), 0.0)
