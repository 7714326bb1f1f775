"""Time each hot kernel on its numba and pure-numpy paths.

    python benchmarks/bench_kernels.py [--repeat 3]

Both paths run in one process by flipping ``semvps._accel.USE_NUMBA``; the
numba timings exclude compilation (one warm-up call first). Outputs of the
two paths are compared as well, so a speedup never hides a divergence.
"""

import argparse
import time

import numpy as np

from semvps import _accel
from semvps.camera import DESK_INTRINSICS
from semvps.edt import squared_edt
from semvps.projection import build_erp_lut, capture_faces, view_sampling_maps, yaw_columns
from semvps.scenes import SCENE_CENTER, asymmetric_scene
from semvps.scoring import PreparedQuery, score_views


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def run(name, fn, repeat):
    res = {}
    for use in (True, False):
        _accel.USE_NUMBA = use
        fn()  # warm-up / compile
        res[use] = best_of(fn, repeat)
    _accel.USE_NUMBA = _accel.HAVE_NUMBA
    (tn, on), (tp, op) = res[True], res[False]
    same = all(np.array_equal(a, b) for a, b in zip(on, op))
    print(f"{name:<28} numba {tn * 1e3:9.2f} ms   numpy {tp * 1e3:9.2f} ms   x{tp / tn:6.1f}   identical={same}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"numba available: {_accel.HAVE_NUMBA}")

    rng = np.random.default_rng(0)
    mask = rng.random((480, 640)) < 0.01
    run("squared_edt 640x480", lambda: (squared_edt(mask),), args.repeat)

    m = asymmetric_scene()
    origin = SCENE_CENTER.as_array()
    run("cube capture F=128", lambda: (capture_faces(m, origin, 128),), args.repeat)

    lut = build_erp_lut(128, 512, 256)
    _accel.USE_NUMBA = True
    erps = np.stack(
        [capture_faces(m, origin + [dx, 0.0, 0.0], 128)[lut.face, lut.row, lut.col] for dx in range(4)]
    )
    intr = DESK_INTRINSICS
    rows, az0 = view_sampling_maps(intr, 0.0, 0.0, 512, 256)
    cols = np.stack([yaw_columns(az0, y, 512).ravel() for y in np.arange(-30.0, 31.0)])[None]
    query = erps[0][rows, yaw_columns(az0, 10.0, 512)]
    pq = PreparedQuery.build(query, 5.0)
    n_views = len(erps) * cols.shape[1]

    def scoring():
        return (score_views(erps, np.arange(len(erps)), rows.ravel()[None], cols, (intr.height, intr.width), pq),)

    run(f"score {n_views} views 160x120", scoring, args.repeat)


if __name__ == "__main__":
    main()
