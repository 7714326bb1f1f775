"""Ray casting against extruded-footprint buildings.

Two interchangeable kernels: a numba loop over rays and a numpy path that
vectorises over rays and loops over surfaces. Both visit surfaces in the same
order (building index, then walls in edge order, then the roof) and accept a
hit only when it is closer than the current best by more than ``TIE_EPS``, so
coincident surfaces resolve to the lowest building index on either path.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

T_MIN = 1e-9
TIE_EPS = 1e-9
_PAR_EPS = 1e-15


@njit
def _patch_class(s, z, zb, zt, off, rows, cols, patches):
    c = int(s * cols)
    if c < 0:
        c = 0
    elif c >= cols:
        c = cols - 1
    rb = int((z - zb) / (zt - zb) * rows)
    if rb < 0:
        rb = 0
    elif rb >= rows:
        rb = rows - 1
    # grids are stored top row first
    return patches[off + (rows - 1 - rb) * cols + c]


@njit
def _cast_rays_nb(orig, dirs, wall_geo, wall_meta, patches, bld_walls, roof_xy, bld_roof, roof_z, roof_cls, bbox, out_cls, out_dist):
    n = dirs.shape[0]
    nb = bld_walls.shape[0]
    for r in range(n):
        ox = orig[r, 0]
        oy = orig[r, 1]
        oz = orig[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        best = np.inf
        cls = 0
        for b in range(nb):
            # slab test against the building's bounding box
            t0 = 0.0
            t1 = np.inf
            miss = False
            for ax in range(3):
                o = ox if ax == 0 else (oy if ax == 1 else oz)
                d = dx if ax == 0 else (dy if ax == 1 else dz)
                lo = bbox[b, ax]
                hi = bbox[b, ax + 3]
                if abs(d) < _PAR_EPS:
                    if o < lo - 1e-9 or o > hi + 1e-9:
                        miss = True
                        break
                else:
                    ta = (lo - o) / d
                    tb = (hi - o) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t0:
                        t0 = ta
                    if tb < t1:
                        t1 = tb
            if miss or t1 < t0 - 1e-7 or t1 < T_MIN or t0 - 1e-7 > best:
                continue
            w0 = bld_walls[b, 0]
            for w in range(w0, w0 + bld_walls[b, 1]):
                x0 = wall_geo[w, 0]
                y0 = wall_geo[w, 1]
                ex = wall_geo[w, 2] - x0
                ey = wall_geo[w, 3] - y0
                den = dx * ey - dy * ex
                if abs(den) < _PAR_EPS:
                    continue
                wx = x0 - ox
                wy = y0 - oy
                t = (wx * ey - wy * ex) / den
                if t < T_MIN or not (t < best - TIE_EPS):
                    continue
                s = (wx * dy - wy * dx) / den
                if s < 0.0 or s > 1.0:
                    continue
                z = oz + t * dz
                zb = wall_geo[w, 4]
                zt = wall_geo[w, 5]
                if z < zb or z > zt:
                    continue
                best = t
                cls = _patch_class(s, z, zb, zt, wall_meta[w, 1], wall_meta[w, 2], wall_meta[w, 3], patches)
            if abs(dz) >= _PAR_EPS:
                t = (roof_z[b] - oz) / dz
                if t >= T_MIN and t < best - TIE_EPS:
                    px = ox + t * dx
                    py = oy + t * dy
                    v0 = bld_roof[b, 0]
                    nv = bld_roof[b, 1]
                    inside = False
                    j = v0 + nv - 1
                    for i in range(v0, v0 + nv):
                        xi = roof_xy[i, 0]
                        yi = roof_xy[i, 1]
                        xj = roof_xy[j, 0]
                        yj = roof_xy[j, 1]
                        if (yi > py) != (yj > py):
                            if px < (xj - xi) * (py - yi) / (yj - yi) + xi:
                                inside = not inside
                        j = i
                    if inside:
                        best = t
                        cls = roof_cls[b]
        out_cls[r] = cls
        out_dist[r] = best


def _cast_rays_np(orig, dirs, wall_geo, wall_meta, patches, bld_walls, roof_xy, bld_roof, roof_z, roof_cls, bbox, out_cls, out_dist):
    ox, oy, oz = orig[:, 0], orig[:, 1], orig[:, 2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    best = np.full(len(dirs), np.inf)
    cls = np.zeros(len(dirs), dtype=np.uint8)
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in range(len(bld_walls)):
            w0, nw = bld_walls[b]
            for w in range(w0, w0 + nw):
                x0, y0, x1, y1, zb, zt = wall_geo[w]
                ex, ey = x1 - x0, y1 - y0
                den = dx * ey - dy * ex
                wx, wy = x0 - ox, y0 - oy
                t = (wx * ey - wy * ex) / den
                s = (wx * dy - wy * dx) / den
                z = oz + t * dz
                hit = (np.abs(den) >= _PAR_EPS) & (t >= T_MIN) & (t < best - TIE_EPS)
                hit &= (s >= 0.0) & (s <= 1.0) & (z >= zb) & (z <= zt)
                if not hit.any():
                    continue
                off, rows, cols = wall_meta[w, 1:]
                c = np.clip((s[hit] * cols).astype(np.int64), 0, cols - 1)
                rb = np.clip(((z[hit] - zb) / (zt - zb) * rows).astype(np.int64), 0, rows - 1)
                best[hit] = t[hit]
                cls[hit] = patches[off + (rows - 1 - rb) * cols + c]
            t = (roof_z[b] - oz) / dz
            cand = (np.abs(dz) >= _PAR_EPS) & (t >= T_MIN) & (t < best - TIE_EPS)
            if not cand.any():
                continue
            idx = np.nonzero(cand)[0]
            px = ox[idx] + t[idx] * dx[idx]
            py = oy[idx] + t[idx] * dy[idx]
            v0, nv = bld_roof[b]
            poly = roof_xy[v0 : v0 + nv]
            inside = np.zeros(len(idx), dtype=bool)
            j = nv - 1
            for i in range(nv):
                xi, yi = poly[i]
                xj, yj = poly[j]
                crosses = (yi > py) != (yj > py)
                xcross = (xj - xi) * (py - yi) / (yj - yi) + xi
                inside ^= crosses & (px < xcross)
                j = i
            idx = idx[inside]
            best[idx] = t[idx]
            cls[idx] = roof_cls[b]
    out_cls[:] = cls
    out_dist[:] = best


def cast_rays_packed(packed, origins: np.ndarray, dirs: np.ndarray):
    """Cast many rays. ``origins`` is (3,) or (n, 3); ``dirs`` is (n, 3) unit vectors.

    Returns ``(classes uint8 (n,), distances float64 (n,))``; misses are
    ``(0, inf)``.
    """
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    origins = np.asarray(origins, dtype=np.float64)
    if origins.ndim == 1:
        origins = np.broadcast_to(origins, dirs.shape)
    origins = np.ascontiguousarray(origins)
    out_cls = np.zeros(len(dirs), dtype=np.uint8)
    out_dist = np.empty(len(dirs), dtype=np.float64)
    args = (
        packed.wall_geo,
        packed.wall_meta,
        packed.patches,
        packed.bld_walls,
        packed.roof_xy,
        packed.bld_roof,
        packed.roof_z,
        packed.roof_cls,
        packed.bbox,
    )
    if _accel.USE_NUMBA:
        _cast_rays_nb(origins, dirs, *args, out_cls, out_dist)
    else:
        _cast_rays_np(origins, dirs, *args, out_cls, out_dist)
    return out_cls, out_dist
