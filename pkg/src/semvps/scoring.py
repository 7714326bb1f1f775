"""Batch scoring of candidate views derived from stored ERPs.

For each stored position the kernel gathers every rotation's view straight
from the ERP through precomputed (row, column) maps, then computes the
weighted Dice, weighted Jaccard and Boundary F1 against one prepared query.
Query-side work (boundary extraction, per-class distance transforms) is done
once in :class:`PreparedQuery`.

Precision uses the query's exact distance transform. Recall needs the
candidate-side distance instead; rather than a distance transform per
candidate, each query boundary pixel checks the rows of the threshold disk
around it against per-row bitsets of the candidate's class boundary. That
test is exact for the strict threshold because a disk row is a contiguous
run of columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import njit
from .city_model import N_CLASSES
from .edt import squared_edt
from .matching import boundary_map

FULL_CLASS_MAP = np.arange(N_CLASSES, dtype=np.uint8)
SKYLINE_CLASS_MAP = np.array([0, 1, 1, 1, 1, 1], dtype=np.uint8)


def disk_offsets(threshold: float):
    """Integer offsets with ``dy² + dx² < threshold²``, nearest first."""
    r = int(math.ceil(threshold))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    d2 = dy * dy + dx * dx
    keep = d2 < threshold * threshold
    dy, dx, d2 = dy[keep], dx[keep], d2[keep]
    order = np.lexsort((dx, dy, d2))
    return dy[order].astype(np.int64), dx[order].astype(np.int64)


@dataclass(eq=False)
class PreparedQuery:
    pixels: np.ndarray  # (h, w) uint8, already class-mapped
    n_classes: int
    threshold: float
    fixed_classes: bool
    class_map: np.ndarray
    flat: np.ndarray
    qdist2: np.ndarray  # (n_classes, N) int64
    qnear: np.ndarray  # (n_classes, N) uint8, qdist2 < threshold²
    qb_idx: np.ndarray
    qb_cls: np.ndarray
    query_boundary: np.ndarray  # (n_classes,)
    dy: np.ndarray
    dx: np.ndarray

    @classmethod
    def build(cls, pixels: np.ndarray, threshold: float = 5.0, fixed_classes: bool = False, skyline: bool = False):
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        cmap = SKYLINE_CLASS_MAP if skyline else FULL_CLASS_MAP
        n_classes = 2 if skyline else N_CLASSES
        px = cmap[np.asarray(pixels, dtype=np.uint8)]
        bnd = boundary_map(px)
        qdist2 = np.empty((n_classes, px.size), dtype=np.int64)
        nqb = np.zeros(n_classes, dtype=np.int64)
        for k in range(n_classes):
            bk = bnd & (px == k)
            nqb[k] = bk.sum()
            qdist2[k] = squared_edt(bk).ravel()
        qb_idx = np.flatnonzero(bnd).astype(np.int64)
        qb_cls = px.ravel()[qb_idx].astype(np.int64)
        dy, dx = disk_offsets(threshold)
        return cls(
            pixels=px,
            n_classes=n_classes,
            threshold=float(threshold),
            fixed_classes=bool(fixed_classes),
            class_map=cmap,
            flat=np.ascontiguousarray(px.ravel()),
            qdist2=qdist2,
            qnear=(qdist2 < float(threshold) ** 2).astype(np.uint8),
            qb_idx=qb_idx,
            qb_cls=qb_cls,
            query_boundary=nqb,
            dy=dy,
            dx=dx,
        )


@njit
def _any_bit(bits, c, y, x0, x1):
    """True if any bit in columns ``x0..x1`` of row ``y`` is set (32 columns per word)."""
    wa = x0 >> 5
    wb = x1 >> 5
    for wi in range(wa, wb + 1):
        lo = x0 - wi * 32 if wi == wa else 0
        hi = x1 - wi * 32 if wi == wb else 31
        mask = ((1 << (hi - lo + 1)) - 1) << lo
        if bits[c, y, wi] & mask:
            return True
    return False


@njit
def _score_nb(erps, pos_sel, rows, cols, h, w, cmap, q, qnear, qb_idx, qb_cls, nqb, dy, dx, thr2, n_classes, fixed, out):
    npix = h * w
    n_rot = rows.shape[0]
    n_yaw = cols.shape[1]
    view = np.empty(npix, dtype=np.uint8)
    # candidate boundary of each class as per-row bitsets
    nwords = (w + 31) // 32
    bits = np.zeros((n_classes, h, nwords), dtype=np.int64)
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    nq = np.zeros(n_classes, dtype=np.int64)
    nc = np.zeros(n_classes, dtype=np.int64)
    ncb = np.zeros(n_classes, dtype=np.int64)
    mp = np.zeros(n_classes, dtype=np.int64)
    mr = np.zeros(n_classes, dtype=np.int64)
    # half-width of the threshold disk on each row offset
    r = 0
    for o in range(dy.shape[0]):
        r = max(r, abs(dy[o]))
    half = np.full(2 * r + 1, -1, dtype=np.int64)
    for o in range(dy.shape[0]):
        half[dy[o] + r] = max(half[dy[o] + r], abs(dx[o]))
    # visit disk rows nearest first: 0, -1, +1, -2, +2, ...
    row_off = np.empty(2 * r + 1, dtype=np.int64)
    for o in range(2 * r + 1):
        row_off[o] = (o + 1) // 2 * (1 if o % 2 == 0 else -1)
    nqbp = qb_idx.shape[0]
    for k in range(pos_sel.shape[0]):
        e = erps[pos_sel[k]]
        for ri in range(n_rot):
            rr = rows[ri]
            for yi in range(n_yaw):
                cc = cols[ri, yi]
                conf[:, :] = 0
                for p in range(npix):
                    v = cmap[e[rr[p], cc[p]]]
                    view[p] = v
                    conf[q[p], v] += 1
                for a in range(n_classes):
                    s_q = 0
                    s_c = 0
                    for b in range(n_classes):
                        s_q += conf[a, b]
                        s_c += conf[b, a]
                    nq[a] = s_q
                    nc[a] = s_c
                wd = 0.0
                wj = 0.0
                for a in range(n_classes):
                    if nc[a] == 0:
                        continue
                    inter = conf[a, a]
                    wd += inter / (0.5 * (nc[a] + nq[a])) * nc[a]
                    wj += inter / (nc[a] + nq[a] - inter) * nc[a]
                ncb[:] = 0
                mp[:] = 0
                bits[:, :, :] = 0
                for yy in range(h):
                    for xx in range(w):
                        p = yy * w + xx
                        v = view[p]
                        isb = yy == 0 or yy == h - 1 or xx == 0 or xx == w - 1
                        if not isb:
                            isb = view[p - 1] != v or view[p + 1] != v or view[p - w] != v or view[p + w] != v
                        if isb:
                            ncb[v] += 1
                            mp[v] += qnear[v, p]
                            bits[v, yy, xx >> 5] |= 1 << (xx & 31)
                mr[:] = 0
                for t in range(nqbp):
                    p = qb_idx[t]
                    c = qb_cls[t]
                    if ncb[c] == 0:
                        continue
                    py = p // w
                    px = p - py * w
                    for o in range(2 * r + 1):
                        hw = half[row_off[o] + r]
                        yy = py + row_off[o]
                        if hw < 0 or yy < 0 or yy >= h:
                            continue
                        if _any_bit(bits, c, yy, max(px - hw, 0), min(px + hw, w - 1)):
                            mr[c] += 1
                            break
                total = 0.0
                present = 0
                for a in range(n_classes):
                    if ncb[a] == 0 and nqb[a] == 0:
                        continue
                    present += 1
                    if ncb[a] == 0 or nqb[a] == 0:
                        continue
                    pr = mp[a] / ncb[a]
                    rc = mr[a] / nqb[a]
                    if rc + pr > 0:
                        total += 2.0 * pr * rc / (rc + pr)
                denom = n_classes if fixed else present
                out[k, ri, yi, 0] = min(1.0, wd / npix)
                out[k, ri, yi, 1] = min(1.0, wj / npix)
                out[k, ri, yi, 2] = total / denom if denom > 0 else 0.0


def _score_np(erps, pos_sel, rows, cols, h, w, cmap, q, qnear, qb_idx, qb_cls, nqb, dy, dx, thr2, n_classes, fixed, out):
    npix = h * w
    n_yaw = cols.shape[1]
    r = int(max(np.abs(dy).max(), np.abs(dx).max())) if len(dy) else 0
    struct = np.zeros((1, 2 * r + 1, 2 * r + 1), dtype=bool)
    struct[0, dy + r, dx + r] = True
    yoff = np.arange(n_yaw)[:, None]
    cc_ = n_classes * n_classes
    pidx = np.arange(npix)[None, :]
    for k, pos in enumerate(pos_sel):
        e = erps[pos]
        for ri in range(rows.shape[0]):
            views = cmap[e[rows[ri][None, :], cols[ri]]]  # (n_yaw, npix)
            conf = np.bincount(
                (yoff * cc_ + q[None, :].astype(np.int64) * n_classes + views).ravel(), minlength=n_yaw * cc_
            ).reshape(n_yaw, n_classes, n_classes)
            nq = conf.sum(axis=2)
            nc = conf.sum(axis=1)
            wd = np.zeros(n_yaw)
            wj = np.zeros(n_yaw)
            with np.errstate(divide="ignore", invalid="ignore"):
                for a in range(n_classes):
                    inter = conf[:, a, a]
                    d = inter / (0.5 * (nc[:, a] + nq[:, a])) * nc[:, a]
                    j = inter / (nc[:, a] + nq[:, a] - inter) * nc[:, a]
                    has = nc[:, a] > 0
                    wd = np.where(has, wd + d, wd)
                    wj = np.where(has, wj + j, wj)
            vv = views.reshape(n_yaw, h, w)
            bnd = np.zeros(vv.shape, dtype=bool)
            bnd[:, 0, :] = bnd[:, -1, :] = True
            bnd[:, :, 0] = bnd[:, :, -1] = True
            dv = vv[:, 1:, :] != vv[:, :-1, :]
            dh = vv[:, :, 1:] != vv[:, :, :-1]
            bnd[:, 1:, :] |= dv
            bnd[:, :-1, :] |= dv
            bnd[:, :, 1:] |= dh
            bnd[:, :, :-1] |= dh
            bflat = bnd.reshape(n_yaw, npix)
            hit = bflat & (qnear[views, pidx] != 0)
            ncb = np.zeros((n_yaw, n_classes), dtype=np.int64)
            mp = np.zeros((n_yaw, n_classes), dtype=np.int64)
            mr = np.zeros((n_yaw, n_classes), dtype=np.int64)
            for a in range(n_classes):
                ba = bflat & (views == a)
                ncb[:, a] = ba.sum(axis=1)
                mp[:, a] = (hit & (views == a)).sum(axis=1)
                sel = qb_idx[qb_cls == a]
                if len(sel) and ncb[:, a].any():
                    dil = ndimage.binary_dilation(ba.reshape(n_yaw, h, w), structure=struct)
                    mr[:, a] = dil.reshape(n_yaw, npix)[:, sel].sum(axis=1)
            total = np.zeros(n_yaw)
            present = np.zeros(n_yaw, dtype=np.int64)
            with np.errstate(divide="ignore", invalid="ignore"):
                for a in range(n_classes):
                    pres = (ncb[:, a] > 0) | (nqb[a] > 0)
                    present += pres
                    both = (ncb[:, a] > 0) & (nqb[a] > 0)
                    pr = mp[:, a] / ncb[:, a]
                    rc = mr[:, a] / nqb[a]
                    f1 = 2.0 * pr * rc / (rc + pr)
                    total = np.where(both & (rc + pr > 0), total + f1, total)
            denom = np.full(n_yaw, n_classes) if fixed else present
            out[k, ri, :, 0] = np.minimum(1.0, wd / npix)
            out[k, ri, :, 1] = np.minimum(1.0, wj / npix)
            out[k, ri, :, 2] = np.where(denom > 0, total / np.maximum(denom, 1), 0.0)


def score_views(erps, pos_sel, rows, cols, shape, query: PreparedQuery) -> np.ndarray:
    """Scores for every (position, pitch/roll combo, yaw) view.

    ``erps`` is ``(P, H, W)`` uint8; ``pos_sel`` picks positions;
    ``rows`` is ``(R, N)`` and ``cols`` ``(R, Y, N)`` ERP sampling maps for an
    ``(h, w) = shape`` output. Returns ``(len(pos_sel), R, Y, 3)`` holding
    (dice, jaccard, bf).
    """
    h, w = shape
    pos_sel = np.ascontiguousarray(pos_sel, dtype=np.int64)
    out = np.zeros((len(pos_sel), rows.shape[0], cols.shape[1], 3))
    if len(pos_sel) == 0:
        return out
    args = (
        erps,
        pos_sel,
        np.ascontiguousarray(rows, dtype=np.int32),
        np.ascontiguousarray(cols, dtype=np.int32),
        h,
        w,
        query.class_map,
        query.flat,
        query.qnear,
        query.qb_idx,
        query.qb_cls,
        query.query_boundary,
        query.dy,
        query.dx,
        query.threshold * query.threshold,
        query.n_classes,
        query.fixed_classes,
        out,
    )
    if _accel.USE_NUMBA:
        _score_nb(*args)
    else:
        _score_np(*args)
    return out
