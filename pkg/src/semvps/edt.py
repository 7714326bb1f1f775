"""Exact squared Euclidean distance transform (two-pass, Meijster et al.).

The numba kernel is the primary path; the fallback defers to
``scipy.ndimage.distance_transform_edt`` which is also exact.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import njit


@njit
def _edt_sq_nb(mask):
    m, n = mask.shape
    inf = m + n
    g = np.empty((m, n), dtype=np.int64)
    for x in range(n):
        g[0, x] = 0 if mask[0, x] else inf
        for y in range(1, m):
            g[y, x] = 0 if mask[y, x] else g[y - 1, x] + 1
        for y in range(m - 2, -1, -1):
            if g[y + 1, x] < g[y, x]:
                g[y, x] = g[y + 1, x] + 1
    out = np.empty((m, n), dtype=np.int64)
    s = np.empty(n, dtype=np.int64)
    t = np.empty(n, dtype=np.int64)
    for y in range(m):
        q = 0
        s[0] = 0
        t[0] = 0
        for u in range(1, n):
            gu = g[y, u]
            while q >= 0:
                tq = t[q]
                sq = s[q]
                gs = g[y, sq]
                if (tq - sq) * (tq - sq) + gs * gs > (tq - u) * (tq - u) + gu * gu:
                    q -= 1
                else:
                    break
            if q < 0:
                q = 0
                s[0] = u
            else:
                sq = s[q]
                gs = g[y, sq]
                w = 1 + (u * u - sq * sq + gu * gu - gs * gs) // (2 * (u - sq))
                if w < n:
                    q += 1
                    s[q] = u
                    t[q] = w
        for u in range(n - 1, -1, -1):
            sq = s[q]
            gs = g[y, sq]
            out[y, u] = (u - sq) * (u - sq) + gs * gs
            if u == t[q]:
                q -= 1
    return out


def _edt_sq_np(mask: np.ndarray) -> np.ndarray:
    m, n = mask.shape
    if not mask.any():
        return np.full((m, n), (m + n) ** 2, dtype=np.int64)
    d = ndimage.distance_transform_edt(~mask)
    return np.rint(d * d).astype(np.int64)


def no_feature_value(shape) -> int:
    """Squared distance reported everywhere when the mask has no feature pixel."""
    return (shape[0] + shape[1]) ** 2


def squared_edt(mask: np.ndarray) -> np.ndarray:
    """Squared distance from every pixel to the nearest ``True`` pixel.

    Integer valued; pixels of an empty mask get :func:`no_feature_value`,
    which exceeds every in-image distance.
    """
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if mask.size == 0:
        return np.zeros(mask.shape, dtype=np.int64)
    if _accel.USE_NUMBA:
        out = _edt_sq_nb(mask)
        if not mask.any():
            out[:] = no_feature_value(mask.shape)
        return out
    return _edt_sq_np(mask)
