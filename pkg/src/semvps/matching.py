"""Region (Dice, Jaccard) and contour (Boundary F1) similarity between label
images, and the Gaussian-CDF fusion of the three scores into a likelihood.

Weights for the region scores come from the candidate image, so the weighted
scores are not symmetric in their arguments. The batch scorer in
:mod:`semvps.scoring` evaluates the exact same arithmetic per candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .city_model import N_CLASSES
from .edt import squared_edt
from .images import LabelImage

DEFAULT_BF_THRESHOLD = 5.0


@dataclass(frozen=True)
class MetricScores:
    dice: float
    jaccard: float
    bf: float

    def __post_init__(self):
        for name in ("dice", "jaccard", "bf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} score {v} outside [0, 1]")

    def as_tuple(self):
        return (self.dice, self.jaccard, self.bf)

    @property
    def region(self) -> float:
        return 0.5 * (self.dice + self.jaccard)


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("standard deviation must be positive")


@dataclass(frozen=True)
class FusionParams:
    dice: GaussianParams
    jaccard: GaussianParams
    bf: GaussianParams

    def to_dict(self) -> dict:
        return {k: {"mean": getattr(self, k).mean, "std": getattr(self, k).std} for k in ("dice", "jaccard", "bf")}

    @classmethod
    def from_dict(cls, d) -> "FusionParams":
        if isinstance(d, str):
            return fusion_preset(d)
        return cls(*(GaussianParams(float(d[k]["mean"]), float(d[k]["std"])) for k in ("dice", "jaccard", "bf")))


# Score distributions calibrated on nine real smartphone images.
DEFAULT_FUSION = FusionParams(
    dice=GaussianParams(mean=0.6686, std=0.1813),
    jaccard=GaussianParams(mean=0.5399, std=0.1567),
    bf=GaussianParams(mean=0.4275, std=0.1387),
)


def fusion_preset(name: str) -> FusionParams:
    if name.lower() == "default":
        return DEFAULT_FUSION
    raise ValueError(f"unknown fusion preset {name!r}")


def _pixels(x) -> np.ndarray:
    return x.pixels if isinstance(x, LabelImage) else np.asarray(x)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# region metrics


def class_mask(img, cls: int) -> np.ndarray:
    return _pixels(img) == cls


def class_similarity_dice(query: np.ndarray, cand: np.ndarray) -> float:
    """Per-class Dice coefficient of two boolean masks; 0 when both are empty."""
    _same_shape(query, cand)
    nq, nc = int(query.sum()), int(cand.sum())
    if nq + nc == 0:
        return 0.0
    inter = int(np.count_nonzero(query & cand))
    return inter / (0.5 * (nc + nq))


def class_similarity_jaccard(query: np.ndarray, cand: np.ndarray) -> float:
    """Per-class intersection over union; 0 when both are empty."""
    _same_shape(query, cand)
    union = int(np.count_nonzero(query | cand))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(query & cand)) / union


def confusion(query, cand, n_classes: int = N_CLASSES) -> np.ndarray:
    """``conf[q, c]`` = number of pixels labelled ``q`` in the query and ``c`` in the candidate."""
    q, c = _pixels(query), _pixels(cand)
    _same_shape(q, c)
    idx = q.astype(np.int64).ravel() * n_classes + c.astype(np.int64).ravel()
    return np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def region_scores_from_confusion(conf: np.ndarray):
    """Weighted (Dice, Jaccard) totals from a confusion matrix."""
    n_total = conf.sum()
    nq = conf.sum(axis=1)
    nc = conf.sum(axis=0)
    wd = 0.0
    wj = 0.0
    for k in range(conf.shape[0]):
        if nc[k] == 0:
            continue
        inter = conf[k, k]
        wd += inter / (0.5 * (nc[k] + nq[k])) * nc[k]
        wj += inter / (nc[k] + nq[k] - inter) * nc[k]
    # weights nc/N are applied after summation so identical images give exactly 1
    return min(1.0, float(wd / n_total)), min(1.0, float(wj / n_total))


def weighted_region_score(query, cand, metric: str = "dice", n_classes: int = N_CLASSES) -> float:
    d, j = region_scores_from_confusion(confusion(query, cand, n_classes))
    if metric == "dice":
        return d
    if metric == "jaccard":
        return j
    raise ValueError(f"unknown region metric {metric!r}")


# ---------------------------------------------------------------------------
# boundary F1


def boundary_map(img) -> np.ndarray:
    """Pixels on the image border or with a 4-neighbour of a different class."""
    px = _pixels(img)
    b = np.zeros(px.shape, dtype=bool)
    if px.size == 0:
        return b
    b[0, :] = b[-1, :] = True
    b[:, 0] = b[:, -1] = True
    dv = px[1:, :] != px[:-1, :]
    dh = px[:, 1:] != px[:, :-1]
    b[1:, :] |= dv
    b[:-1, :] |= dv
    b[:, 1:] |= dh
    b[:, :-1] |= dh
    return b


def extract_boundary(img, cls: int) -> np.ndarray:
    """Boolean mask of the boundary pixels of class ``cls``."""
    px = _pixels(img)
    return boundary_map(px) & (px == cls)


@dataclass(frozen=True)
class BoundaryCounts:
    """Per-class tallies behind a BF score (arrays of length ``n_classes``)."""

    cand_boundary: np.ndarray
    query_boundary: np.ndarray
    precision_hits: np.ndarray
    recall_hits: np.ndarray


def boundary_counts(query, cand, threshold: float = DEFAULT_BF_THRESHOLD, n_classes: int = N_CLASSES) -> BoundaryCounts:
    """Match boundaries class by class through exact distance transforms.

    A boundary pixel is matched when the other image's boundary of the same
    class lies strictly closer than ``threshold`` pixels.
    """
    q, c = _pixels(query), _pixels(cand)
    _same_shape(q, c)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    thr2 = threshold * threshold
    bq, bc = boundary_map(q), boundary_map(c)
    ncb = np.zeros(n_classes, dtype=np.int64)
    nqb = np.zeros(n_classes, dtype=np.int64)
    mp = np.zeros(n_classes, dtype=np.int64)
    mr = np.zeros(n_classes, dtype=np.int64)
    for k in range(n_classes):
        qk = bq & (q == k)
        ck = bc & (c == k)
        ncb[k] = ck.sum()
        nqb[k] = qk.sum()
        if ncb[k] and nqb[k]:
            mp[k] = np.count_nonzero(squared_edt(qk)[ck] < thr2)
            mr[k] = np.count_nonzero(squared_edt(ck)[qk] < thr2)
    return BoundaryCounts(ncb, nqb, mp, mr)


def bf_from_counts(ncb, nqb, mp, mr, fixed_classes: bool = False, n_classes: int = N_CLASSES) -> float:
    total = 0.0
    present = 0
    for k in range(len(ncb)):
        if ncb[k] == 0 and nqb[k] == 0:
            continue
        present += 1
        if ncb[k] == 0 or nqb[k] == 0:
            continue
        p = mp[k] / ncb[k]
        r = mr[k] / nqb[k]
        if r + p > 0:
            total += 2.0 * p * r / (r + p)
    denom = n_classes if fixed_classes else present
    return total / denom if denom else 0.0


def bf_score(query, cand, threshold: float = DEFAULT_BF_THRESHOLD, fixed_classes: bool = False, n_classes: int = N_CLASSES) -> float:
    """Boundary F1 averaged over the classes present in either image.

    With ``fixed_classes`` the per-class F1 values are divided by
    ``n_classes`` instead, so absent classes count as zero.
    """
    bc = boundary_counts(query, cand, threshold, n_classes)
    return bf_from_counts(bc.cand_boundary, bc.query_boundary, bc.precision_hits, bc.recall_hits, fixed_classes, n_classes)


def score_pair(query, cand, threshold: float = DEFAULT_BF_THRESHOLD, fixed_classes: bool = False, n_classes: int = N_CLASSES) -> MetricScores:
    d, j = region_scores_from_confusion(confusion(query, cand, n_classes))
    return MetricScores(d, j, bf_score(query, cand, threshold, fixed_classes, n_classes))


# ---------------------------------------------------------------------------
# fusion


def score_to_prob(score, params: GaussianParams):
    """Gaussian CDF of ``score`` under ``params``; vectorises over arrays."""
    p = ndtr((np.asarray(score, dtype=np.float64) - params.mean) / params.std)
    return float(p) if np.ndim(p) == 0 else p


def fuse_arrays(dice, jaccard, bf, params: FusionParams = DEFAULT_FUSION):
    return score_to_prob(dice, params.dice) * score_to_prob(jaccard, params.jaccard) * score_to_prob(bf, params.bf)


def fuse(scores: MetricScores, params: FusionParams = DEFAULT_FUSION) -> float:
    return float(fuse_arrays(scores.dice, scores.jaccard, scores.bf, params))


def calibrate(samples: np.ndarray) -> FusionParams:
    """Fit per-metric Gaussians to an ``(n, 3)`` sample of (dice, jaccard, bf) scores.

    Uses the sample mean and the unbiased standard deviation.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 3:
        raise ValueError("score sample must have three columns: dice, jaccard, bf")
    if len(s) < 2:
        raise ValueError("need at least two samples to calibrate")
    if not np.all(np.isfinite(s)):
        raise ValueError("score sample contains non-finite values")
    mu = s.mean(axis=0)
    sd = s.std(axis=0, ddof=1)
    names = ("dice", "jaccard", "bf")
    for name, v in zip(names, sd):
        if not v > 0 or not math.isfinite(v):
            raise ValueError(f"{name} scores have zero spread; cannot fit a Gaussian")
    return FusionParams(*(GaussianParams(float(m), float(v)) for m, v in zip(mu, sd)))


def collapse_to_skyline(img) -> np.ndarray:
    """Two-class relabelling used by the skyline baseline: 0 = sky, 1 = anything else."""
    return (_pixels(img) != 0).astype(np.uint8)
