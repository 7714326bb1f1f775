"""Monte-Carlo study of positioning error against segmentation error.

Ideal query images are elastically distorted, localized, and each trial's
regional error (1 - mean of weighted Dice and Jaccard) and contour error
(1 - BF) against the undistorted image are recorded with the resulting
position error.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .camera import CameraIntrinsics
from .geodesy import geo_to_grid
from .images import LabelImage, Pose
from .matching import DEFAULT_FUSION, FusionParams, bf_score, confusion, region_scores_from_confusion
from .projection import ErpImage, erp_to_view
from .search import CandidateDatabase, QueryRecord, SearchConfig, localize, snap


@dataclass(frozen=True)
class DistortionSpec:
    magnitude: float
    grid: int = 8
    smoothing: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.magnitude >= 0:
            raise ValueError("distortion magnitude must be non-negative")
        if self.grid < 2:
            raise ValueError("control grid needs at least 2x2 points")
        if self.smoothing < 0:
            raise ValueError("smoothing radius must be non-negative")


def displacement_field(shape, spec: DistortionSpec):
    """Per-pixel (dy, dx) from uniform control displacements, bilinear upsampling and a box filter."""
    h, w = shape
    rng = np.random.default_rng(spec.seed)
    ctrl = rng.uniform(-spec.magnitude, spec.magnitude, size=(2, spec.grid, spec.grid))
    gy = np.linspace(0.0, spec.grid - 1, h)
    gx = np.linspace(0.0, spec.grid - 1, w)
    coords = np.meshgrid(gy, gx, indexing="ij")
    field_ = [ndimage.map_coordinates(c, coords, order=1) for c in ctrl]
    if spec.smoothing:
        size = 2 * spec.smoothing + 1
        field_ = [ndimage.uniform_filter(f, size=size, mode="nearest") for f in field_]
    return field_[0], field_[1]


def elastic_distort(img: LabelImage, spec: DistortionSpec) -> LabelImage:
    """Warp labels by a smooth random field; nearest-neighbour, borders clamped."""
    px = img.pixels
    if spec.magnitude == 0 or px.size == 0:
        return LabelImage(px.copy(), img.pose)
    h, w = px.shape
    dy, dx = displacement_field(px.shape, spec)
    yy, xx = np.mgrid[0:h, 0:w]
    sy = np.clip(np.floor(yy + dy + 0.5), 0, h - 1).astype(np.intp)
    sx = np.clip(np.floor(xx + dx + 0.5), 0, w - 1).astype(np.intp)
    return LabelImage(px[sy, sx], img.pose)


def measure_errors(ideal: LabelImage, distorted: LabelImage, threshold: float = 5.0, fixed_classes: bool = False):
    """(regional, contour) segmentation error of ``distorted`` relative to ``ideal``."""
    a, b = ideal.pixels, distorted.pixels
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d, j = region_scores_from_confusion(confusion(b, a))
    regional = 1.0 - 0.5 * (d + j)
    contour = 1.0 - bf_score(b, a, threshold, fixed_classes)
    return max(0.0, regional), max(0.0, contour)


@dataclass(frozen=True)
class StudyConfig:
    n_trials: int = 200
    magnitudes: tuple = (0.0, 4.0, 8.0, 16.0, 32.0, 48.0, 64.0, 96.0)
    grid: int = 8
    smoothing: int = 2
    seed: int = 0
    radius: float = 20.0
    yaw_span: float = 5.0
    yaw_step: float = 1.0
    bin_width: float = 0.05

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("need at least one trial")
        if not self.magnitudes:
            raise ValueError("magnitude sweep is empty")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["magnitudes"] = list(self.magnitudes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        if "magnitudes" in d:
            d["magnitudes"] = tuple(float(m) for m in d["magnitudes"])
        return cls(**d)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    magnitude: float
    seed: int
    regional_error: float
    contour_error: float
    position_error: float
    yaw_error: float
    chosen: Pose
    likelihood: float


def trial_seeds(master: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]


def ideal_view(db: CandidateDatabase, gt: Pose, intr: CameraIntrinsics) -> LabelImage:
    """The database-derived view at an on-grid ground-truth pose."""
    g = geo_to_grid(gt.position, db.datum)
    i, j = snap(g.easting, g.northing, db.step)
    if math.hypot(g.easting - i * db.step, g.northing - j * db.step) > 1e-6:
        raise ValueError("ground-truth position is not on the database lattice")
    return erp_to_view(ErpImage(db.erp_at((i, j)), gt.position), gt.rotation, intr)


def run_study(
    db: CandidateDatabase,
    gt: Pose,
    intr: CameraIntrinsics,
    cfg: StudyConfig = StudyConfig(),
    fusion: FusionParams = DEFAULT_FUSION,
    *,
    bf_threshold: float = 5.0,
    bf_fixed_classes: bool = False,
    threads: int = 1,
    progress=None,
) -> list[TrialRecord]:
    """Distort, localize and score ``cfg.n_trials`` queries; magnitudes cycle through the sweep."""
    ideal = ideal_view(db, gt, intr)
    search = SearchConfig(radius=cfg.radius, step=db.step, yaw_span=cfg.yaw_span, yaw_step=cfg.yaw_step)
    g = geo_to_grid(gt.position, db.datum)
    records = []
    for k, seed in enumerate(trial_seeds(cfg.seed, cfg.n_trials)):
        mag = float(cfg.magnitudes[k % len(cfg.magnitudes)])
        spec = DistortionSpec(mag, cfg.grid, cfg.smoothing, seed)
        img = elastic_distort(ideal, spec)
        reg, con = measure_errors(ideal, img, bf_threshold, bf_fixed_classes)
        q = QueryRecord(img, gt.position, gt.rotation, intr)
        res = localize(q, db, search, fusion, bf_threshold=bf_threshold, bf_fixed_classes=bf_fixed_classes, threads=threads)
        pos_err, yaw_err = res.errors_to(gt, truth_grid=g)
        records.append(TrialRecord(k, mag, seed, reg, con, pos_err, yaw_err, res.pose, res.likelihood))
        if progress is not None:
            progress(records[-1])
    return records


TRIAL_COLUMNS = ("trial", "magnitude", "seed", "regional_error", "contour_error", "position_error", "yaw_error", "lat", "lon", "yaw", "likelihood")


def trials_text(records: Sequence[TrialRecord]) -> str:
    out = io.StringIO()
    out.write("\t".join(TRIAL_COLUMNS) + "\n")
    for r in records:
        vals = (r.magnitude, r.seed, r.regional_error, r.contour_error, r.position_error, r.yaw_error,
                r.chosen.position.lat, r.chosen.position.lon, r.chosen.rotation.yaw, r.likelihood)
        out.write(f"{r.index}\t" + "\t".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals) + "\n")
    return out.getvalue()


@dataclass(frozen=True)
class BinSummary:
    kind: str  # "regional" or "contour"
    lo: float
    hi: float
    n: int
    median: float
    q1: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def bin_records(errors: np.ndarray, position_errors: np.ndarray, kind: str, width: float = 0.05) -> list[BinSummary]:
    """Position-error quartiles per segmentation-error bin ``[k w, (k+1) w)``; empty bins omitted."""
    errors = np.asarray(errors, dtype=np.float64)
    pe = np.asarray(position_errors, dtype=np.float64)
    idx = np.floor(errors / width + 1e-9).astype(np.int64)
    out = []
    for b in np.unique(idx):
        sel = pe[idx == b]
        q1, med, q3 = np.percentile(sel, [25, 50, 75])
        out.append(BinSummary(kind, round(float(b * width), 10), round(float((b + 1) * width), 10), int(len(sel)), float(med), float(q1), float(q3)))
    return out


def summarize(records: Sequence[TrialRecord], width: float = 0.05) -> list[BinSummary]:
    pe = np.array([r.position_error for r in records])
    reg = np.array([r.regional_error for r in records])
    con = np.array([r.contour_error for r in records])
    return bin_records(reg, pe, "regional", width) + bin_records(con, pe, "contour", width)


def summary_text(bins: Sequence[BinSummary]) -> str:
    out = io.StringIO()
    out.write("kind\tlo\thi\tn\tmedian\tq1\tq3\tiqr\n")
    for b in bins:
        out.write(f"{b.kind}\t{b.lo!r}\t{b.hi!r}\t{b.n}\t{b.median!r}\t{b.q1!r}\t{b.q3!r}\t{b.iqr!r}\n")
    return out.getvalue()
