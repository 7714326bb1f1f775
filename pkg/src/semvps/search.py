"""Candidate pose grid, offline ERP database and the maximum-likelihood search.

Candidate positions live on a global lattice of the local grid: lattice point
``(i, j)`` sits at ``(i * step, j * step)`` metres. A search takes every
lattice point within the radius of the initial fix (snapped to the nearest
lattice point) that lies outside all buildings, crossed with a rotation grid
around the initial attitude. Views are never stored per rotation; each one is
sampled from the position's ERP when it is scored.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import CameraIntrinsics, ImuAttitude, derectify
from .city_model import CityModel, contains_points, dump_model
from .geodesy import DatumSpec, GeoCoord, GridCoord, geo_to_grid, grid_to_geo_arrays
from .images import LabelImage, Pose, Rotation
from .labelio import read_pgm, write_pgm
from .matching import DEFAULT_FUSION, FusionParams, MetricScores, fuse_arrays
from .projection import build_erp_lut, capture_faces, view_sampling_maps, yaw_columns
from .scoring import PreparedQuery, score_views

log = logging.getLogger(__name__)

INDEX_NAME = "index.json"
FORMAT_VERSION = 1


class CoverageError(LookupError):
    """Candidate positions requested from a database that does not hold them."""


@dataclass(frozen=True)
class SearchConfig:
    """Search grid around the initial pose.

    Spans are half-widths: ``yaw_span=30`` searches 61 headings at 1° steps.
    ``rotation_mode="imu"`` keeps pitch and roll at the IMU values and only
    searches yaw; ``"grid"`` also searches the pitch and roll spans.
    """

    radius: float = 40.0
    step: float = 1.0
    yaw_span: float = 30.0
    yaw_step: float = 1.0
    pitch_span: float = 3.0
    pitch_step: float = 1.0
    roll_span: float = 3.0
    roll_step: float = 1.0
    rotation_mode: str = "imu"
    baseline: bool = False
    low_confidence_threshold: float = 0.20

    def __post_init__(self):
        for name in ("step", "yaw_step", "pitch_step", "roll_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("radius", "yaw_span", "pitch_span", "roll_span"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.rotation_mode not in ("imu", "grid"):
            raise ValueError("rotation_mode must be 'imu' or 'grid'")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d) -> "SearchConfig":
        if isinstance(d, str):
            return search_preset(d)
        return cls(**d)


# 40 m radius at 1 m; ±30° yaw, ±3° pitch and roll at 1°.
STANDARD_SEARCH = SearchConfig(rotation_mode="grid")
DEFAULT_SEARCH = SearchConfig()


def search_preset(name: str) -> SearchConfig:
    presets = {"standard": STANDARD_SEARCH, "default": DEFAULT_SEARCH}
    try:
        return presets[name.lower()]
    except KeyError:
        raise ValueError(f"unknown search preset {name!r}") from None


def span_offsets(span: float, step: float) -> np.ndarray:
    n = int(math.floor(span / step + 1e-9))
    return step * np.arange(-n, n + 1, dtype=np.float64)


def lattice_offsets(radius: float, step: float) -> np.ndarray:
    """Integer offsets ``(di, dj)`` with ``(di² + dj²) step² <= radius²``, northing-major order."""
    n = int(math.floor(radius / step + 1e-9))
    dj, di = np.mgrid[-n : n + 1, -n : n + 1]
    keep = (di * di + dj * dj) <= (radius / step) ** 2 + 1e-9
    return np.stack([di[keep], dj[keep]], axis=1).astype(np.int64)


def snap(easting: float, northing: float, step: float) -> tuple[int, int]:
    return int(math.floor(easting / step + 0.5)), int(math.floor(northing / step + 0.5))


def lattice_to_grid(ij: np.ndarray, step: float, alt: float) -> np.ndarray:
    ij = np.asarray(ij, dtype=np.int64).reshape(-1, 2)
    out = np.empty((len(ij), 3))
    out[:, :2] = ij * step
    out[:, 2] = alt
    return out


@dataclass(frozen=True)
class RotationGrid:
    yaws: np.ndarray  # absolute headings, degrees
    tilts: np.ndarray  # (R, 2) absolute (pitch, roll)

    @property
    def size(self) -> int:
        return len(self.yaws) * len(self.tilts)

    def table(self) -> np.ndarray:
        """(R * Y, 3) of (yaw, pitch, roll) in scoring order: tilt-major, then yaw."""
        out = np.empty((self.size, 3))
        k = 0
        for p, r in self.tilts:
            for y in self.yaws:
                out[k] = (y, p, r)
                k += 1
        return out


def rotation_grid(cfg: SearchConfig, init: Rotation) -> RotationGrid:
    yaws = (init.yaw + span_offsets(cfg.yaw_span, cfg.yaw_step)) % 360.0
    if cfg.rotation_mode == "imu":
        tilts = np.array([[init.pitch, init.roll]])
    else:
        tilts = np.array(
            [
                (float(np.clip(init.pitch + dp, -90.0, 90.0)), init.roll + dr)
                for dp in span_offsets(cfg.pitch_span, cfg.pitch_step)
                for dr in span_offsets(cfg.roll_span, cfg.roll_step)
            ]
        )
    return RotationGrid(yaws, tilts)


def enumerate_lattice(cfg: SearchConfig, init_grid: GridCoord, m: Optional[CityModel] = None):
    """Lattice points around the fix; with a model, also split off those inside buildings.

    Returns ``(outside_ij, inside_ij)``.
    """
    ci, cj = snap(init_grid.easting, init_grid.northing, cfg.step)
    ij = lattice_offsets(cfg.radius, cfg.step) + np.array([ci, cj])
    if m is None or not m.buildings:
        return ij, np.zeros((0, 2), dtype=np.int64)
    inside = contains_points(m, lattice_to_grid(ij, cfg.step, init_grid.alt))
    return ij[~inside], ij[inside]


def enumerate_candidates(cfg: SearchConfig, init: Pose, m: CityModel) -> list[Pose]:
    """Every candidate pose, position-major then rotation, altitude held at the fix."""
    g = geo_to_grid(init.position, m.datum)
    ij, _ = enumerate_lattice(cfg, g, m)
    if len(ij) == 0:
        raise ValueError("every candidate position lies inside a building")
    grid = lattice_to_grid(ij, cfg.step, g.alt)
    lat, lon = grid_to_geo_arrays(grid[:, 0], grid[:, 1], m.datum)
    rots = [Rotation(*r) for r in rotation_grid(cfg, init.rotation).table()]
    return [Pose(GeoCoord(float(la), float(lo), g.alt), r) for la, lo in zip(lat, lon) for r in rots]


# ---------------------------------------------------------------------------
# offline database


def model_digest(m: CityModel) -> str:
    return hashlib.sha256(dump_model(m).encode()).hexdigest()


@dataclass(eq=False)
class CandidateDatabase:
    datum: DatumSpec
    step: float
    altitude: float
    face_size: int
    erp_width: int
    erp_height: int
    indices: np.ndarray  # (P, 2) lattice indices of stored positions
    erps: np.ndarray  # (P, H, W) uint8
    excluded: np.ndarray  # (M, 2) lattice indices inside buildings
    model_hash: str = ""
    _lookup: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(self.indices)}
        self._excluded = {(int(i), int(j)) for i, j in self.excluded}

    def __len__(self) -> int:
        return len(self.indices)

    def positions(self) -> np.ndarray:
        return lattice_to_grid(self.indices, self.step, self.altitude)

    def locate(self, ij: np.ndarray):
        """Map lattice points to row indices. Returns ``(rows, missing_ij)``; excluded points are dropped."""
        rows, missing = [], []
        for i, j in np.asarray(ij, dtype=np.int64).reshape(-1, 2):
            key = (int(i), int(j))
            k = self._lookup.get(key)
            if k is not None:
                rows.append(k)
            elif key not in self._excluded:
                missing.append(key)
        return np.array(rows, dtype=np.int64), missing

    def erp_at(self, ij) -> np.ndarray:
        k = self._lookup.get((int(ij[0]), int(ij[1])))
        if k is None:
            raise CoverageError(f"lattice point {tuple(ij)} is not in the database")
        return self.erps[k]

    # -- persistence ---------------------------------------------------

    def index_record(self, hashes) -> dict:
        return {
            "format": "semvps-erp-db",
            "version": FORMAT_VERSION,
            "datum": self.datum.to_dict(),
            "step": self.step,
            "altitude": self.altitude,
            "face_size": self.face_size,
            "erp_width": self.erp_width,
            "erp_height": self.erp_height,
            "model_sha256": self.model_hash,
            "positions": [
                {"i": int(i), "j": int(j), "file": _erp_name(i, j), "sha256": h} for (i, j), h in zip(self.indices, hashes)
            ],
            "excluded": [[int(i), int(j)] for i, j in self.excluded],
        }

    def save(self, path, force: bool = False) -> int:
        """Write ``index.json`` plus one PGM per position. Returns bytes written."""
        path = Path(path)
        if (path / INDEX_NAME).exists() and not force:
            raise FileExistsError(f"database already exists at {path} (use force to overwrite)")
        (path / "erp").mkdir(parents=True, exist_ok=True)
        hashes = []
        total = 0
        for (i, j), erp in zip(self.indices, self.erps):
            buf = io.BytesIO()
            write_pgm(buf, erp)
            data = buf.getvalue()
            (path / _erp_name(i, j)).write_bytes(data)
            hashes.append(hashlib.sha256(data).hexdigest())
            total += len(data)
        text = json.dumps(self.index_record(hashes), indent=1, sort_keys=True) + "\n"
        (path / INDEX_NAME).write_text(text)
        return total + len(text)

    @classmethod
    def load(cls, path, verify: bool = False) -> "CandidateDatabase":
        path = Path(path)
        try:
            rec = json.loads((path / INDEX_NAME).read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"no database index at {path / INDEX_NAME}") from None
        if rec.get("format") != "semvps-erp-db":
            raise ValueError(f"{path / INDEX_NAME} is not a semvps database index")
        entries = rec["positions"]
        h, w = rec["erp_height"], rec["erp_width"]
        erps = np.empty((len(entries), h, w), dtype=np.uint8)
        for k, ent in enumerate(entries):
            f = path / ent["file"]
            data = f.read_bytes()
            if verify and hashlib.sha256(data).hexdigest() != ent["sha256"]:
                raise ValueError(f"content hash mismatch for {f}")
            erps[k] = read_pgm(io.BytesIO(data))
        return cls(
            datum=DatumSpec.from_dict(rec["datum"]),
            step=float(rec["step"]),
            altitude=float(rec["altitude"]),
            face_size=int(rec["face_size"]),
            erp_width=int(w),
            erp_height=int(h),
            indices=np.array([[e["i"], e["j"]] for e in entries], dtype=np.int64).reshape(-1, 2),
            erps=erps,
            excluded=np.array(rec["excluded"], dtype=np.int64).reshape(-1, 2),
            model_hash=rec.get("model_sha256", ""),
        )


def _erp_name(i, j) -> str:
    return f"erp/erp_{int(i)}_{int(j)}.pgm"


def _chunks(n: int, threads: int):
    if n == 0:
        return []
    k = max(1, min(n, threads * 4))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunks(fn, n: int, threads: int) -> None:
    chunks = _chunks(n, threads)
    if threads <= 1:
        for a, b in chunks:
            fn(a, b)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        for fut in [ex.submit(fn, a, b) for a, b in chunks]:
            fut.result()


def build_database(
    m: CityModel,
    center: GridCoord,
    radius: float,
    *,
    step: float = 1.0,
    face_size: int = 512,
    erp_width: int = 2048,
    erp_height: int = 1024,
    threads: int = 1,
) -> CandidateDatabase:
    """Render one ERP per lattice point within ``radius`` of ``center`` (outside buildings)."""
    cfg = SearchConfig(radius=radius, step=step)
    ij, inside = enumerate_lattice(cfg, center, m)
    lut = build_erp_lut(face_size, erp_width, erp_height)
    grid = lattice_to_grid(ij, step, center.alt)
    erps = np.empty((len(ij), erp_height, erp_width), dtype=np.uint8)

    def work(a, b):
        for k in range(a, b):
            faces = capture_faces(m, grid[k], face_size)
            erps[k] = faces[lut.face, lut.row, lut.col]

    _run_chunks(work, len(ij), threads)
    return CandidateDatabase(
        datum=m.datum,
        step=float(step),
        altitude=float(center.alt),
        face_size=face_size,
        erp_width=erp_width,
        erp_height=erp_height,
        indices=ij,
        erps=erps,
        excluded=inside,
        model_hash=model_digest(m),
    )


# ---------------------------------------------------------------------------
# online search


@dataclass(eq=False)
class QueryRecord:
    image: LabelImage
    initial_fix: GeoCoord
    initial_rotation: Rotation
    intrinsics: CameraIntrinsics
    rectified: bool = False
    ground_truth: Optional[Pose] = None

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.intrinsics.width, self.intrinsics.height):
            raise ValueError(
                f"query image is {self.image.width}x{self.image.height}, "
                f"intrinsics are {self.intrinsics.width}x{self.intrinsics.height}"
            )

    def camera_space_pixels(self) -> np.ndarray:
        if not self.rectified:
            return self.image.pixels
        att = ImuAttitude(self.initial_rotation.pitch, self.initial_rotation.roll)
        return derectify(self.image, att, self.intrinsics).pixels


@dataclass(eq=False)
class LocalizationResult:
    pose: Pose
    likelihood: float
    scores: MetricScores
    segmentation_difference: float
    low_confidence: bool
    n_tied: int
    mode: str
    datum: DatumSpec
    step: float
    altitude: float
    init_grid: np.ndarray
    lattice: np.ndarray  # (P, 2)
    rotations: np.ndarray  # (K, 3) yaw, pitch, roll
    score_table: np.ndarray  # (P, K, 3)
    likelihoods: np.ndarray  # (P, K)
    best: tuple  # (position row, rotation column)
    order: Optional[np.ndarray] = None  # flat candidate indices, best first

    @property
    def grid_position(self) -> np.ndarray:
        return lattice_to_grid(self.lattice[self.best[0]], self.step, self.altitude)[0]

    def candidate_positions(self) -> np.ndarray:
        return lattice_to_grid(self.lattice, self.step, self.altitude)

    def errors_to(self, truth: Pose, truth_grid: Optional[GridCoord] = None) -> tuple[float, float]:
        """Horizontal position error (m) and absolute yaw error (deg) against a reference pose.

        Pass ``truth_grid`` when the reference is known on the grid to skip
        the geodetic round trip.
        """
        g = truth_grid if truth_grid is not None else geo_to_grid(truth.position, self.datum)
        p = self.grid_position
        dyaw = (self.pose.rotation.yaw - truth.rotation.yaw + 180.0) % 360.0 - 180.0
        return float(math.hypot(p[0] - g.easting, p[1] - g.northing)), abs(dyaw)

    def ranked(self, top: Optional[int] = None):
        """Rows of (lattice i, j, yaw, pitch, roll, dice, jaccard, bf, likelihood), best first."""
        order = self.order if top is None else self.order[:top]
        k = self.rotations.shape[0]
        pi, ri = np.divmod(order, k)
        return (
            self.lattice[pi],
            self.rotations[ri],
            self.score_table[pi, ri],
            self.likelihoods[pi, ri],
        )


def _rank(lik: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Order flat candidates: likelihood desc, distance to the fix asc, enumeration order asc."""
    n_pos, k = lik.shape
    flat = lik.ravel()
    d = np.repeat(dist, k)
    enum = np.arange(flat.size)
    return np.lexsort((enum, d, -flat))


def localize(
    q: QueryRecord,
    db: CandidateDatabase,
    cfg: SearchConfig = DEFAULT_SEARCH,
    fusion: FusionParams = DEFAULT_FUSION,
    *,
    bf_threshold: float = 5.0,
    bf_fixed_classes: bool = False,
    threads: int = 1,
) -> LocalizationResult:
    init = geo_to_grid(q.initial_fix, db.datum)
    if abs(cfg.step - db.step) > 1e-9:
        raise ValueError(f"search step {cfg.step} differs from the database lattice step {db.step}")
    ci, cj = snap(init.easting, init.northing, cfg.step)
    ij = lattice_offsets(cfg.radius, cfg.step) + np.array([ci, cj])
    rows_db, missing = db.locate(ij)
    if missing:
        shown = ", ".join(f"({i},{j})" for i, j in missing[:20])
        more = f" and {len(missing) - 20} more" if len(missing) > 20 else ""
        raise CoverageError(f"{len(missing)} candidate lattice points missing from the database: {shown}{more}")
    if len(rows_db) == 0:
        raise CoverageError("no candidate positions: every lattice point in range lies inside a building")
    lattice = db.indices[rows_db]

    rot = rotation_grid(cfg, q.initial_rotation)
    intr = q.intrinsics
    maps_r, maps_c = [], []
    for pitch, roll in rot.tilts:
        r, az0 = view_sampling_maps(intr, pitch, roll, db.erp_width, db.erp_height)
        maps_r.append(r.ravel())
        maps_c.append(np.stack([yaw_columns(az0, y, db.erp_width).ravel() for y in rot.yaws]))
    rows = np.stack(maps_r)
    cols = np.stack(maps_c)

    prepared = PreparedQuery.build(q.camera_space_pixels(), bf_threshold, bf_fixed_classes, skyline=cfg.baseline)
    scores = np.empty((len(rows_db), len(rot.tilts), len(rot.yaws), 3))
    shape = (intr.height, intr.width)

    def work(a, b):
        scores[a:b] = score_views(db.erps, rows_db[a:b], rows, cols, shape, prepared)

    _run_chunks(work, len(rows_db), threads)
    table = scores.reshape(len(rows_db), rot.size, 3)
    lik = fuse_arrays(table[..., 0], table[..., 1], table[..., 2], fusion)
    grid = lattice_to_grid(lattice, db.step, init.alt)
    dist = np.hypot(grid[:, 0] - init.easting, grid[:, 1] - init.northing)
    order = _rank(lik, dist)
    pi, ri = divmod(int(order[0]), rot.size)
    best_lik = float(lik[pi, ri])
    n_tied = int(np.count_nonzero(lik == best_lik))
    d, j, b = (float(v) for v in table[pi, ri])
    seg_diff = 1.0 - 0.5 * (d + j)
    yaw, pitch, roll = rot.table()[ri]
    lat, lon = grid_to_geo_arrays(grid[pi, 0], grid[pi, 1], db.datum)
    pose = Pose(GeoCoord(float(lat), float(lon), init.alt), Rotation(yaw, pitch, roll))
    return LocalizationResult(
        pose=pose,
        likelihood=best_lik,
        scores=MetricScores(d, j, b),
        segmentation_difference=seg_diff,
        low_confidence=bool(seg_diff > cfg.low_confidence_threshold or n_tied > 1),
        n_tied=n_tied,
        mode="skyline" if cfg.baseline else "full",
        datum=db.datum,
        step=db.step,
        altitude=init.alt,
        init_grid=np.array([init.easting, init.northing, init.alt]),
        lattice=lattice,
        rotations=rot.table(),
        score_table=table,
        likelihoods=lik,
        best=(pi, ri),
        order=order,
    )


# ---------------------------------------------------------------------------
# heatmaps and dumps


@dataclass(eq=False)
class Heatmap:
    axis: str
    values: np.ndarray
    # position heatmaps: lattice index of values[0, 0] (top-left = west, north)
    i0: int = 0
    j_top: int = 0
    step: float = 1.0
    yaws: Optional[np.ndarray] = None

    def argmax(self):
        v = np.where(np.isnan(self.values), -np.inf, self.values)
        return np.unravel_index(int(np.argmax(v)), v.shape)

    def to_text(self) -> str:
        out = io.StringIO()
        if self.axis == "position":
            out.write(f"# semvps heatmap axis=position step={self.step!r} i0={self.i0} j_top={self.j_top}\n")
            out.write("# rows run north to south, columns west to east; nan = no candidate\n")
            for row in self.values:
                out.write("\t".join("nan" if np.isnan(v) else repr(float(v)) for v in row) + "\n")
        else:
            out.write("# semvps heatmap axis=yaw\n# yaw\tmax_likelihood\n")
            for y, v in zip(self.yaws, self.values):
                out.write(f"{float(y)!r}\t{float(v)!r}\n")
        return out.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def emit_heatmap(result: LocalizationResult, axis: str = "position") -> Heatmap:
    """Max-over-rotations likelihood per position, or max-over-positions per yaw."""
    if axis == "position":
        best = result.likelihoods.max(axis=1)
        i, j = result.lattice[:, 0], result.lattice[:, 1]
        i0, i1, j0, j1 = i.min(), i.max(), j.min(), j.max()
        grid = np.full((j1 - j0 + 1, i1 - i0 + 1), np.nan)
        grid[j1 - j, i - i0] = best
        return Heatmap("position", grid, int(i0), int(j1), result.step)
    if axis == "yaw":
        yaws = result.rotations[:, 0]
        uniq = np.unique(yaws)
        per_rot = result.likelihoods.max(axis=0)
        vals = np.array([per_rot[yaws == y].max() for y in uniq])
        return Heatmap("yaw", vals, yaws=uniq)
    raise ValueError("axis must be 'position' or 'yaw'")


SCORE_COLUMNS = ("rank", "lat", "lon", "alt", "yaw", "pitch", "roll", "easting", "northing", "dice", "jaccard", "bf", "likelihood")


def score_table_text(result: LocalizationResult, top: Optional[int] = None) -> str:
    lat_ij, rots, sc, lk = result.ranked(top)
    grid = lattice_to_grid(lat_ij, result.step, result.altitude)
    lat, lon = grid_to_geo_arrays(grid[:, 0], grid[:, 1], result.datum)
    out = io.StringIO()
    out.write("\t".join(SCORE_COLUMNS) + "\n")
    for k in range(len(lk)):
        vals = (lat[k], lon[k], grid[k, 2], *rots[k], grid[k, 0], grid[k, 1], *sc[k], lk[k])
        out.write(str(k + 1) + "\t" + "\t".join(repr(float(v)) for v in vals) + "\n")
    return out.getvalue()


def read_score_table(path) -> np.ndarray:
    return np.loadtxt(path, skiprows=1, ndmin=2)


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))
