"""Segmented view generation: cube map capture, equirectangular (ERP)
conversion through a precomputed lookup table, and gnomonic view extraction.

Conventions
-----------
World axes are (east, north, up). ERP column ``c`` sits at azimuth
``c * 360 / W`` (clockwise from north) and row ``r`` at elevation
``90 - r * 180 / H``; sampling is nearest-neighbour throughout.

Cube faces, in id order: north, east, south, west, up, down. Face pixel
``(row j, col i)`` looks along ``fwd + a * right + b * up`` with
``a = 2 (i + 0.5) / F - 1`` and ``b = 1 - 2 (j + 0.5) / F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .camera import CameraIntrinsics
from .city_model import CityModel, Material, cast_rays, contains_points
from .geodesy import GeoCoord, geo_to_grid_arrays
from .images import LabelImage, Pose, Rotation, rotation_matrix, tilt_matrix

DEFAULT_FACE_SIZE = 512
DEFAULT_ERP_WIDTH = 2048
DEFAULT_ERP_HEIGHT = 1024

FACE_NAMES = ("north", "east", "south", "west", "up", "down")
# rows: forward, right, up
FACE_BASIS = np.array(
    [
        [[0, 1, 0], [1, 0, 0], [0, 0, 1]],
        [[1, 0, 0], [0, -1, 0], [0, 0, 1]],
        [[0, -1, 0], [-1, 0, 0], [0, 0, 1]],
        [[-1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[0, 0, 1], [1, 0, 0], [0, -1, 0]],
        [[0, 0, -1], [1, 0, 0], [0, 1, 0]],
    ],
    dtype=np.float64,
)


@dataclass(eq=False)
class CubeMap:
    faces: np.ndarray  # (6, F, F) uint8
    position: GeoCoord

    @property
    def face_size(self) -> int:
        return self.faces.shape[1]


@dataclass(eq=False)
class ErpImage:
    pixels: np.ndarray  # (H, W) uint8, W == 2H
    position: GeoCoord

    def __post_init__(self):
        h, w = self.pixels.shape
        if w != 2 * h:
            raise ValueError(f"ERP must be 2:1, got {w}x{h}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class ErpLookupTable:
    face_size: int
    width: int
    height: int
    face: np.ndarray  # (H, W) uint8
    row: np.ndarray  # (H, W) int32
    col: np.ndarray  # (H, W) int32


def _position_grid(m: CityModel, p: GeoCoord) -> np.ndarray:
    e, n = geo_to_grid_arrays(p.lat, p.lon, m.datum)
    return np.array([float(e), float(n), p.alt])


def face_rays(face_size: int) -> np.ndarray:
    """Unit ray directions for every cube face pixel, shape ``(6, F, F, 3)``."""
    t = 2.0 * (np.arange(face_size) + 0.5) / face_size - 1.0
    a = t[None, :, None]
    b = -t[:, None, None]
    fwd, right, up = FACE_BASIS[:, 0], FACE_BASIS[:, 1], FACE_BASIS[:, 2]
    d = fwd[:, None, None, :] + a[None] * right[:, None, None, :] + b[None] * up[:, None, None, :]
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def capture_faces(m: CityModel, origin: np.ndarray, face_size: int) -> np.ndarray:
    """Ray-cast the six faces from a grid-coordinate origin."""
    rays = face_rays(face_size).reshape(-1, 3)
    cls, _ = cast_rays(m, np.asarray(origin, dtype=np.float64), rays)
    return cls.reshape(6, face_size, face_size)


def capture_cubemap(m: CityModel, p: GeoCoord, face_size: int = DEFAULT_FACE_SIZE) -> CubeMap:
    origin = _position_grid(m, p)
    if contains_points(m, origin[None])[0]:
        raise ValueError(f"capture position {p} lies inside a building")
    return CubeMap(capture_faces(m, origin, face_size), p)


def erp_directions(width: int, height: int) -> np.ndarray:
    """Unit direction of every ERP pixel, shape ``(H, W, 3)``."""
    az = np.radians(np.arange(width) * 360.0 / width)
    el = np.radians(90.0 - np.arange(height) * 180.0 / height)
    d = np.empty((height, width, 3))
    d[..., 0] = np.cos(el)[:, None] * np.sin(az)[None, :]
    d[..., 1] = np.cos(el)[:, None] * np.cos(az)[None, :]
    d[..., 2] = np.sin(el)[:, None]
    return d


def directions_to_face_pixels(d: np.ndarray, face_size: int):
    """Dominant-axis face selection plus perspective division, nearest pixel."""
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    face = np.where(
        az >= np.maximum(ax, ay),
        np.where(z >= 0, 4, 5),
        np.where(ay >= ax, np.where(y >= 0, 0, 2), np.where(x >= 0, 1, 3)),
    ).astype(np.uint8)
    basis = FACE_BASIS[face]
    fwd = np.einsum("...k,...k->...", d, basis[..., 0, :])
    a = np.einsum("...k,...k->...", d, basis[..., 1, :]) / fwd
    b = np.einsum("...k,...k->...", d, basis[..., 2, :]) / fwd
    col = np.clip(np.floor((a + 1.0) / 2.0 * face_size), 0, face_size - 1).astype(np.int32)
    row = np.clip(np.floor((1.0 - b) / 2.0 * face_size), 0, face_size - 1).astype(np.int32)
    return face, row, col


@lru_cache(maxsize=8)
def build_erp_lut(face_size: int, width: int, height: int) -> ErpLookupTable:
    if width != 2 * height:
        raise ValueError(f"ERP must be 2:1, got {width}x{height}")
    face, row, col = directions_to_face_pixels(erp_directions(width, height), face_size)
    for arr in (face, row, col):
        arr.setflags(write=False)
    return ErpLookupTable(face_size, width, height, face, row, col)


def cube_to_erp(c: CubeMap, lut: ErpLookupTable) -> ErpImage:
    if c.face_size != lut.face_size:
        raise ValueError(f"lookup table built for face size {lut.face_size}, cube has {c.face_size}")
    return ErpImage(c.faces[lut.face, lut.row, lut.col], c.position)


def view_sampling_maps(intr: CameraIntrinsics, pitch: float, roll: float, erp_width: int, erp_height: int):
    """ERP rows and yaw-free azimuths (degrees) for every output pixel.

    Yaw is a rotation about the vertical, so it only shifts azimuth; one
    map serves every heading at a fixed pitch and roll.
    """
    d = intr.rays() @ tilt_matrix(pitch, roll).T
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    az0 = np.degrees(np.arctan2(x, y))
    el = np.degrees(np.arctan2(z, np.hypot(x, y)))
    rows = np.clip(np.floor((90.0 - el) * erp_height / 180.0 + 0.5), 0, erp_height - 1).astype(np.int32)
    return rows, az0


def yaw_columns(az0: np.ndarray, yaw: float, erp_width: int) -> np.ndarray:
    return (np.floor((az0 + yaw) * erp_width / 360.0 + 0.5).astype(np.int64) % erp_width).astype(np.int32)


def erp_to_view(e: ErpImage, r: Rotation, intr: CameraIntrinsics) -> LabelImage:
    rows, az0 = view_sampling_maps(intr, r.pitch, r.roll, e.width, e.height)
    cols = yaw_columns(az0, r.yaw, e.width)
    return LabelImage(e.pixels[rows, cols], Pose(e.position, r))


def render_view_grid(m: CityModel, origin: np.ndarray, r: Rotation, intr: CameraIntrinsics) -> np.ndarray:
    """Direct per-pixel ray cast from a grid-coordinate origin."""
    d = intr.rays().reshape(-1, 3) @ rotation_matrix(r.yaw, r.pitch, r.roll).T
    cls, _ = cast_rays(m, np.asarray(origin, dtype=np.float64), d)
    return cls.reshape(intr.height, intr.width)


def render_view(m: CityModel, pose: Pose, intr: CameraIntrinsics) -> LabelImage:
    """Ray-cast a label image at a full pose, bypassing the cube/ERP stages."""
    return LabelImage(render_view_grid(m, _position_grid(m, pose.position), pose.rotation, intr), pose)


def render_erp(m: CityModel, p: GeoCoord, face_size: int, width: int, height: int) -> ErpImage:
    return cube_to_erp(capture_cubemap(m, p, face_size), build_erp_lut(face_size, width, height))


def rotate_columns(e: ErpImage, degrees: float) -> ErpImage:
    """Shift an ERP so that azimuth ``a`` moves to ``a - degrees`` (rounded to whole columns)."""
    shift = int(math.floor(degrees * e.width / 360.0 + 0.5))
    return ErpImage(np.roll(e.pixels, -shift, axis=1), e.position)


def sky_erp(p: GeoCoord, width: int, height: int) -> ErpImage:
    return ErpImage(np.full((height, width), Material.SKY, dtype=np.uint8), p)
