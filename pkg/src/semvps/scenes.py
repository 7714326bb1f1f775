"""Synthetic scenes for tests, benchmarks and the sensitivity study.

Scenes are placed near the HK1980 grid origin so the geodetic round trip is
exercised. Wall patch classes come from a seeded generator; the same seed
always yields the same model.
"""

from __future__ import annotations

import math

import numpy as np

from .city_model import CityModel, Material, build_model, make_building
from .geodesy import HK1980, DatumSpec, GridCoord

# Lattice-aligned scene centre (multiples of 1 m) and a hand-held camera height.
SCENE_CENTER = GridCoord(836700.0, 819070.0, 1.5)

_WALL_CLASSES = np.array([Material.STONE, Material.GLASS, Material.METAL, Material.OTHERS], dtype=np.uint8)

# Footprints in metres relative to the scene centre; the 15 m disk around the
# centre stays open and no two layouts are mirror images of each other.
_TEN = [
    ([(-45, 18), (-22, 18), (-22, 40), (-45, 40)], 30.0),
    ([(20, 22), (34, 22), (34, 50), (20, 50)], 55.0),
    ([(24, -8), (44, -8), (44, 14), (36, 14), (36, 0), (24, 0)], 18.0),
    ([(-40, -30), (-20, -30), (-20, -18), (-40, -18)], 24.0),
    ([(-6, -48), (14, -44), (18, -26), (2, -22), (-10, -30)], 40.0),
    ([(-18, 26), (-4, 26), (-4, 44), (-18, 44)], 12.0),
    ([(48, -40), (60, -40), (60, -10), (48, -10)], 70.0),
    ([(-62, -4), (-52, -14), (-42, -4), (-52, 6)], 35.0),
    ([(2, 50), (16, 50), (16, 62), (2, 62)], 22.0),
    ([(-34, -60), (-16, -60), (-16, -44), (-34, -44)], 16.0),
]

_TINY = [
    ([(-20, 8), (-8, 8), (-8, 22), (-20, 22)], 20.0),
    ([(10, 5), (24, 5), (24, 16), (10, 16)], 35.0),
    ([(-4, -26), (9, -22), (5, -12), (-8, -15)], 14.0),
]


def random_walls(rng: np.random.Generator, footprint, height: float, patch: float = 3.0):
    """One random patch grid per edge, patches roughly ``patch`` metres square."""
    fp = np.asarray(footprint, dtype=np.float64)
    grids = []
    for k in range(len(fp)):
        length = float(np.hypot(*(fp[(k + 1) % len(fp)] - fp[k])))
        rows = max(1, int(round(height / patch)))
        cols = max(1, int(round(length / patch)))
        grids.append(rng.choice(_WALL_CLASSES, size=(rows, cols)))
    return grids


def _scene(layout, seed: int, center: GridCoord, datum: DatumSpec) -> CityModel:
    rng = np.random.default_rng(seed)
    buildings = []
    for k, (fp, h) in enumerate(layout):
        pts = np.asarray(fp, dtype=np.float64) + [center.easting, center.northing]
        roof = int(rng.choice(_WALL_CLASSES))
        buildings.append(make_building(f"b{k:02d}", pts, h, walls=random_walls(rng, fp, h), roof=roof))
    return build_model(buildings, datum)


def asymmetric_scene(seed: int = 0, center: GridCoord = SCENE_CENTER, datum: DatumSpec = HK1980) -> CityModel:
    """Ten buildings of varied outline, height and facade pattern around ``center``."""
    return _scene(_TEN, seed, center, datum)


def tiny_scene(seed: int = 0, center: GridCoord = SCENE_CENTER, datum: DatumSpec = HK1980) -> CityModel:
    return _scene(_TINY, seed, center, datum)


def street_scene(
    seed: int = 0,
    center: GridCoord = SCENE_CENTER,
    datum: DatumSpec = HK1980,
    half_width: float = 8.0,
    half_length: float = 400.0,
    block: float = 40.0,
    height: float = 20.0,
) -> CityModel:
    """A straight north-south street lined by gap-free facades of one height.

    The skyline seen from the street does not change along it, so only the
    facade materials tell positions along the street apart.
    """
    rng = np.random.default_rng(seed)
    depth = 12.0
    buildings = []
    n_blocks = int(math.ceil(2 * half_length / block))
    for side, x0 in (("w", -half_width - depth), ("e", half_width)):
        for k in range(n_blocks):
            n0 = -half_length + k * block
            fp = [(x0, n0), (x0 + depth, n0), (x0 + depth, n0 + block), (x0, n0 + block)]
            pts = np.asarray(fp) + [center.easting, center.northing]
            buildings.append(
                make_building(
                    f"{side}{k:03d}", pts, height, walls=random_walls(rng, fp, height, patch=2.5), roof=Material.STONE
                )
            )
    return build_model(buildings, datum)


def add_foliage(pixels: np.ndarray, rng: np.random.Generator, n_blobs: int = 4, radius=(0.06, 0.14)) -> np.ndarray:
    """Paint elliptical Foliage blobs, biased to the upper half where they cut the skyline."""
    out = np.array(pixels, dtype=np.uint8, copy=True)
    h, w = out.shape
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_blobs):
        cy = rng.uniform(0.15, 0.6) * h
        cx = rng.uniform(0.0, 1.0) * w
        ry = rng.uniform(*radius) * h
        rx = rng.uniform(*radius) * w
        out[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = Material.FOLIAGE
    return out
