"""Material-segmented city model: extruded footprints with per-wall patch grids.

The on-disk format is line oriented text, described in ``docs/model_format.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .geodesy import DatumSpec, GridCoord, datum_preset
from .raycast import cast_rays_packed


class Material(IntEnum):
    SKY = 0
    STONE = 1
    GLASS = 2
    METAL = 3
    FOLIAGE = 4
    OTHERS = 5


N_CLASSES = 6
GEOMETRY_CLASSES = frozenset({Material.STONE, Material.GLASS, Material.METAL, Material.OTHERS})

# RGB palette for human-viewable exports
PALETTE = {
    Material.SKY: (0, 0, 0),
    Material.STONE: (0, 0, 255),
    Material.GLASS: (0, 255, 0),
    Material.METAL: (255, 165, 0),
    Material.FOLIAGE: (255, 255, 0),
    Material.OTHERS: (173, 216, 230),
}


class ModelParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ModelValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Building:
    """One extruded building.

    ``walls[k]`` is the patch grid of the wall on edge ``k`` (vertex ``k`` to
    vertex ``k+1``), shape ``(rows, cols)``, top row first. Column ``c`` spans
    ``[c, c+1) * L / cols`` metres from the edge's first vertex and row-from-
    the-bottom ``r`` spans ``[r, r+1) * height / rows`` metres above the base.
    """

    name: str
    footprint: np.ndarray
    base: float
    height: float
    walls: tuple
    roof: int

    def validate(self) -> None:
        fp = self.footprint
        who = f"building {self.name!r}"
        if fp.ndim != 2 or fp.shape[1] != 2 or len(fp) < 3:
            raise ModelValidationError(f"{who}: footprint needs at least 3 vertices")
        if not np.all(np.isfinite(fp)) or not math.isfinite(self.base):
            raise ModelValidationError(f"{who}: non-finite coordinates")
        if not (math.isfinite(self.height) and self.height > 0):
            raise ModelValidationError(f"{who}: height must be positive")
        if len(self.walls) != len(fp):
            raise ModelValidationError(f"{who}: expected {len(fp)} wall grids, got {len(self.walls)}")
        for k, g in enumerate(self.walls):
            if g.ndim != 2 or g.size == 0:
                raise ModelValidationError(f"{who}: wall {k} patch grid is empty")
            bad = set(np.unique(g).tolist()) - set(int(c) for c in GEOMETRY_CLASSES)
            if bad:
                raise ModelValidationError(f"{who}: wall {k} uses non-geometry classes {sorted(bad)}")
        if self.roof not in GEOMETRY_CLASSES:
            raise ModelValidationError(f"{who}: roof class {self.roof} is not a geometry class")
        if not _is_simple(fp):
            raise ModelValidationError(f"{who}: footprint is not a simple polygon")


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_touch(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return (
        (d1 == 0 and _on_segment(q1, q2, p1))
        or (d2 == 0 and _on_segment(q1, q2, p2))
        or (d3 == 0 and _on_segment(p1, p2, q1))
        or (d4 == 0 and _on_segment(p1, p2, q2))
    )


def _is_simple(fp: np.ndarray) -> bool:
    n = len(fp)
    pts = [tuple(p) for p in fp]
    if len(set(pts)) != n:
        return False
    x, y = fp[:, 0], fp[:, 1]
    if abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) < 1e-12:
        return False
    for i in range(n):
        a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
        # consecutive edges may only share their common vertex (no fold-back)
        if _orient(a, b, c) == 0 and (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]) < 0:
            return False
        for j in range(i + 2, n):
            if (j + 1) % n == i:
                continue
            if _segments_touch(a, b, pts[j], pts[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class PackedModel:
    wall_geo: np.ndarray
    wall_meta: np.ndarray
    patches: np.ndarray
    bld_walls: np.ndarray
    roof_xy: np.ndarray
    bld_roof: np.ndarray
    roof_z: np.ndarray
    roof_cls: np.ndarray
    bbox: np.ndarray


@dataclass(frozen=True, eq=False)
class CityModel:
    buildings: tuple
    datum: DatumSpec
    source: str = field(default="", compare=False)

    def validate(self) -> None:
        for b in self.buildings:
            b.validate()

    @cached_property
    def packed(self) -> PackedModel:
        wall_geo, wall_meta, patches = [], [], []
        bld_walls, roof_xy, bld_roof, roof_z, roof_cls, bbox = [], [], [], [], [], []
        off = 0
        for bi, b in enumerate(self.buildings):
            fp = b.footprint
            n = len(fp)
            zb, zt = b.base, b.base + b.height
            bld_walls.append((len(wall_geo), n))
            for k in range(n):
                p0, p1 = fp[k], fp[(k + 1) % n]
                g = np.asarray(b.walls[k], dtype=np.uint8)
                wall_geo.append((p0[0], p0[1], p1[0], p1[1], zb, zt))
                wall_meta.append((bi, off, g.shape[0], g.shape[1]))
                patches.append(g.ravel())
                off += g.size
            bld_roof.append((len(roof_xy), n))
            roof_xy.extend(fp.tolist())
            roof_z.append(zt)
            roof_cls.append(b.roof)
            bbox.append((fp[:, 0].min(), fp[:, 1].min(), zb, fp[:, 0].max(), fp[:, 1].max(), zt))
        return PackedModel(
            wall_geo=np.array(wall_geo, dtype=np.float64).reshape(-1, 6),
            wall_meta=np.array(wall_meta, dtype=np.int64).reshape(-1, 4),
            patches=np.concatenate(patches).astype(np.uint8) if patches else np.zeros(0, np.uint8),
            bld_walls=np.array(bld_walls, dtype=np.int64).reshape(-1, 2),
            roof_xy=np.array(roof_xy, dtype=np.float64).reshape(-1, 2),
            bld_roof=np.array(bld_roof, dtype=np.int64).reshape(-1, 2),
            roof_z=np.array(roof_z, dtype=np.float64),
            roof_cls=np.array(roof_cls, dtype=np.uint8),
            bbox=np.array(bbox, dtype=np.float64).reshape(-1, 6),
        )

    @property
    def n_walls(self) -> int:
        return sum(len(b.footprint) for b in self.buildings)

    def bounds(self):
        """(xmin, ymin, xmax, ymax) over all footprints, or None when empty."""
        if not self.buildings:
            return None
        bb = self.packed.bbox
        return bb[:, 0].min(), bb[:, 1].min(), bb[:, 3].max(), bb[:, 4].max()


def make_building(name, footprint, height, *, base=0.0, walls=Material.STONE, roof=Material.STONE) -> Building:
    """Convenience constructor: ``walls`` is a class, a single grid, or one class or grid per edge."""
    fp = np.asarray(footprint, dtype=np.float64)
    n = len(fp)
    if isinstance(walls, (int, np.integer)):
        grids = tuple(np.full((1, 1), int(walls), dtype=np.uint8) for _ in range(n))
    else:
        walls = list(walls)
        if any(np.ndim(w) == 2 for w in walls):
            grids = tuple(np.asarray(g, dtype=np.uint8).reshape((1, 1) if np.ndim(g) == 0 else np.shape(g)) for g in walls)
        elif walls and np.ndim(walls[0]) == 1:
            grids = tuple(np.asarray(walls, dtype=np.uint8).copy() for _ in range(n))
        else:
            grids = tuple(np.full((1, 1), int(c), dtype=np.uint8) for c in walls)
    return Building(name=name, footprint=fp, base=float(base), height=float(height), walls=grids, roof=int(roof))


def build_model(buildings: Sequence[Building], datum: DatumSpec) -> CityModel:
    m = CityModel(buildings=tuple(buildings), datum=datum)
    m.validate()
    return m


# ---------------------------------------------------------------------------
# text format


def _floats(tokens, lineno, what):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ModelParseError(lineno, f"{what}: expected numbers, got {' '.join(tokens)!r}") from None


def _int_class(tok, lineno, what):
    try:
        v = int(tok)
    except ValueError:
        raise ModelParseError(lineno, f"{what}: expected a class index, got {tok!r}") from None
    if not 0 <= v < N_CLASSES:
        raise ModelParseError(lineno, f"{what}: class index {v} out of range")
    return v


def parse_model(text: str, source: str = "<string>") -> CityModel:
    lines = text.splitlines()
    datum = None
    buildings = []
    cur = None
    i = 0

    def finish(lineno):
        nonlocal cur
        name = cur["name"]
        for key in ("height",):
            if cur[key] is None:
                raise ModelParseError(lineno, f"building {name!r}: missing '{key}'")
        n = len(cur["vertices"])
        grids = []
        for k in range(n):
            if k in cur["walls"]:
                grids.append(cur["walls"][k])
            else:
                grids.append(np.full((1, 1), cur["default_wall"], dtype=np.uint8))
        extra = [k for k in cur["walls"] if k >= n]
        if extra:
            raise ModelParseError(cur["walls_line"][extra[0]], f"building {name!r}: wall edge {extra[0]} >= vertex count {n}")
        b = Building(
            name=name,
            footprint=np.array(cur["vertices"], dtype=np.float64).reshape(-1, 2),
            base=cur["base"],
            height=cur["height"],
            walls=tuple(grids),
            roof=cur["roof"],
        )
        b.validate()
        buildings.append(b)
        cur = None

    while i < len(lines):
        lineno = i + 1
        raw = lines[i].split("#", 1)[0].strip()
        i += 1
        if not raw:
            continue
        tok = raw.split()
        key, args = tok[0].lower(), tok[1:]
        if key == "datum":
            if cur is not None:
                raise ModelParseError(lineno, "'datum' inside a building block")
            if len(args) == 1:
                try:
                    datum = datum_preset(args[0])
                except ValueError as exc:
                    raise ModelParseError(lineno, str(exc)) from None
            elif len(args) == 8 and args[0].lower() == "custom":
                vals = _floats(args[1:], lineno, "datum")
                try:
                    datum = DatumSpec(*vals)
                except ValueError as exc:
                    raise ModelParseError(lineno, f"datum: {exc}") from None
            else:
                raise ModelParseError(lineno, "datum: expected a preset name or 'custom' and 7 numbers")
        elif key == "building":
            if cur is not None:
                raise ModelParseError(lineno, "nested 'building' (missing 'end')")
            if datum is None:
                raise ModelParseError(lineno, "'datum' must precede the first building")
            cur = dict(
                name=" ".join(args) or f"b{len(buildings)}",
                base=0.0,
                height=None,
                roof=int(Material.STONE),
                default_wall=int(Material.STONE),
                vertices=[],
                walls={},
                walls_line={},
            )
        elif key == "end":
            if cur is None:
                raise ModelParseError(lineno, "'end' without 'building'")
            finish(lineno)
        elif cur is None:
            raise ModelParseError(lineno, f"unexpected {key!r} outside a building block")
        elif key in ("base", "height"):
            if len(args) != 1:
                raise ModelParseError(lineno, f"{key}: expected one number")
            cur[key] = _floats(args, lineno, key)[0]
        elif key == "roof":
            if len(args) != 1:
                raise ModelParseError(lineno, "roof: expected one class index")
            cur["roof"] = _int_class(args[0], lineno, "roof")
        elif key == "walls":
            if len(args) != 1:
                raise ModelParseError(lineno, "walls: expected one class index")
            cur["default_wall"] = _int_class(args[0], lineno, "walls")
        elif key == "vertex":
            if len(args) != 2:
                raise ModelParseError(lineno, "vertex: expected easting northing")
            cur["vertices"].append(_floats(args, lineno, "vertex"))
        elif key == "wall":
            if len(args) != 3:
                raise ModelParseError(lineno, "wall: expected edge rows cols")
            try:
                edge, rows, cols = (int(a) for a in args)
            except ValueError:
                raise ModelParseError(lineno, "wall: edge, rows, cols must be integers") from None
            if edge < 0 or rows < 1 or cols < 1:
                raise ModelParseError(lineno, "wall: edge must be >= 0, rows and cols >= 1")
            if edge in cur["walls"]:
                raise ModelParseError(lineno, f"wall: edge {edge} given twice")
            grid = np.zeros((rows, cols), dtype=np.uint8)
            for r in range(rows):
                if i >= len(lines):
                    raise ModelParseError(i, f"wall {edge}: expected {rows} rows, file ended")
                rl = lines[i].split("#", 1)[0].split()
                i += 1
                if len(rl) != cols:
                    raise ModelParseError(i, f"wall {edge}: row {r} has {len(rl)} entries, expected {cols}")
                grid[r] = [_int_class(t, i, f"wall {edge}") for t in rl]
            cur["walls"][edge] = grid
            cur["walls_line"][edge] = lineno
        else:
            raise ModelParseError(lineno, f"unknown keyword {key!r}")
    if cur is not None:
        raise ModelParseError(len(lines), f"building {cur['name']!r}: missing 'end'")
    if datum is None:
        raise ModelParseError(len(lines) or 1, "missing 'datum' line")
    return CityModel(buildings=tuple(buildings), datum=datum, source=source)


def load_model(path) -> CityModel:
    path = Path(path)
    return parse_model(path.read_text(), source=str(path))


def dump_model(m: CityModel) -> str:
    d = m.datum
    out = ["# semvps city model"]
    try:
        preset = datum_preset(d.name)
    except ValueError:
        preset = None
    if preset == d:
        out.append(f"datum {d.name}")
    else:
        out.append(
            "datum custom "
            + " ".join(
                repr(float(v))
                for v in (d.origin_lat, d.origin_lon, d.false_easting, d.false_northing, d.scale_factor, d.semi_major_axis, d.flattening)
            )
        )
    for b in m.buildings:
        out += ["", f"building {b.name}", f"base {b.base!r}", f"height {b.height!r}", f"roof {b.roof}"]
        for x, y in b.footprint:
            out.append(f"vertex {float(x)!r} {float(y)!r}")
        for k, g in enumerate(b.walls):
            out.append(f"wall {k} {g.shape[0]} {g.shape[1]}")
            out += [" ".join(str(int(v)) for v in row) for row in g]
        out.append("end")
    return "\n".join(out) + "\n"


def save_model(m: CityModel, path) -> None:
    Path(path).write_text(dump_model(m))


# ---------------------------------------------------------------------------
# queries


def _strictly_inside(fp: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    n = len(fp)
    j = n - 1
    for i in range(n):
        xi, yi = fp[i]
        xj, yj = fp[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            crosses = (yi > y) != (yj > y)
            xc = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < xc)
        cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
        on_edge |= (
            (np.abs(cross) <= 1e-12 * max(1.0, abs(xj - xi) + abs(yj - yi)))
            & (x >= min(xi, xj)) & (x <= max(xi, xj)) & (y >= min(yi, yj)) & (y <= max(yi, yj))
        )
        j = i
    return inside & ~on_edge


def contains_points(m: CityModel, pts: np.ndarray) -> np.ndarray:
    """Vectorised :func:`contains_point` over an ``(n, 3)`` array of grid coordinates."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    res = np.zeros(len(pts), dtype=bool)
    for b in m.buildings:
        z_ok = (pts[:, 2] >= b.base) & (pts[:, 2] <= b.base + b.height)
        fp = b.footprint
        box = (
            z_ok
            & (pts[:, 0] > fp[:, 0].min()) & (pts[:, 0] < fp[:, 0].max())
            & (pts[:, 1] > fp[:, 1].min()) & (pts[:, 1] < fp[:, 1].max())
        )
        if box.any():
            idx = np.nonzero(box)[0]
            res[idx] |= _strictly_inside(fp, pts[idx, 0], pts[idx, 1])
    return res


def contains_point(m: CityModel, c: GridCoord) -> bool:
    return bool(contains_points(m, np.array([[c.easting, c.northing, c.alt]]))[0])


def cast_rays(m: CityModel, origins: np.ndarray, dirs: np.ndarray):
    """Batch ray cast; see :func:`semvps.raycast.cast_rays_packed`."""
    return cast_rays_packed(m.packed, origins, dirs)


def cast_ray(m: CityModel, origin: GridCoord, direction) -> tuple[Material, float]:
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if not np.isclose(norm, 1.0, atol=1e-9):
        raise ValueError("direction must be a unit vector")
    cls, dist = cast_rays(m, origin.as_array(), d.reshape(1, 3))
    return Material(int(cls[0])), float(dist[0])
