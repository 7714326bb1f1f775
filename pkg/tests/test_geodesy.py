import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semvps.geodesy import (
    HK1980,
    DatumSpec,
    GeoCoord,
    GridCoord,
    ProjectionRangeError,
    datum_preset,
    geo_to_grid,
    geo_to_grid_arrays,
    grid_to_geo,
    grid_to_geo_arrays,
)

from .oracles import latitude_at_arc, meridian_arc

UTM50 = DatumSpec(0.0, 117.0, 500000.0, 0.0, 0.9996, 6378137.0, 1 / 298.257223563, "utm50")


def snyder_forward(lat, lon, d):
    """Classic Snyder series; good to about a millimetre within a degree of the meridian."""
    a, f, k0 = d.semi_major_axis, d.flattening, d.scale_factor
    e2 = f * (2 - f)
    ep2 = e2 / (1 - e2)
    phi = math.radians(lat)
    n = a / math.sqrt(1 - e2 * math.sin(phi) ** 2)
    t = math.tan(phi) ** 2
    c = ep2 * math.cos(phi) ** 2
    A = math.radians(lon - d.origin_lon) * math.cos(phi)
    m = meridian_arc(lat, a, f)
    m0 = meridian_arc(d.origin_lat, a, f)
    x = k0 * n * (A + (1 - t + c) * A**3 / 6 + (5 - 18 * t + t * t + 72 * c - 58 * ep2) * A**5 / 120)
    y = k0 * (
        m
        - m0
        + n
        * math.tan(phi)
        * (A * A / 2 + (5 - t + 9 * c + 4 * c * c) * A**4 / 24 + (61 - 58 * t + t * t + 600 * c - 330 * ep2) * A**6 / 720)
    )
    return d.false_easting + x, d.false_northing + y


def test_origin_maps_to_false_offsets():
    g = geo_to_grid(GeoCoord(HK1980.origin_lat, HK1980.origin_lon, 12.5), HK1980)
    assert g.easting == pytest.approx(HK1980.false_easting, abs=1e-6)
    assert g.northing == pytest.approx(HK1980.false_northing, abs=1e-6)
    assert g.alt == 12.5


def test_false_offsets_map_to_origin():
    p = grid_to_geo(GridCoord(HK1980.false_easting, HK1980.false_northing, -3.0), HK1980)
    assert p.lat == pytest.approx(HK1980.origin_lat, abs=1e-12)
    assert p.lon == pytest.approx(HK1980.origin_lon, abs=1e-12)
    assert p.alt == -3.0


@pytest.mark.parametrize("datum", [HK1980, UTM50], ids=["hk1980", "utm50"])
def test_round_trip_1000_points(datum):
    rng = np.random.default_rng(7)
    lat = datum.origin_lat + rng.uniform(-4, 4, 1000)
    lon = datum.origin_lon + rng.uniform(-4, 4, 1000)
    e, n = geo_to_grid_arrays(lat, lon, datum)
    lat2, lon2 = grid_to_geo_arrays(e, n, datum)
    assert np.max(np.abs(lat2 - lat)) < 1e-9
    assert np.max(np.abs(lon2 - lon)) < 1e-9
    # and the other way, in metres
    e2, n2 = geo_to_grid_arrays(lat2, lon2, datum)
    assert np.max(np.hypot(e2 - e, n2 - n)) < 1e-3


def test_meridian_differential_matches_arc_length():
    d = HK1980
    lat1 = d.origin_lat + 0.01
    lat2 = latitude_at_arc(lat1, 100.0, d.semi_major_axis, d.flattening)
    n1 = geo_to_grid(GeoCoord(lat1, d.origin_lon), d).northing
    n2 = geo_to_grid(GeoCoord(lat2, d.origin_lon), d).northing
    assert n2 - n1 == pytest.approx(100.0 * d.scale_factor, abs=0.01)


def test_meridian_differential_with_scale_factor():
    d = UTM50
    lat1 = 3.0
    lat2 = latitude_at_arc(lat1, 100.0, d.semi_major_axis, d.flattening)
    n1 = geo_to_grid(GeoCoord(lat1, d.origin_lon), d).northing
    n2 = geo_to_grid(GeoCoord(lat2, d.origin_lon), d).northing
    assert n2 - n1 == pytest.approx(100.0 * 0.9996, abs=0.01)


@pytest.mark.parametrize("dlat,dlon", [(0.3, 0.2), (-0.5, 0.7), (0.9, -0.9), (-0.1, -0.4)])
def test_forward_agrees_with_independent_series(dlat, dlon):
    d = HK1980
    lat, lon = d.origin_lat + dlat, d.origin_lon + dlon
    e, n = geo_to_grid_arrays(lat, lon, d)
    eo, no = snyder_forward(lat, lon, d)
    assert float(e) == pytest.approx(eo, abs=2e-3)
    assert float(n) == pytest.approx(no, abs=2e-3)


def test_east_of_origin_has_larger_longitude():
    p = grid_to_geo(GridCoord(HK1980.false_easting + 1000.0, HK1980.false_northing), HK1980)
    assert p.lon > HK1980.origin_lon


@pytest.mark.parametrize("lat,lon", [(HK1980.origin_lat + 4.5, HK1980.origin_lon), (HK1980.origin_lat, HK1980.origin_lon - 5)])
def test_out_of_band_rejected(lat, lon):
    with pytest.raises(ProjectionRangeError):
        geo_to_grid(GeoCoord(lat, lon), HK1980)


def test_out_of_band_grid_rejected():
    with pytest.raises(ProjectionRangeError):
        grid_to_geo(GridCoord(HK1980.false_easting + 2.0e6, HK1980.false_northing), HK1980)


def test_type_invariants():
    with pytest.raises(ValueError):
        GeoCoord(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoCoord(0.0, -180.0)
    GeoCoord(0.0, 180.0)
    with pytest.raises(ValueError):
        GridCoord(math.nan, 0.0)
    with pytest.raises(ValueError):
        DatumSpec(0, 0, 0, 0, 0.0, 6378137.0, 0.003)
    with pytest.raises(ValueError):
        DatumSpec(0, 0, 0, 0, 1.0, -1.0, 0.003)
    with pytest.raises(ValueError):
        DatumSpec(0, 0, 0, 0, 1.0, 6378137.0, 1.0)


def test_datum_dict_round_trip():
    assert DatumSpec.from_dict(HK1980.to_dict()) == HK1980
    assert DatumSpec.from_dict("hk1980") is HK1980
    assert datum_preset("HK1980") is HK1980
    with pytest.raises(ValueError):
        datum_preset("nad27")


band = st.floats(-3.9, 3.9, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(band, band, st.floats(0.0001, 0.05))
def test_monotone_in_latitude_and_longitude(dlat, dlon, step):
    d = HK1980
    lat, lon = d.origin_lat + dlat, d.origin_lon + dlon
    e0, n0 = geo_to_grid_arrays(lat, lon, d)
    _, n1 = geo_to_grid_arrays(lat + step, lon, d)
    e1, _ = geo_to_grid_arrays(lat, lon + step, d)
    assert n1 > n0
    assert e1 > e0


@settings(max_examples=200, deadline=None)
@given(st.floats(-3.8e5, 3.8e5), st.floats(-3.8e5, 3.8e5))
def test_inverse_then_forward_within_a_millimetre(de, dn):
    d = HK1980
    e, n = d.false_easting + de, d.false_northing + dn
    lat, lon = grid_to_geo_arrays(e, n, d)
    e2, n2 = geo_to_grid_arrays(lat, lon, d)
    assert math.hypot(float(e2) - e, float(n2) - n) < 1e-3
