import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deadreckon.geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    GeoRangeError,
    circular_mean_deg,
    destination_point,
    from_local_enu,
    geodesic_distance,
    initial_bearing_deg,
    signed_delta_deg,
    to_local_enu,
    wrap_deg,
)

lat_st = st.floats(min_value=-80.0, max_value=80.0)
lon_st = st.floats(min_value=-179.0, max_value=179.0)


def manual_haversine(a: GeoPoint, b: GeoPoint) -> float:
    # independent evaluation of the formula, the oracle for geodesic_distance
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1 - h))


class TestGeodesicDistance:
    def test_identical_points(self):
        p = GeoPoint(41.9, -87.6)
        assert geodesic_distance(p, p) == 0.0

    def test_one_degree_longitude_at_equator(self):
        d = geodesic_distance(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
        expected = manual_haversine(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
        assert d == pytest.approx(expected, abs=1e-9)
        assert d == pytest.approx(111_194.9, abs=0.1)

    def test_symmetry_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            b = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            assert geodesic_distance(a, b) == pytest.approx(geodesic_distance(b, a), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(lat_st, lon_st, lat_st, lon_st, lat_st, lon_st)
    def test_triangle_inequality(self, lat1, lon1, lat2, lon2, lat3, lon3):
        a, b, c = GeoPoint(lat1, lon1), GeoPoint(lat2, lon2), GeoPoint(lat3, lon3)
        ab = geodesic_distance(a, b)
        bc = geodesic_distance(b, c)
        ac = geodesic_distance(a, c)
        assert ac <= ab + bc + 1e-6 * max(1.0, ac)

    def test_matches_manual_formula_on_random_pairs(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            b = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            assert geodesic_distance(a, b) == pytest.approx(manual_haversine(a, b), rel=1e-12)


class TestLocalEnu:
    def test_origin_maps_to_zero(self):
        o = GeoPoint(41.9, -87.6)
        assert to_local_enu(o, o) == (0.0, 0.0)

    def test_one_degree_north(self):
        o = GeoPoint(10.0, 20.0)
        east, north = to_local_enu(o, GeoPoint(11.0, 20.0))
        assert east == pytest.approx(0.0, abs=1e-9)
        assert north == pytest.approx(EARTH_RADIUS_M * math.pi / 180.0, rel=1e-12)
        assert north == pytest.approx(111_194.9, abs=0.1)

    def test_round_trip_over_offset_grid(self):
        o = GeoPoint(41.8781, -87.6298)
        for east in np.linspace(-10_000, 10_000, 9):
            for north in np.linspace(-10_000, 10_000, 9):
                p = from_local_enu(o, east, north)
                e2, n2 = to_local_enu(o, p)
                p2 = from_local_enu(o, e2, n2)
                assert geodesic_distance(p, p2) < 0.01

    def test_out_of_range_raises(self):
        o = GeoPoint(0.0, 0.0)
        with pytest.raises(GeoRangeError):
            to_local_enu(o, GeoPoint(2.0, 0.0))  # ~222 km
        with pytest.raises(GeoRangeError):
            from_local_enu(o, 200_000.0, 0.0)

    def test_destination_point_bearing_and_distance(self):
        o = GeoPoint(41.9, -87.6)
        rng = np.random.default_rng(3)
        for _ in range(50):
            bearing = rng.uniform(0, 360)
            dist = rng.uniform(10, 5000)
            p = destination_point(o, bearing, dist)
            assert geodesic_distance(o, p) == pytest.approx(dist, rel=1e-4)
            assert abs(signed_delta_deg(initial_bearing_deg(o, p), bearing)) < 0.01


class TestAngles:
    @pytest.mark.parametrize("angle,expected", [
        (0.0, 0.0), (360.0, 0.0), (-1.0, 359.0), (725.0, 5.0), (-725.0, 355.0),
    ])
    def test_wrap_deg(self, angle, expected):
        assert wrap_deg(angle) == pytest.approx(expected)

    @pytest.mark.parametrize("to,frm,expected", [
        (100.0, 350.0, 110.0),   # eastbound turn through north
        (350.0, 100.0, -110.0),
        (180.0, 0.0, 180.0),
        (0.0, 180.0, 180.0),     # ties resolve to +180
        (10.0, 350.0, 20.0),
    ])
    def test_signed_delta(self, to, frm, expected):
        assert signed_delta_deg(to, frm) == pytest.approx(expected)

    def test_circular_mean_wraps(self):
        assert circular_mean_deg([358.0, 0.0, 2.0]) == pytest.approx(0.0, abs=1e-9)
        assert circular_mean_deg([90.0, 90.0]) == pytest.approx(90.0)
        with pytest.raises(ValueError):
            circular_mean_deg([])


class TestGeoPoint:
    @pytest.mark.parametrize("lat,lon", [(91.0, 0.0), (-91.0, 0.0), (0.0, 181.0),
                                         (0.0, -181.0), (float("nan"), 0.0)])
    def test_invalid_coordinates_raise(self, lat, lon):
        with pytest.raises(ValueError):
            GeoPoint(lat, lon)
