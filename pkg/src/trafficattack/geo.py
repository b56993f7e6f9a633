"""Small geodesy helpers shared by the network builder, ride generator and reports."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class GeoCoord(NamedTuple):
    lat: float
    lon: float

    def validate(self) -> "GeoCoord":
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinate out of range: {self}")
        return self


def haversine_m(a: Sequence[float], b: Sequence[float]) -> float:
    """Great-circle distance in meters between two (lat, lon) pairs."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    h = (math.sin((lat2 - lat1) / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_many(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised haversine; arguments broadcast like numpy arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float))
                              for x in (lat1, lon1, lat2, lon2))
    h = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def to_unit_xyz(lat, lon) -> np.ndarray:
    """Points on the unit sphere; chord length there is monotone in haversine distance."""
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    return np.column_stack([np.cos(lat) * np.cos(lon),
                            np.cos(lat) * np.sin(lon),
                            np.sin(lat)])


def chord_for_distance(meters: float) -> float:
    return 2.0 * math.sin(min(math.pi, meters / EARTH_RADIUS_M) / 2.0)


def midpoint(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    # arithmetic mean of endpoint coordinates, adequate at street scale
    return ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)


def point_in_polygon(lat: float, lon: float, ring: Sequence[Sequence[float]]) -> bool:
    """Even-odd rule test of a (lat, lon) point against a closed ring of (lat, lon) vertices."""
    inside = False
    n = len(ring)
    j = n - 1
    for i in range(n):
        yi, xi = ring[i][0], ring[i][1]
        yj, xj = ring[j][0], ring[j][1]
        if (yi > lat) != (yj > lat):
            x_cross = xi + (lat - yi) * (xj - xi) / (yj - yi)
            if lon < x_cross:
                inside = not inside
        j = i
    return inside
