"""Local equirectangular geometry for field-scale distances (< a few km)."""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6371008.8
M_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0
WEB_MERCATOR_M_PER_PX_Z0 = 156543.034


@dataclass(frozen=True)
class GeoFix:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class Bounds:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError(f"inverted bounds {self}")
        GeoFix(self.min_lat, self.min_lon)
        GeoFix(self.max_lat, self.max_lon)

    @property
    def center_lat(self) -> float:
        return 0.5 * (self.min_lat + self.max_lat)

    def contains(self, lat: float, lon: float) -> bool:
        return self.min_lat <= lat <= self.max_lat and self.min_lon <= lon <= self.max_lon


def m_per_deg_lon(lat: float) -> float:
    return M_PER_DEG_LAT * math.cos(math.radians(lat))


class LocalFrame:
    """East/north metres around a reference latitude/longitude."""

    def __init__(self, ref_lat: float, ref_lon: float):
        self.ref_lat = ref_lat
        self.ref_lon = ref_lon
        self.kx = m_per_deg_lon(ref_lat)
        self.ky = M_PER_DEG_LAT

    def to_xy(self, lat: float, lon: float) -> tuple[float, float]:
        return (lon - self.ref_lon) * self.kx, (lat - self.ref_lat) * self.ky

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        return self.ref_lat + y / self.ky, self.ref_lon + x / self.kx

    def distance(self, a: tuple[float, float], b: tuple[float, float]) -> float:
        """Distance in metres between two (lat, lon) pairs."""
        ax, ay = self.to_xy(*a)
        bx, by = self.to_xy(*b)
        return math.hypot(ax - bx, ay - by)


def ground_resolution(lat: float, zoom: int) -> float:
    """Web-Mercator metres per map pixel at ``lat`` for a given zoom level."""
    return WEB_MERCATOR_M_PER_PX_Z0 * math.cos(math.radians(lat)) / 2 ** zoom
