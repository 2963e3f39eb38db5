"""Core domain types and geodesic primitives.

Distances are great-circle (haversine) on a sphere of radius 6371.0088 km.
Centroids are plain arithmetic means of degrees, which is accurate for the
sub-kilometre cluster extents this package works at; clusters spanning the
antimeridian are not supported.  Timestamps are integer UTC epoch seconds
and local days are derived from a fixed UTC offset in minutes.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from typing import Iterable, Sequence, Tuple

from . import kernels
from .errors import EmptyInputError, UnsortedInputError

EARTH_RADIUS_KM = kernels.EARTH_RADIUS_KM

TRANSIENT = -1.0


def haversine_km(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) pairs in degrees."""
    return kernels.haversine_km(a[0], a[1], b[0], b[1])


def mean_centroid(points: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Arithmetic mean of latitudes and longitudes; raises on empty input."""
    if len(points) == 0:
        raise EmptyInputError("mean_centroid of empty point list")
    n = len(points)
    return (sum(p[0] for p in points) / n, sum(p[1] for p in points) / n)


def local_day(timestamp: int, utc_offset_min: int = 0) -> date:
    """Calendar date of an epoch-second timestamp under a fixed UTC offset."""
    dt = datetime.fromtimestamp(timestamp + utc_offset_min * 60, tz=timezone.utc)
    return dt.date()


def local_minutes_since_midnight(timestamp: int, utc_offset_min: int = 0) -> float:
    """Minutes past local midnight for an epoch-second timestamp."""
    shifted = timestamp + utc_offset_min * 60
    return (shifted % 86400) / 60.0


class StaySource(str, Enum):
    GPS = "GPS"
    CELLULAR = "CELLULAR"
    MERGED = "MERGED"


@dataclass(frozen=True)
class LocationRecord:
    """One timestamped geolocated observation of one device."""

    device_id: str
    timestamp: int
    lat: float
    lon: float
    accuracy: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")
        if self.accuracy < 0:
            raise ValueError(f"negative accuracy: {self.accuracy}")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp: {self.timestamp}")


@dataclass(frozen=True)
class Stay:
    """An inferred dwell: centroid, time interval, and provenance."""

    centroid_lat: float
    centroid_lon: float
    start: int
    end: int
    duration_min: float
    record_count: int
    source: StaySource
    device_id: str = ""

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("stay ends before it starts")
        if abs(self.duration_min - (self.end - self.start) / 60.0) > 1e-9:
            raise ValueError("duration_min inconsistent with start/end")
        if self.record_count < 1:
            raise ValueError("stay with no records")

    @classmethod
    def from_times(cls, lat, lon, start, end, record_count, source, device_id=""):
        return cls(lat, lon, start, end, (end - start) / 60.0, record_count,
                   source, device_id)

    @property
    def centroid(self) -> Tuple[float, float]:
        return (self.centroid_lat, self.centroid_lon)


@dataclass(frozen=True)
class LabeledRecord:
    """A location record annotated with its stay, or fully transient (-1)."""

    record: LocationRecord
    stay_lat: float = TRANSIENT
    stay_lon: float = TRANSIENT
    stay_duration_min: float = TRANSIENT

    def __post_init__(self):
        flags = (self.stay_lat == TRANSIENT, self.stay_lon == TRANSIENT,
                 self.stay_duration_min == TRANSIENT)
        if any(flags) and not all(flags):
            raise ValueError("record must be fully labeled or fully transient")

    @property
    def is_transient(self) -> bool:
        return self.stay_lat == TRANSIENT


@dataclass(frozen=True)
class DayTrajectory:
    """One device's time-sorted records for one local day."""

    device_id: str
    local_day: date
    records: Tuple[LocationRecord, ...]

    def __post_init__(self):
        ts = [r.timestamp for r in self.records]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise UnsortedInputError(f"day trajectory for {self.device_id} unsorted")


DURATION_MIN_RANGE = (0.5, 30.0)
DISTANCE_KM_RANGE = (0.05, 1.0)
OSC_WINDOW_MIN_RANGE = (1.0 / 6.0, 11.0)


@dataclass(frozen=True)
class ChangePoints:
    """Tunable stage thresholds: stay duration, distance, oscillation window.

    Values outside the documented ranges are rejected unless override=True.
    """

    duration_min_threshold: float
    distance_km_threshold: float
    osc_window_min: float = 5.0
    override: bool = False

    def __post_init__(self):
        if self.override:
            return
        checks = (
            ("duration_min_threshold", self.duration_min_threshold, DURATION_MIN_RANGE),
            ("distance_km_threshold", self.distance_km_threshold, DISTANCE_KM_RANGE),
            ("osc_window_min", self.osc_window_min, OSC_WINDOW_MIN_RANGE),
        )
        for name, value, (lo, hi) in checks:
            if not lo <= value <= hi:
                raise ValueError(
                    f"{name}={value} outside [{lo}, {hi}] (set override=True to force)")
