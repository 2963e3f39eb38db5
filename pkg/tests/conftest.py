"""Shared fixtures and independent oracle implementations.

The oracles here deliberately avoid the package's kernel code paths:
distances use the asin formulation of the haversine, segmentation uses a
brute-force maximal-prefix search, and radius of gyration is a direct
summation.  Expected values in tests come from these, from hand traces,
or from documented contracts -- never from the implementation under test.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import numpy as np
import pytest

from maw.model import ChangePoints, LocationRecord, Stay, StaySource
from maw.timeline import UserRecords

EARTH_RADIUS_KM = 6371.0088


def oracle_haversine_km(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Independent asin-form haversine (the package uses atan2)."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def oracle_trace_segments(ts: Sequence[int], lat: Sequence[float],
                          lon: Sequence[float], dist_km: float,
                          dur_min: float) -> List[int]:
    """Brute-force greedy leftmost-maximal segmentation.

    For each anchor the maximal extension is found by exhaustively
    testing every candidate end against every pair, not by incremental
    extension; the anchor-advance rules are the documented ones.
    """
    n = len(ts)
    labels = [-1] * n
    i = 0
    sid = 0
    while i < n:
        best = i
        for j in range(i, n):
            ok = all(
                oracle_haversine_km((lat[p], lon[p]), (lat[q], lon[q])) <= dist_km
                for p in range(i, j + 1) for q in range(p + 1, j + 1))
            if ok:
                best = j
            else:
                break
        if ts[best] - ts[i] >= dur_min * 60.0:
            for k in range(i, best + 1):
                labels[k] = sid
            sid += 1
            i = best + 1
        else:
            i += 1
    return labels


def oracle_radius_of_gyration(points: Sequence[Tuple[float, float]]) -> float:
    """Direct summation: RMS haversine distance from the coordinate mean."""
    clat = sum(p[0] for p in points) / len(points)
    clon = sum(p[1] for p in points) / len(points)
    total = sum(oracle_haversine_km(p, (clat, clon)) ** 2 for p in points)
    return math.sqrt(total / len(points))


def make_records(device: str, points: Sequence[Tuple[int, float, float]],
                 accuracy: float = 10.0) -> List[LocationRecord]:
    return [LocationRecord(device, t, la, lo, accuracy)
            for t, la, lo in points]


def make_user(device: str, points: Sequence[Tuple[int, float, float]],
              accuracy: float = 10.0) -> UserRecords:
    return UserRecords.from_records(make_records(device, points, accuracy))


def make_stay(lat: float, lon: float, start: int, end: int,
              source: StaySource = StaySource.GPS, device: str = "u",
              record_count: int = 2) -> Stay:
    return Stay.from_times(lat, lon, start, end, record_count, source, device)


@pytest.fixture
def cp_default() -> ChangePoints:
    return ChangePoints(duration_min_threshold=5.0, distance_km_threshold=0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_trajectory(rng: np.random.Generator, max_records: int = 8,
                      spread_km: float = 0.6):
    """A short random same-day trajectory around a fixed base point."""
    n = int(rng.integers(1, max_records + 1))
    ts = np.cumsum(rng.integers(0, 600, size=n)).astype(np.int64)
    base_lat, base_lon = 47.6, -122.3
    deg = spread_km / 111.195
    lat = base_lat + rng.uniform(-deg, deg, size=n)
    lon = base_lon + rng.uniform(-deg, deg, size=n) / math.cos(math.radians(base_lat))
    return ts, lat, lon
