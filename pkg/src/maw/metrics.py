"""Mobility metrics computed from inferred stays.

Trips require origin and destination stays starting on the same local
day; radius of gyration is the root-mean-square great-circle distance of
a day's stays from their centre of mass, averaged over days with at
least one stay.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Collection, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyCohortError, EmptyInputError
from .model import Stay, haversine_km, local_day, local_minutes_since_midnight, mean_centroid

N_BINS = 48


@dataclass(frozen=True)
class MobilityMetrics:
    trips_per_person_day: float
    rg_km_per_person_day: float
    departure_histogram: Tuple[int, ...]  # 48 half-hour bins
    users_included: int

    def __post_init__(self):
        if len(self.departure_histogram) != N_BINS:
            raise ValueError("departure histogram must have 48 bins")
        if any(c < 0 for c in self.departure_histogram):
            raise ValueError("negative histogram count")


def _stays_by_day(stays: Sequence[Stay],
                  utc_offset_min: int) -> Dict[date, List[Stay]]:
    out: Dict[date, List[Stay]] = {}
    for s in stays:
        out.setdefault(local_day(s.start, utc_offset_min), []).append(s)
    return out


def trips_per_day(stays: Sequence[Stay], day: date,
                  utc_offset_min: int = 0) -> int:
    """Trips on one local day: stays starting that day minus one, floored at 0."""
    n = sum(1 for s in stays if local_day(s.start, utc_offset_min) == day)
    return max(0, n - 1)


def radius_of_gyration(day_stays: Sequence[Stay]) -> float:
    """RMS great-circle distance of one day's stays from their centre of mass."""
    if not day_stays:
        raise EmptyInputError("radius of gyration undefined without stays")
    center = mean_centroid([s.centroid for s in day_stays])
    total = sum(haversine_km(s.centroid, center) ** 2 for s in day_stays)
    return float(np.sqrt(total / len(day_stays)))


def user_radius_of_gyration(stays: Sequence[Stay],
                            utc_offset_min: int = 0) -> float:
    """Unweighted mean of daily radii over days with at least one stay."""
    by_day = _stays_by_day(stays, utc_offset_min)
    if not by_day:
        raise EmptyInputError("user has no stays")
    return sum(radius_of_gyration(v) for v in by_day.values()) / len(by_day)


def departure_histogram(stays: Sequence[Stay],
                        utc_offset_min: int = 0) -> List[int]:
    """48 half-hour counts of trip departures (the origin stay's end time).

    A trip needs origin and destination stays starting on the same local
    day; cross-midnight pairs are not counted.
    """
    counts = [0] * N_BINS
    ordered = sorted(stays, key=lambda s: (s.start, s.end))
    for origin, dest in zip(ordered, ordered[1:]):
        if (local_day(origin.start, utc_offset_min)
                != local_day(dest.start, utc_offset_min)):
            continue
        minutes = local_minutes_since_midnight(origin.end, utc_offset_min)
        counts[int(minutes // 30) % N_BINS] += 1
    return counts


def aggregate_metrics(stays_by_user: Mapping[str, Sequence[Stay]],
                      cohort: Optional[Collection[str]] = None,
                      utc_offset_min: int = 0) -> MobilityMetrics:
    """Average trips/day and radius of gyration over person-days with at
    least one stay, restricted to the cohort; histograms are summed."""
    users = sorted(stays_by_user) if cohort is None else sorted(
        u for u in stays_by_user if u in cohort)
    trip_values: List[int] = []
    rg_values: List[float] = []
    histogram = [0] * N_BINS
    included = 0
    for u in users:
        stays = stays_by_user[u]
        by_day = _stays_by_day(stays, utc_offset_min)
        if not by_day:
            continue
        included += 1
        for day, day_stays in sorted(by_day.items()):
            trip_values.append(max(0, len(day_stays) - 1))
            rg_values.append(radius_of_gyration(day_stays))
        for b, c in enumerate(departure_histogram(stays, utc_offset_min)):
            histogram[b] += c
    if included == 0:
        raise EmptyCohortError("no cohort user has any stays")
    return MobilityMetrics(
        trips_per_person_day=float(np.mean(trip_values)),
        rg_km_per_person_day=float(np.mean(rg_values)),
        departure_histogram=tuple(histogram),
        users_included=included,
    )
