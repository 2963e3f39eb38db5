"""Array-backed per-user working data used by the pipeline stages.

Stage functions operate on these containers; the value types in
``model`` are the serialization-facing view of the same data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date
from typing import List, Sequence, Tuple

import numpy as np

from .errors import UnsortedInputError
from .model import (DayTrajectory, LabeledRecord, LocationRecord, Stay,
                    StaySource, local_day)


@dataclass
class UserRecords:
    """One device's full observation history as sorted parallel arrays."""

    device_id: str
    ts: np.ndarray        # int64 epoch seconds, non-decreasing
    lat: np.ndarray       # float64 degrees
    lon: np.ndarray
    accuracy: np.ndarray  # float64 metres

    def __len__(self) -> int:
        return len(self.ts)

    def check_sorted(self):
        if len(self.ts) > 1 and np.any(np.diff(self.ts) < 0):
            raise UnsortedInputError(f"records for {self.device_id} not time-sorted")

    @classmethod
    def from_records(cls, records: Sequence[LocationRecord]) -> "UserRecords":
        device = records[0].device_id if records else ""
        return cls(
            device_id=device,
            ts=np.array([r.timestamp for r in records], dtype=np.int64),
            lat=np.array([r.lat for r in records], dtype=np.float64),
            lon=np.array([r.lon for r in records], dtype=np.float64),
            accuracy=np.array([r.accuracy for r in records], dtype=np.float64),
        )

    def to_records(self) -> List[LocationRecord]:
        return [
            LocationRecord(self.device_id, int(t), float(la), float(lo), float(ac))
            for t, la, lo, ac in zip(self.ts, self.lat, self.lon, self.accuracy)
        ]

    def day_slices(self, utc_offset_min: int = 0) -> List[Tuple[date, slice]]:
        """Contiguous index ranges per local calendar day."""
        out: List[Tuple[date, slice]] = []
        n = len(self.ts)
        if n == 0:
            return out
        days = (self.ts + utc_offset_min * 60) // 86400
        start = 0
        for i in range(1, n + 1):
            if i == n or days[i] != days[start]:
                out.append((local_day(int(self.ts[start]), utc_offset_min),
                            slice(start, i)))
                start = i
        return out

    def to_day_trajectories(self, utc_offset_min: int = 0) -> List[DayTrajectory]:
        records = self.to_records()
        return [
            DayTrajectory(self.device_id, day, tuple(records[sl]))
            for day, sl in self.day_slices(utc_offset_min)
        ]


@dataclass
class StayInfo:
    """A stay plus the indices of its member records (may be empty when the
    stay came from a record-less source such as the integrator)."""

    lat: float
    lon: float
    start: int
    end: int
    record_idx: np.ndarray
    source: StaySource

    @property
    def duration_min(self) -> float:
        return (self.end - self.start) / 60.0

    @property
    def record_count(self) -> int:
        return max(1, len(self.record_idx))


@dataclass
class StaySet:
    """A user's records together with the stays inferred over them."""

    user: UserRecords
    stays: List[StayInfo] = field(default_factory=list)

    @property
    def device_id(self) -> str:
        return self.user.device_id

    def stay_id_per_record(self) -> np.ndarray:
        ids = np.full(len(self.user), -1, dtype=np.int64)
        for sid, stay in enumerate(self.stays):
            ids[stay.record_idx] = sid
        return ids

    def to_stays(self) -> List[Stay]:
        return [
            Stay.from_times(s.lat, s.lon, s.start, s.end, s.record_count,
                            s.source, self.device_id)
            for s in self.stays
        ]

    def to_labeled(self) -> List[LabeledRecord]:
        records = self.user.to_records()
        ids = self.stay_id_per_record()
        out = []
        for i, rec in enumerate(records):
            sid = ids[i]
            if sid < 0:
                out.append(LabeledRecord(rec))
            else:
                stay = self.stays[sid]
                out.append(LabeledRecord(rec, stay.lat, stay.lon, stay.duration_min))
        return out


def labeled_from_intervals(user: UserRecords, stays: Sequence[Stay]) -> List[LabeledRecord]:
    """Label records by the stay interval covering their timestamp.

    Used for integrated outputs where per-record membership was lost in
    merging; the first covering stay (by start time) wins.
    """
    records = user.to_records()
    ordered = sorted(stays, key=lambda s: (s.start, s.end))
    out = []
    for rec in records:
        hit = next((s for s in ordered if s.start <= rec.timestamp <= s.end), None)
        if hit is None:
            out.append(LabeledRecord(rec))
        else:
            out.append(LabeledRecord(rec, hit.centroid_lat, hit.centroid_lon,
                                     hit.duration_min))
    return out


def stayset_from_stays(user: UserRecords, stays: Sequence[Stay]) -> StaySet:
    """Rebuild a StaySet from plain stays, re-attaching member records by
    time interval."""
    infos = []
    for s in sorted(stays, key=lambda x: (x.start, x.end)):
        idx = np.nonzero((user.ts >= s.start) & (user.ts <= s.end))[0]
        infos.append(StayInfo(s.centroid_lat, s.centroid_lon, s.start, s.end,
                              idx, StaySource(s.source)))
    return StaySet(user=user, stays=infos)
