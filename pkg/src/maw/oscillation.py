"""Oscillation correction via circular-event windows.

A window is a maximal run of at least three time-sorted items whose start
times all fall within the configured time window of the run's first item,
and which contains a circular event (a location sequence X..Y..X with
Y != X).  Within a flagged window the location with the largest total
dwell time across all of the user's days wins, and every other item's
location is rewritten to it.

Location equality is exact for stays; raw record coordinates are snapped
to 10 m to absorb jitter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .errors import UnsortedInputError
from .model import LocationRecord, Stay
from .timeline import StayInfo, StaySet, UserRecords

RECORD_SNAP_KM = 0.010


@dataclass(frozen=True)
class OscillationWindow:
    """A flagged run of items suspected of oscillation."""

    indices: Tuple[int, ...]
    circular_event_present: bool
    dwell_by_location: Dict[Tuple[float, float], float]  # seconds


def _snap_location_ids(lat: np.ndarray, lon: np.ndarray,
                       snap_km: float) -> Tuple[np.ndarray, List[Tuple[float, float]]]:
    """Assign a location id per point; a point reuses the first earlier
    location within snap_km, else founds a new one.  snap_km == 0 means
    exact coordinate equality."""
    n = len(lat)
    ids = np.empty(n, dtype=np.int64)
    reps: List[Tuple[float, float]] = []
    if snap_km == 0.0:
        seen: Dict[Tuple[float, float], int] = {}
        for i in range(n):
            key = (float(lat[i]), float(lon[i]))
            if key not in seen:
                seen[key] = len(reps)
                reps.append(key)
            ids[i] = seen[key]
        return ids, reps
    for i in range(n):
        assigned = -1
        for loc_id, (rla, rlo) in enumerate(reps):
            if kernels.haversine_km(float(lat[i]), float(lon[i]), rla, rlo) <= snap_km:
                assigned = loc_id
                break
        if assigned < 0:
            assigned = len(reps)
            reps.append((float(lat[i]), float(lon[i])))
        ids[i] = assigned
    return ids, reps


def _has_circular(locs: Sequence[int]) -> bool:
    last_seen: Dict[int, int] = {}
    for i, loc in enumerate(locs):
        if loc in last_seen:
            between = locs[last_seen[loc] + 1 : i]
            if any(b != loc for b in between):
                return True
        last_seen[loc] = i
    return False


def _scan_windows(starts: np.ndarray, loc_ids: np.ndarray,
                  window_min: float) -> List[Tuple[int, int]]:
    """Non-overlapping maximal runs (inclusive index pairs) that are
    flagged as oscillation windows."""
    window_s = window_min * 60.0
    n = len(starts)
    kept: List[Tuple[int, int]] = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and starts[j + 1] - starts[i] <= window_s:
            j += 1
        if j - i + 1 >= 3 and _has_circular(list(loc_ids[i : j + 1])):
            kept.append((i, j))
            i = j + 1
        else:
            i += 1
    return kept


def _record_dwell_seconds(ts: np.ndarray, loc_ids: np.ndarray, n_locs: int,
                          utc_offset_min: int) -> np.ndarray:
    """Total dwell per location: each record contributes the gap to the
    next record of the same local day; the day's last record contributes 0."""
    dwell = np.zeros(n_locs, dtype=np.float64)
    days = (ts + utc_offset_min * 60) // 86400
    for i in range(len(ts) - 1):
        if days[i + 1] == days[i]:
            dwell[loc_ids[i]] += ts[i + 1] - ts[i]
    return dwell


def _stay_dwell_seconds(starts: np.ndarray, ends: np.ndarray,
                        loc_ids: np.ndarray, n_locs: int) -> np.ndarray:
    dwell = np.zeros(n_locs, dtype=np.float64)
    for i in range(len(starts)):
        dwell[loc_ids[i]] += ends[i] - starts[i]
    return dwell


def _winner(window_ids: Sequence[int], dwell: np.ndarray,
            first_seen: np.ndarray) -> int:
    """Max-dwell location among the window's locations; ties go to the
    location observed earliest in the full history."""
    cands = sorted(set(int(x) for x in window_ids))
    best = cands[0]
    for c in cands[1:]:
        if dwell[c] > dwell[best] or (dwell[c] == dwell[best]
                                      and first_seen[c] < first_seen[best]):
            best = c
    return best


def _first_seen(loc_ids: np.ndarray, n_locs: int) -> np.ndarray:
    first = np.full(n_locs, np.iinfo(np.int64).max, dtype=np.int64)
    for i, loc in enumerate(loc_ids):
        if first[loc] == np.iinfo(np.int64).max:
            first[loc] = i
    return first


def _check_sorted(starts) -> None:
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise UnsortedInputError("items not time-sorted")


def _correct_to_fixed_point(starts, lat, lon, snap_km, window_min, dwell_mode,
                            ends=None, utc_offset_min=0):
    """Repeat scan-and-rewrite passes until no window changes anything.

    A single pass is not idempotent: rewriting a loser can complete a
    circular pattern inside a later (previously unflagged) window, so
    correction iterates to a fixed point.  Each pass only moves items
    onto existing winner locations, which converges quickly in practice;
    the cap is a safety net.
    """
    lat = lat.copy()
    lon = lon.copy()
    for _ in range(1000):
        loc_ids, reps, dwell, windows = _analyze(
            starts, lat, lon, snap_km, window_min, dwell_mode,
            ends=ends, utc_offset_min=utc_offset_min)
        first = _first_seen(loc_ids, len(reps))
        changed = False
        for i, j in windows:
            w = _winner(loc_ids[i : j + 1], dwell, first)
            rla, rlo = reps[w]
            for k in range(i, j + 1):
                if loc_ids[k] != w:
                    lat[k] = rla
                    lon[k] = rlo
                    changed = True
        if not changed:
            break
    return lat, lon


def run_osc_records(user: UserRecords, window_min: float,
                    utc_offset_min: int = 0) -> UserRecords:
    """Rewrite oscillating raw-record coordinates in place of the winner's."""
    user.check_sorted()
    lat, lon = _correct_to_fixed_point(user.ts, user.lat, user.lon,
                                       RECORD_SNAP_KM, window_min,
                                       dwell_mode="records",
                                       utc_offset_min=utc_offset_min)
    return UserRecords(user.device_id, user.ts, lat, lon, user.accuracy)


def run_osc_stays(ss: StaySet, window_min: float) -> StaySet:
    """Rewrite oscillating stay centroids; stay count and timing are kept."""
    starts = np.array([s.start for s in ss.stays], dtype=np.int64)
    ends = np.array([s.end for s in ss.stays], dtype=np.int64)
    lat = np.array([s.lat for s in ss.stays], dtype=np.float64)
    lon = np.array([s.lon for s in ss.stays], dtype=np.float64)
    _check_sorted(starts)
    new_lat, new_lon = _correct_to_fixed_point(starts, lat, lon, 0.0,
                                               window_min, dwell_mode="stays",
                                               ends=ends)
    new_stays = [
        StayInfo(float(new_lat[k]), float(new_lon[k]), s.start, s.end,
                 s.record_idx, s.source)
        for k, s in enumerate(ss.stays)
    ]
    return StaySet(user=ss.user, stays=new_stays)


def _analyze(starts, lat, lon, snap_km, window_min, dwell_mode,
             ends=None, utc_offset_min=0):
    loc_ids, reps = _snap_location_ids(lat, lon, snap_km)
    if dwell_mode == "records":
        dwell = _record_dwell_seconds(starts, loc_ids, len(reps), utc_offset_min)
    else:
        dwell = _stay_dwell_seconds(starts, ends, loc_ids, len(reps))
    windows = _scan_windows(starts, loc_ids, window_min)
    return loc_ids, reps, dwell, windows


Items = Union[Sequence[Stay], Sequence[LocationRecord]]


def _items_arrays(items: Items):
    if items and isinstance(items[0], Stay):
        starts = np.array([s.start for s in items], dtype=np.int64)
        ends = np.array([s.end for s in items], dtype=np.int64)
        lat = np.array([s.centroid_lat for s in items], dtype=np.float64)
        lon = np.array([s.centroid_lon for s in items], dtype=np.float64)
        return "stays", starts, ends, lat, lon
    starts = np.array([r.timestamp for r in items], dtype=np.int64)
    lat = np.array([r.lat for r in items], dtype=np.float64)
    lon = np.array([r.lon for r in items], dtype=np.float64)
    return "records", starts, None, lat, lon


def detect_oscillation_windows(items: Items, window_min: float,
                               utc_offset_min: int = 0) -> List[OscillationWindow]:
    """Flag non-overlapping circular-event windows over stays or records."""
    if not items:
        return []
    kind, starts, ends, lat, lon = _items_arrays(items)
    _check_sorted(starts)
    snap = 0.0 if kind == "stays" else RECORD_SNAP_KM
    loc_ids, reps, dwell, windows = _analyze(starts, lat, lon, snap, window_min,
                                             dwell_mode=kind, ends=ends,
                                             utc_offset_min=utc_offset_min)
    out = []
    for i, j in windows:
        locs = sorted(set(int(x) for x in loc_ids[i : j + 1]))
        out.append(OscillationWindow(
            indices=tuple(range(i, j + 1)),
            circular_event_present=True,
            dwell_by_location={reps[c]: float(dwell[c]) for c in locs},
        ))
    return out


def correct_oscillations(items: Items, window_min: float,
                         utc_offset_min: int = 0) -> List:
    """Rewrite the non-winning locations inside every flagged window.

    Returns items of the same type, count, order, and timestamps.
    """
    if not items:
        return list(items)
    kind, starts, ends, lat, lon = _items_arrays(items)
    _check_sorted(starts)
    snap = 0.0 if kind == "stays" else RECORD_SNAP_KM
    lat, lon = _correct_to_fixed_point(starts, lat, lon, snap, window_min,
                                       dwell_mode=kind, ends=ends,
                                       utc_offset_min=utc_offset_min)
    if kind == "stays":
        return [
            Stay.from_times(float(lat[k]), float(lon[k]), s.start, s.end,
                            s.record_count, s.source, s.device_id)
            for k, s in enumerate(items)
        ]
    return [
        LocationRecord(r.device_id, r.timestamp, float(lat[k]), float(lon[k]),
                       r.accuracy)
        for k, r in enumerate(items)
    ]
