"""Stay detection: trace segmentation, incremental clustering, and the
stay-duration filter.

Boundary semantics, pinned deliberately: the trace-segmentation pairwise
check is inclusive (<= distance threshold) while incremental joining is
strict (< distance threshold).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from . import kernels
from .errors import EmptyInputError, UnsortedInputError
from .model import (ChangePoints, DayTrajectory, LabeledRecord,
                    LocationRecord, Stay, StaySource)
from .timeline import StayInfo, StaySet, UserRecords

KMEANS_TOL_KM = 1e-6
KMEANS_MAX_ITER = 100


def _stays_from_labels(user: UserRecords, labels: np.ndarray, base: slice,
                       source: StaySource) -> List[StayInfo]:
    """Build StayInfo entries from per-record stay labels over base indices.

    Labels identify stays directly (trace segmentation): members are all
    records sharing a label, centroid is their mean.
    """
    stays = []
    off = base.start
    for sid in range(labels.max() + 1 if len(labels) else 0):
        idx = np.nonzero(labels == sid)[0] + off
        if len(idx) == 0:
            continue
        stays.append(StayInfo(
            lat=float(user.lat[idx].mean()),
            lon=float(user.lon[idx].mean()),
            start=int(user.ts[idx[0]]),
            end=int(user.ts[idx[-1]]),
            record_idx=idx,
            source=source,
        ))
    return stays


def run_trace_segmentation(user: UserRecords, cp: ChangePoints,
                           utc_offset_min: int = 0,
                           source: StaySource = StaySource.GPS) -> StaySet:
    """Trace segmentation clustering applied day by day to one user."""
    user.check_sorted()
    stays: List[StayInfo] = []
    for _, sl in user.day_slices(utc_offset_min):
        labels = kernels.trace_segment_labels(
            user.ts[sl], user.lat[sl], user.lon[sl],
            cp.distance_km_threshold, cp.duration_min_threshold)
        stays.extend(_stays_from_labels(user, labels, sl, source))
    return StaySet(user=user, stays=stays)


def trace_segmentation(day: DayTrajectory, cp: ChangePoints) -> List[LabeledRecord]:
    """Greedy leftmost-maximal segmentation of a single day's records."""
    if not day.records:
        return []
    user = UserRecords.from_records(day.records)
    labels = kernels.trace_segment_labels(
        user.ts, user.lat, user.lon,
        cp.distance_km_threshold, cp.duration_min_threshold)
    stays = _stays_from_labels(user, labels, slice(0, len(user)), StaySource.GPS)
    return StaySet(user=user, stays=stays).to_labeled()


@dataclass
class ClusterAssignment:
    """Per-point cluster labels plus the cluster centers."""

    point_lat: np.ndarray
    point_lon: np.ndarray
    labels: np.ndarray       # int32, cluster index per point
    center_lat: np.ndarray
    center_lon: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.center_lat)

    def members(self, c: int) -> np.ndarray:
        return np.nonzero(self.labels == c)[0]


def incremental_cluster_records(records: Sequence[LocationRecord],
                                cp: ChangePoints) -> ClusterAssignment:
    """Single-pass nearest-center clustering of time-sorted records."""
    if not records:
        raise EmptyInputError("incremental clustering of empty record list")
    ts = [r.timestamp for r in records]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise UnsortedInputError("records not time-sorted")
    lat = np.array([r.lat for r in records], dtype=np.float64)
    lon = np.array([r.lon for r in records], dtype=np.float64)
    labels, clat, clon = kernels.incremental_pass(lat, lon, cp.distance_km_threshold)
    return ClusterAssignment(lat, lon, labels, clat, clon)


def kmeans_refine(assignment: ClusterAssignment) -> ClusterAssignment:
    """Lloyd refinement seeded at the incremental centers.

    Converges when no center moves more than 1e-6 km (or at 100
    iterations); empty clusters are dropped.
    """
    labels, clat, clon, _ = kernels.lloyd_refine(
        assignment.point_lat, assignment.point_lon,
        assignment.center_lat, assignment.center_lon,
        tol_km=KMEANS_TOL_KM, max_iter=KMEANS_MAX_ITER)
    return ClusterAssignment(assignment.point_lat, assignment.point_lon,
                             labels, clat, clon)


def _cluster_points(lat: np.ndarray, lon: np.ndarray, distance_km: float):
    """Incremental pass followed by Lloyd refinement; returns (labels, centers)."""
    labels, clat, clon = kernels.incremental_pass(lat, lon, distance_km)
    labels, clat, clon, _ = kernels.lloyd_refine(
        lat, lon, clat, clon, tol_km=KMEANS_TOL_KM, max_iter=KMEANS_MAX_ITER)
    return labels, clat, clon


def run_incremental_records(user: UserRecords, cp: ChangePoints,
                            source: StaySource = StaySource.CELLULAR) -> StaySet:
    """Incremental clustering (plus k-means refinement) of raw records.

    Cluster centers become stay locations; a stay is a maximal run of
    consecutive records assigned to the same cluster.
    """
    user.check_sorted()
    if len(user) == 0:
        return StaySet(user=user, stays=[])
    labels, clat, clon = _cluster_points(user.lat, user.lon,
                                         cp.distance_km_threshold)
    stays: List[StayInfo] = []
    n = len(user)
    start = 0
    for i in range(1, n + 1):
        if i == n or labels[i] != labels[start]:
            c = labels[start]
            idx = np.arange(start, i)
            stays.append(StayInfo(
                lat=float(clat[c]), lon=float(clon[c]),
                start=int(user.ts[start]), end=int(user.ts[i - 1]),
                record_idx=idx, source=source))
            start = i
    return StaySet(user=user, stays=stays)


def incremental_cluster_stays(stays: Sequence[Stay], cp: ChangePoints) -> List[Stay]:
    """Relabel stay centroids by clustering them like location records.

    Stays shorter than the duration threshold are removed; survivors keep
    their count and timing, only the centroid label changes.
    """
    kept = [s for s in stays if s.duration_min >= cp.duration_min_threshold]
    if not kept:
        return []
    lat = np.array([s.centroid_lat for s in kept], dtype=np.float64)
    lon = np.array([s.centroid_lon for s in kept], dtype=np.float64)
    labels, clat, clon = _cluster_points(lat, lon, cp.distance_km_threshold)
    out = []
    for s, c in zip(kept, labels):
        out.append(Stay.from_times(float(clat[c]), float(clon[c]), s.start, s.end,
                                   s.record_count, s.source, s.device_id))
    return out


def run_incremental_stays(ss: StaySet, cp: ChangePoints) -> StaySet:
    """StaySet version of incremental_cluster_stays (records of removed
    stays become transient)."""
    kept = [s for s in ss.stays if s.duration_min >= cp.duration_min_threshold]
    if not kept:
        return StaySet(user=ss.user, stays=[])
    lat = np.array([s.lat for s in kept], dtype=np.float64)
    lon = np.array([s.lon for s in kept], dtype=np.float64)
    labels, clat, clon = _cluster_points(lat, lon, cp.distance_km_threshold)
    out = []
    for s, c in zip(kept, labels):
        out.append(StayInfo(float(clat[c]), float(clon[c]), s.start, s.end,
                            s.record_idx, s.source))
    return StaySet(user=ss.user, stays=out)


def run_stay_duration(ss: StaySet, cp: ChangePoints) -> StaySet:
    """Recompute stay durations from member records and drop short stays."""
    out = []
    for s in ss.stays:
        if len(s.record_idx):
            start = int(ss.user.ts[s.record_idx[0]])
            end = int(ss.user.ts[s.record_idx[-1]])
        else:
            start, end = s.start, s.end
        if (end - start) / 60.0 >= cp.duration_min_threshold:
            out.append(StayInfo(s.lat, s.lon, start, end, s.record_idx, s.source))
    return StaySet(user=ss.user, stays=out)


def stay_duration_filter(labeled: Sequence[LabeledRecord],
                         cp: ChangePoints) -> List[LabeledRecord]:
    """Recompute durations over consecutive same-label runs; demote runs
    shorter than the duration threshold to transient."""
    ts = [lr.record.timestamp for lr in labeled]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise UnsortedInputError("labeled records not time-sorted")
    out: List[LabeledRecord] = []
    n = len(labeled)
    i = 0
    while i < n:
        if labeled[i].is_transient:
            out.append(labeled[i])
            i += 1
            continue
        j = i
        while (j + 1 < n and not labeled[j + 1].is_transient
               and labeled[j + 1].stay_lat == labeled[i].stay_lat
               and labeled[j + 1].stay_lon == labeled[i].stay_lon):
            j += 1
        duration = (ts[j] - ts[i]) / 60.0
        for k in range(i, j + 1):
            if duration >= cp.duration_min_threshold:
                out.append(LabeledRecord(labeled[k].record, labeled[k].stay_lat,
                                         labeled[k].stay_lon, duration))
            else:
                out.append(LabeledRecord(labeled[k].record))
        i = j + 1
    return out


def filter_stays_by_duration(stays: Sequence[Stay], duration_min: float) -> List[Stay]:
    """Stay-level duration filter (durations implied by start/end)."""
    return [s for s in stays if s.duration_min >= duration_min]
