"""Stay integration: fusing higher-uncertainty (cellular) stays into
lower-uncertainty (GPS) stays, followed by the fixed four-stage tail.

The merge/keep/split rule table is a pinned interpretation and each rule
can be switched off via IntegrationRules, in which case the cellular stay
is kept unchanged instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence

from .errors import DeviceMismatchError
from .model import ChangePoints, Stay, StaySource, haversine_km
from .oscillation import correct_oscillations
from .staydetect import filter_stays_by_duration, incremental_cluster_stays

SPATIAL_THRESHOLD_KM = 0.2


class TemporalKind(str, Enum):
    SEPARATE = "SEPARATE"
    CONTAINED = "CONTAINED"
    INTERSECTING = "INTERSECTING"


@dataclass(frozen=True)
class TemporalRelation:
    kind: TemporalKind
    container: Optional[str] = None  # "a" or "b" when kind is CONTAINED


class SpatialRelation(str, Enum):
    CONTIGUOUS = "CONTIGUOUS"
    NOT_CONTIGUOUS = "NOT_CONTIGUOUS"


def classify_temporal(a: Stay, b: Stay) -> TemporalRelation:
    """Interval relation of two stays on inclusive [start, end] intervals."""
    if a.end < b.start or b.end < a.start:
        return TemporalRelation(TemporalKind.SEPARATE)
    if a.start <= b.start and b.end <= a.end:
        return TemporalRelation(TemporalKind.CONTAINED, container="a")
    if b.start <= a.start and a.end <= b.end:
        return TemporalRelation(TemporalKind.CONTAINED, container="b")
    return TemporalRelation(TemporalKind.INTERSECTING)


def classify_spatial(a: Stay, b: Stay,
                     threshold_km: float = SPATIAL_THRESHOLD_KM) -> SpatialRelation:
    d = haversine_km(a.centroid, b.centroid)
    return (SpatialRelation.CONTIGUOUS if d <= threshold_km
            else SpatialRelation.NOT_CONTIGUOUS)


@dataclass(frozen=True)
class IntegrationRules:
    """Per-rule switches; a disabled rule keeps the cellular stay as-is."""

    merge_contained_contiguous: bool = True
    drop_contained_noncontiguous: bool = True
    merge_intersecting_contiguous: bool = True
    split_intersecting_noncontiguous: bool = True


def _merged(gps: Stay, start: int, end: int, extra_records: int) -> Stay:
    return Stay.from_times(gps.centroid_lat, gps.centroid_lon, start, end,
                           gps.record_count + extra_records, gps.source,
                           gps.device_id)


def _retimed(stay: Stay, start: int, end: int) -> Stay:
    return Stay.from_times(stay.centroid_lat, stay.centroid_lon, start, end,
                           stay.record_count, stay.source, stay.device_id)


def fuse_stays(gps: Sequence[Stay], cellular: Sequence[Stay], cp: ChangePoints,
               rules: IntegrationRules = IntegrationRules()) -> List[Stay]:
    """Apply the pairwise merge/keep/split rules, cellular stays processed
    in start-time order against the evolving GPS stay set."""
    devices = {s.device_id for s in gps} | {s.device_id for s in cellular}
    if len(devices) > 1:
        raise DeviceMismatchError(f"stays from multiple devices: {sorted(devices)}")

    merged: List[Stay] = sorted(gps, key=lambda s: (s.start, s.end))
    kept_cellular: List[Stay] = []
    for cell in sorted(cellular, key=lambda s: (s.start, s.end)):
        pieces = [cell]
        for gi, g in enumerate(merged):
            next_pieces: List[Stay] = []
            for piece in pieces:
                rel = classify_temporal(g, piece)
                if rel.kind is TemporalKind.SEPARATE:
                    next_pieces.append(piece)
                    continue
                spatial = classify_spatial(g, piece)
                if rel.kind is TemporalKind.CONTAINED and rel.container == "a":
                    # Cellular inside GPS: absorb or drop; GPS trusted.
                    if spatial is SpatialRelation.CONTIGUOUS:
                        if rules.merge_contained_contiguous:
                            merged[gi] = _merged(g, g.start, g.end,
                                                 piece.record_count)
                            g = merged[gi]
                        else:
                            next_pieces.append(piece)
                    elif not rules.drop_contained_noncontiguous:
                        next_pieces.append(piece)
                    continue
                # Partial overlap, or GPS contained in cellular.
                if spatial is SpatialRelation.CONTIGUOUS:
                    if rules.merge_intersecting_contiguous:
                        start = min(g.start, piece.start)
                        end = max(g.end, piece.end)
                        # Clip the extension so GPS stays stay disjoint.
                        if gi > 0:
                            start = max(start, merged[gi - 1].end)
                        if gi + 1 < len(merged):
                            end = min(end, merged[gi + 1].start)
                        merged[gi] = _merged(g, start, end, piece.record_count)
                        g = merged[gi]
                    else:
                        next_pieces.append(piece)
                else:
                    if rules.split_intersecting_noncontiguous:
                        # Keep the non-overlapping portion(s) of the
                        # cellular stay, each only if long enough.
                        if piece.start < g.start:
                            left = _retimed(piece, piece.start, g.start)
                            if left.duration_min >= cp.duration_min_threshold:
                                next_pieces.append(left)
                        if piece.end > g.end:
                            right = _retimed(piece, g.end, piece.end)
                            if right.duration_min >= cp.duration_min_threshold:
                                next_pieces.append(right)
                    else:
                        next_pieces.append(piece)
            pieces = next_pieces
            if not pieces:
                break
        kept_cellular.extend(pieces)
    out = merged + kept_cellular
    out.sort(key=lambda s: (s.start, s.end))
    return out


def integration_tail(stays: Sequence[Stay], cp: ChangePoints) -> List[Stay]:
    """Fixed post-fusion sequence: oscillation correction, duration filter,
    incremental clustering of stays (0.2 km), duration filter."""
    tail_cp = ChangePoints(cp.duration_min_threshold, SPATIAL_THRESHOLD_KM,
                           cp.osc_window_min, override=True)
    ordered = sorted(stays, key=lambda s: (s.start, s.end))
    ordered = correct_oscillations(ordered, cp.osc_window_min)
    ordered = filter_stays_by_duration(ordered, cp.duration_min_threshold)
    ordered = incremental_cluster_stays(ordered, tail_cp)
    ordered = filter_stays_by_duration(ordered, cp.duration_min_threshold)
    return ordered


def integrate_stays(gps: Sequence[Stay], cellular: Sequence[Stay],
                    cp: ChangePoints,
                    rules: IntegrationRules = IntegrationRules()) -> List[Stay]:
    """Fuse cellular stays into GPS stays, then run the fixed tail."""
    fused = fuse_stays(gps, cellular, cp, rules)
    return integration_tail(fused, cp)
