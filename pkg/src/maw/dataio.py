"""CSV ingestion, the GPS/cellular accuracy split, and output serialization.

Records CSV contract (header required):
    device_id,timestamp,lat,lon,accuracy_m
Labeled CSV adds stay_lat,stay_lon,stay_duration_min (-1 sentinels);
stays CSV is device_id,centroid_lat,centroid_lon,start,end,duration_min,
record_count,source.  Output files are byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import RecordParseError
from .metrics import MobilityMetrics
from .model import DayTrajectory, LabeledRecord, Stay, StaySource
from .timeline import UserRecords

RECORDS_HEADER = ["device_id", "timestamp", "lat", "lon", "accuracy_m"]
LABELED_HEADER = RECORDS_HEADER + ["stay_lat", "stay_lon", "stay_duration_min"]
STAYS_HEADER = ["device_id", "centroid_lat", "centroid_lon", "start", "end",
                "duration_min", "record_count", "source"]
HISTOGRAM_HEADER = ["bin_index", "start_hhmm", "count"]


@dataclass(frozen=True)
class IngestConfig:
    accuracy_split_m: float = 100.0
    utc_offset_min: int = 0
    iso_timestamps: bool = False
    sort_policy: str = "stable"

    def __post_init__(self):
        if self.accuracy_split_m <= 0:
            raise ValueError("accuracy_split_m must be positive")


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_timestamp(raw: str, iso: bool) -> int:
    if iso:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    return int(raw)


def _parse_row(path, line_no: int, row: List[str], cfg: IngestConfig):
    if len(row) != 5:
        raise RecordParseError(path, line_no, f"expected 5 fields, got {len(row)}")
    device = row[0]
    try:
        ts = _parse_timestamp(row[1], cfg.iso_timestamps)
        lat = float(row[2])
        lon = float(row[3])
        acc = float(row[4])
    except ValueError as exc:
        raise RecordParseError(path, line_no, str(exc)) from None
    if not -90.0 <= lat <= 90.0:
        raise RecordParseError(path, line_no, f"latitude out of range: {lat}")
    if not -180.0 <= lon <= 180.0:
        raise RecordParseError(path, line_no, f"longitude out of range: {lon}")
    if acc < 0:
        raise RecordParseError(path, line_no, f"negative accuracy: {acc}")
    if ts < 0:
        raise RecordParseError(path, line_no, f"negative timestamp: {ts}")
    return device, ts, lat, lon, acc


def load_user_records(paths: Iterable, cfg: IngestConfig = IngestConfig()) -> Dict[str, UserRecords]:
    """Parse records CSVs into sorted, deduplicated per-user arrays.

    Duplicate (device, timestamp) rows keep the most accurate record.
    """
    rows: Dict[str, Dict[int, Tuple[int, float, float, float]]] = {}
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                continue
            if [h.strip() for h in header] != RECORDS_HEADER:
                raise RecordParseError(path, 1, f"bad header: {header}")
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                device, ts, lat, lon, acc = _parse_row(path, line_no, row, cfg)
                per_user = rows.setdefault(device, {})
                old = per_user.get(ts)
                if old is None or acc < old[3]:
                    per_user[ts] = (ts, lat, lon, acc)
    out: Dict[str, UserRecords] = {}
    for device in sorted(rows):
        entries = sorted(rows[device].values())
        out[device] = UserRecords(
            device,
            np.array([e[0] for e in entries], dtype=np.int64),
            np.array([e[1] for e in entries], dtype=np.float64),
            np.array([e[2] for e in entries], dtype=np.float64),
            np.array([e[3] for e in entries], dtype=np.float64),
        )
    return out


def read_records(paths: Iterable, cfg: IngestConfig = IngestConfig()) -> Dict[str, List[DayTrajectory]]:
    """Per-user day trajectories under the configured UTC offset."""
    return {
        device: user.to_day_trajectories(cfg.utc_offset_min)
        for device, user in load_user_records(paths, cfg).items()
    }


def split_by_accuracy(users: Mapping[str, UserRecords],
                      cfg: IngestConfig = IngestConfig()):
    """Partition records: accuracy strictly below the split is GPS, the
    rest cellular.  Users absent from a stream are omitted from it."""
    gps: Dict[str, UserRecords] = {}
    cellular: Dict[str, UserRecords] = {}
    for device, u in users.items():
        mask = u.accuracy < cfg.accuracy_split_m
        if mask.any():
            gps[device] = UserRecords(device, u.ts[mask], u.lat[mask],
                                      u.lon[mask], u.accuracy[mask])
        if (~mask).any():
            cellular[device] = UserRecords(device, u.ts[~mask], u.lat[~mask],
                                           u.lon[~mask], u.accuracy[~mask])
    return gps, cellular


def write_records_csv(users: Mapping[str, UserRecords], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORDS_HEADER)
        for device in sorted(users):
            u = users[device]
            for t, la, lo, ac in zip(u.ts, u.lat, u.lon, u.accuracy):
                w.writerow([device, int(t), _fmt(la), _fmt(lo), _fmt(ac)])


def write_stays_csv(stays_by_user: Mapping[str, Sequence[Stay]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STAYS_HEADER)
        for device in sorted(stays_by_user):
            for s in sorted(stays_by_user[device], key=lambda s: (s.start, s.end)):
                w.writerow([device, _fmt(s.centroid_lat), _fmt(s.centroid_lon),
                            s.start, s.end, _fmt(s.duration_min),
                            s.record_count, StaySource(s.source).value])


def read_stays_csv(path) -> Dict[str, List[Stay]]:
    out: Dict[str, List[Stay]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STAYS_HEADER:
            raise RecordParseError(path, 1, f"bad header: {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                stay = Stay(float(row[1]), float(row[2]), int(row[3]), int(row[4]),
                            float(row[5]), int(row[6]), StaySource(row[7]), row[0])
            except (ValueError, IndexError) as exc:
                raise RecordParseError(path, line_no, str(exc)) from None
            out.setdefault(row[0], []).append(stay)
    return out


def write_labeled_csv(labeled_by_user: Mapping[str, Sequence[LabeledRecord]],
                      path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABELED_HEADER)
        for device in sorted(labeled_by_user):
            for lr in labeled_by_user[device]:
                r = lr.record
                w.writerow([r.device_id, r.timestamp, _fmt(r.lat), _fmt(r.lon),
                            _fmt(r.accuracy),
                            "-1" if lr.is_transient else _fmt(lr.stay_lat),
                            "-1" if lr.is_transient else _fmt(lr.stay_lon),
                            "-1" if lr.is_transient else _fmt(lr.stay_duration_min)])


def read_labeled_csv(path) -> Dict[str, List[LabeledRecord]]:
    from .model import LocationRecord

    out: Dict[str, List[LabeledRecord]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELED_HEADER:
            raise RecordParseError(path, 1, f"bad header: {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            rec = LocationRecord(row[0], int(row[1]), float(row[2]), float(row[3]),
                                 float(row[4]))
            out.setdefault(row[0], []).append(
                LabeledRecord(rec, float(row[5]), float(row[6]), float(row[7])))
    return out


def write_histogram_csv(histogram: Sequence[int], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTOGRAM_HEADER)
        for b, count in enumerate(histogram):
            hh, mm = divmod(b * 30, 60)
            w.writerow([b, f"{hh:02d}{mm:02d}", int(count)])


def write_metrics_json(metrics: MobilityMetrics, path) -> None:
    payload = {
        "trips_per_person_day": metrics.trips_per_person_day,
        "rg_km_per_person_day": metrics.rg_km_per_person_day,
        "users_included": metrics.users_included,
        "departure_histogram": list(metrics.departure_histogram),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_outputs(results: Mapping[str, Tuple[Sequence[LabeledRecord], Sequence[Stay]]],
                  metrics: Optional[MobilityMetrics],
                  profile, out_dir) -> List[Path]:
    """Write the standard output bundle; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labeled = {d: lr for d, (lr, _) in results.items()}
    stays = {d: st for d, (_, st) in results.items()}
    written = []
    write_labeled_csv(labeled, out / "labeled.csv")
    written.append(out / "labeled.csv")
    write_stays_csv(stays, out / "stays.csv")
    written.append(out / "stays.csv")
    if metrics is not None:
        write_metrics_json(metrics, out / "metrics.json")
        write_histogram_csv(metrics.departure_histogram, out / "histogram.csv")
        written += [out / "metrics.json", out / "histogram.csv"]
    if profile is not None:
        with open(out / "profile.json", "w") as fh:
            json.dump(profile.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(out / "profile.json")
    return written
