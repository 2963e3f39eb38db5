"""Seed-deterministic synthetic trajectory corpora with ground truth.

Each user gets a small set of well-separated daily anchor locations;
every simulated day is a sequence of dwells at those anchors with
constant-speed travel in between.  Observations are emitted on a fixed
sampling interval with configurable per-class positional noise, and
ping-pong oscillation events (a single record jumping to a paired far
location and back) can be injected into dwells at a configurable rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .model import EARTH_RADIUS_KM, Stay, StaySource
from .timeline import UserRecords

DEG_PER_KM_LAT = 1.0 / 111.195  # spherical: 1 degree latitude per ~111.2 km


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_users: int = 10
    n_days: int = 3
    stays_per_day: int = 4
    dwell_min: float = 40.0          # mean dwell length, minutes
    dwell_jitter: float = 0.25       # +/- fraction of dwell_min
    speed_kmh: float = 30.0
    sample_interval_s: int = 60
    gps_fraction: float = 1.0        # probability a record is GPS-class
    gps_noise_m: float = 0.0
    cell_noise_m: float = 0.0
    osc_rate: float = 0.0            # probability a dwell gets one ping-pong
    tower_pair_km: float = 2.0
    lat0: float = 47.6
    lon0: float = -122.3
    region_km: float = 10.0
    anchor_min_sep_km: float = 1.5
    day_start_hour: float = 8.0

    def __post_init__(self):
        for name, v in (("gps_fraction", self.gps_fraction),
                        ("osc_rate", self.osc_rate)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name, v in (("gps_noise_m", self.gps_noise_m),
                        ("cell_noise_m", self.cell_noise_m)):
            if v < 0:
                raise ValueError(f"{name} must be >= 0")


def _deg_offsets(km_east: float, km_north: float, lat: float) -> Tuple[float, float]:
    dlat = km_north * DEG_PER_KM_LAT
    dlon = km_east * DEG_PER_KM_LAT / np.cos(np.radians(lat))
    return dlat, dlon


def _draw_anchors(rng: np.random.Generator, cfg: SynthConfig) -> List[Tuple[float, float]]:
    """Rejection-sample anchor locations at least anchor_min_sep_km apart."""
    anchors: List[Tuple[float, float]] = []
    while len(anchors) < cfg.stays_per_day:
        east = rng.uniform(-cfg.region_km, cfg.region_km)
        north = rng.uniform(-cfg.region_km, cfg.region_km)
        dlat, dlon = _deg_offsets(east, north, cfg.lat0)
        cand = (cfg.lat0 + dlat, cfg.lon0 + dlon)
        ok = all(
            np.hypot((cand[0] - a[0]) / DEG_PER_KM_LAT,
                     (cand[1] - a[1]) / DEG_PER_KM_LAT
                     * np.cos(np.radians(cfg.lat0))) >= cfg.anchor_min_sep_km
            for a in anchors)
        if ok:
            anchors.append(cand)
    return anchors


def _approx_km(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return float(np.hypot((a[0] - b[0]) / DEG_PER_KM_LAT,
                          (a[1] - b[1]) / DEG_PER_KM_LAT * np.cos(np.radians(a[0]))))


def generate(cfg: SynthConfig) -> Tuple[Dict[str, UserRecords], Dict[str, List[Stay]]]:
    """Generate (records per user, ground-truth stays per user)."""
    users: Dict[str, UserRecords] = {}
    truth: Dict[str, List[Stay]] = {}
    for uidx in range(cfg.n_users):
        device = f"u{uidx:05d}"
        rng = np.random.default_rng([cfg.seed, uidx])
        anchors = _draw_anchors(rng, cfg)
        ts_list: List[int] = []
        lat_list: List[float] = []
        lon_list: List[float] = []
        true_stays: List[Stay] = []

        for day in range(cfg.n_days):
            t = day * 86400 + int(cfg.day_start_hour * 3600)
            day_end = (day + 1) * 86400 - 1
            order = rng.permutation(cfg.stays_per_day)
            prev = None
            for a_i in order:
                loc = anchors[a_i]
                if prev is not None:
                    # Constant-speed travel, sampled on the same interval.
                    dist = _approx_km(prev, loc)
                    travel_s = int(dist / cfg.speed_kmh * 3600)
                    n_steps = travel_s // cfg.sample_interval_s
                    for step in range(1, n_steps + 1):
                        frac = step * cfg.sample_interval_s / max(travel_s, 1)
                        if frac >= 1.0:
                            break
                        tt = t + step * cfg.sample_interval_s
                        if tt > day_end:
                            break
                        ts_list.append(tt)
                        lat_list.append(prev[0] + (loc[0] - prev[0]) * frac)
                        lon_list.append(prev[1] + (loc[1] - prev[1]) * frac)
                    t += travel_s
                if t > day_end:
                    break
                dwell_s = int(cfg.dwell_min * 60
                              * rng.uniform(1 - cfg.dwell_jitter,
                                            1 + cfg.dwell_jitter))
                dwell_end = min(t + dwell_s, day_end)
                n_samples = (dwell_end - t) // cfg.sample_interval_s + 1
                ping_at = -1
                if cfg.osc_rate > 0 and rng.random() < cfg.osc_rate and n_samples >= 4:
                    ping_at = int(n_samples // 2)
                count = 0
                for k in range(n_samples):
                    tt = t + k * cfg.sample_interval_s
                    ts_list.append(tt)
                    lat_list.append(loc[0])
                    lon_list.append(loc[1])
                    count += 1
                    if k == ping_at:
                        # A single far ping a couple of seconds later.
                        dlat, dlon = _deg_offsets(cfg.tower_pair_km, 0.0, loc[0])
                        ts_list.append(tt + 2)
                        lat_list.append(loc[0] + dlat)
                        lon_list.append(loc[1] + dlon)
                true_stays.append(Stay.from_times(
                    loc[0], loc[1], t, t + (n_samples - 1) * cfg.sample_interval_s,
                    count, StaySource.GPS, device))
                t = dwell_end + cfg.sample_interval_s
                prev = loc
                if t > day_end:
                    break

        n = len(ts_list)
        lat = np.array(lat_list, dtype=np.float64)
        lon = np.array(lon_list, dtype=np.float64)
        ts = np.array(ts_list, dtype=np.int64)
        # Class assignment, accuracy, and positional noise.
        is_gps = rng.random(n) < cfg.gps_fraction
        acc = np.where(is_gps, rng.uniform(5.0, 95.0, n), rng.uniform(120.0, 900.0, n))
        sigma_m = np.where(is_gps, cfg.gps_noise_m, cfg.cell_noise_m)
        if np.any(sigma_m > 0):
            east = rng.normal(0.0, 1.0, n) * sigma_m / 1000.0
            north = rng.normal(0.0, 1.0, n) * sigma_m / 1000.0
            lat = lat + north * DEG_PER_KM_LAT
            lon = lon + east * DEG_PER_KM_LAT / np.cos(np.radians(cfg.lat0))
        order = np.argsort(ts, kind="stable")
        users[device] = UserRecords(device, ts[order], lat[order], lon[order],
                                    acc[order])
        truth[device] = true_stays
    return users, truth
