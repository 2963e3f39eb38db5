"""Pure-Python kernels.

These are the fallback implementations used when the compiled extension
is unavailable (or when MAW_PURE_PYTHON is set).  The compiled twin in
``_fast.pyx`` performs the same floating-point operations in the same
order, so both backends produce identical results.
"""

from math import atan2, cos, sin, sqrt

import numpy as np

EARTH_RADIUS_KM = 6371.0088
DEG2RAD = 0.017453292519943295


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km between two lat/lon points (degrees)."""
    p1 = lat1 * DEG2RAD
    p2 = lat2 * DEG2RAD
    dphi = (lat2 - lat1) * DEG2RAD
    dlam = (lon2 - lon1) * DEG2RAD
    sp = sin(dphi * 0.5)
    sl = sin(dlam * 0.5)
    a = sp * sp + cos(p1) * cos(p2) * sl * sl
    return 2.0 * EARTH_RADIUS_KM * atan2(sqrt(a), sqrt(1.0 - a))


def trace_segment_labels(ts, lat, lon, dist_km, dur_min):
    """Greedy leftmost-maximal segmentation of one day of records.

    Anchors at the first unassigned record and extends the run while every
    pairwise distance stays <= dist_km.  A maximal run spanning at least
    dur_min minutes becomes a stay; otherwise only the anchor record is
    marked transient and the scan restarts one record later.

    Returns an int32 label per record (stay index, or -1 for transient).
    """
    n = len(ts)
    labels = np.full(n, -1, dtype=np.int32)
    dur_s = dur_min * 60.0
    i = 0
    sid = 0
    while i < n:
        j = i
        while j + 1 < n:
            ok = True
            for k in range(i, j + 1):
                if haversine_km(lat[k], lon[k], lat[j + 1], lon[j + 1]) > dist_km:
                    ok = False
                    break
            if not ok:
                break
            j += 1
        if ts[j] - ts[i] >= dur_s:
            labels[i : j + 1] = sid
            sid += 1
            i = j + 1
        else:
            i += 1
    return labels


def incremental_pass(lat, lon, dist_km):
    """One-pass nearest-center clustering with running-mean updates.

    A point joins the nearest existing center when strictly closer than
    dist_km, otherwise it seeds a new cluster.  Returns (labels, center
    latitudes, center longitudes).
    """
    n = len(lat)
    labels = np.empty(n, dtype=np.int32)
    clat = np.empty(n, dtype=np.float64)
    clon = np.empty(n, dtype=np.float64)
    csum_lat = np.empty(n, dtype=np.float64)
    csum_lon = np.empty(n, dtype=np.float64)
    ccnt = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        best = -1
        best_d = float("inf")
        for c in range(k):
            d = haversine_km(lat[i], lon[i], clat[c], clon[c])
            if d < best_d:
                best_d = d
                best = c
        if best >= 0 and best_d < dist_km:
            csum_lat[best] += lat[i]
            csum_lon[best] += lon[i]
            ccnt[best] += 1
            clat[best] = csum_lat[best] / ccnt[best]
            clon[best] = csum_lon[best] / ccnt[best]
            labels[i] = best
        else:
            clat[k] = lat[i]
            clon[k] = lon[i]
            csum_lat[k] = lat[i]
            csum_lon[k] = lon[i]
            ccnt[k] = 1
            labels[i] = k
            k += 1
    return labels, clat[:k].copy(), clon[:k].copy()


def lloyd_refine(lat, lon, clat, clon, tol_km=1e-6, max_iter=100):
    """Lloyd iterations seeded at the given centers.

    Points are reassigned to the nearest center (first minimum wins) and
    centers are recomputed as arithmetic means; empty clusters are dropped.
    Stops when no surviving center moved more than tol_km, or after
    max_iter iterations.

    Returns (labels, center_lats, center_lons, wss_history) where
    wss_history holds the within-cluster sum of squared distances recorded
    at each assignment step.
    """
    n = len(lat)
    clat = np.asarray(clat, dtype=np.float64).copy()
    clon = np.asarray(clon, dtype=np.float64).copy()
    labels = np.zeros(n, dtype=np.int32)
    wss_history = []
    if n == 0 or len(clat) == 0:
        return labels, clat, clon, wss_history
    for _ in range(max_iter):
        k = len(clat)
        wss = 0.0
        for i in range(n):
            best = 0
            best_d = haversine_km(lat[i], lon[i], clat[0], clon[0])
            for c in range(1, k):
                d = haversine_km(lat[i], lon[i], clat[c], clon[c])
                if d < best_d:
                    best_d = d
                    best = c
            labels[i] = best
            wss += best_d * best_d
        wss_history.append(wss)

        sum_lat = np.zeros(k, dtype=np.float64)
        sum_lon = np.zeros(k, dtype=np.float64)
        cnt = np.zeros(k, dtype=np.int64)
        for i in range(n):
            c = labels[i]
            sum_lat[c] += lat[i]
            sum_lon[c] += lon[i]
            cnt[c] += 1
        keep = [c for c in range(k) if cnt[c] > 0]
        moved = 0.0
        new_lat = np.empty(len(keep), dtype=np.float64)
        new_lon = np.empty(len(keep), dtype=np.float64)
        for out, c in enumerate(keep):
            new_lat[out] = sum_lat[c] / cnt[c]
            new_lon[out] = sum_lon[c] / cnt[c]
            d = haversine_km(clat[c], clon[c], new_lat[out], new_lon[out])
            if d > moved:
                moved = d
        dropped = len(keep) < k
        clat = new_lat
        clon = new_lon
        if not dropped and moved <= tol_km:
            break

    # Final assignment against the converged centers.
    k = len(clat)
    for i in range(n):
        best = 0
        best_d = haversine_km(lat[i], lon[i], clat[0], clon[0])
        for c in range(1, k):
            d = haversine_km(lat[i], lon[i], clat[c], clon[c])
            if d < best_d:
                best_d = d
                best = c
        labels[i] = best
    return labels, clat, clon, wss_history
