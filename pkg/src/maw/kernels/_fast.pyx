# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; arithmetic mirrors _pure.py operation for operation."""

from libc.math cimport atan2, cos, sin, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double EARTH_RADIUS_KM = 6371.0088
cdef double DEG2RAD = 0.017453292519943295
cdef double INF = float("inf")


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) nogil:
    cdef double p1 = lat1 * DEG2RAD
    cdef double p2 = lat2 * DEG2RAD
    cdef double dphi = (lat2 - lat1) * DEG2RAD
    cdef double dlam = (lon2 - lon1) * DEG2RAD
    cdef double sp = sin(dphi * 0.5)
    cdef double sl = sin(dlam * 0.5)
    cdef double a = sp * sp + cos(p1) * cos(p2) * sl * sl
    return 2.0 * EARTH_RADIUS_KM * atan2(sqrt(a), sqrt(1.0 - a))


def haversine_km(double lat1, double lon1, double lat2, double lon2):
    """Great-circle distance in km between two lat/lon points (degrees)."""
    return _hav(lat1, lon1, lat2, lon2)


def trace_segment_labels(ts, lat, lon, double dist_km, double dur_min):
    """Greedy leftmost-maximal segmentation; see _pure.trace_segment_labels."""
    cdef cnp.int64_t[::1] tsv = np.ascontiguousarray(ts, dtype=np.int64)
    cdef double[::1] latv = np.ascontiguousarray(lat, dtype=np.float64)
    cdef double[::1] lonv = np.ascontiguousarray(lon, dtype=np.float64)
    cdef Py_ssize_t n = tsv.shape[0]
    out = np.full(n, -1, dtype=np.int32)
    cdef cnp.int32_t[::1] labels = out
    cdef double dur_s = dur_min * 60.0
    cdef Py_ssize_t i = 0, j, k, m
    cdef int sid = 0
    cdef bint ok
    with nogil:
        while i < n:
            j = i
            while j + 1 < n:
                ok = True
                for k in range(i, j + 1):
                    if _hav(latv[k], lonv[k], latv[j + 1], lonv[j + 1]) > dist_km:
                        ok = False
                        break
                if not ok:
                    break
                j += 1
            if tsv[j] - tsv[i] >= dur_s:
                for m in range(i, j + 1):
                    labels[m] = sid
                sid += 1
                i = j + 1
            else:
                i += 1
    return out


def incremental_pass(lat, lon, double dist_km):
    """One-pass nearest-center clustering; see _pure.incremental_pass."""
    cdef double[::1] latv = np.ascontiguousarray(lat, dtype=np.float64)
    cdef double[::1] lonv = np.ascontiguousarray(lon, dtype=np.float64)
    cdef Py_ssize_t n = latv.shape[0]
    out_labels = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] labels = out_labels
    clat_arr = np.empty(n, dtype=np.float64)
    clon_arr = np.empty(n, dtype=np.float64)
    sum_lat_arr = np.empty(n, dtype=np.float64)
    sum_lon_arr = np.empty(n, dtype=np.float64)
    cnt_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] clat = clat_arr
    cdef double[::1] clon = clon_arr
    cdef double[::1] csum_lat = sum_lat_arr
    cdef double[::1] csum_lon = sum_lon_arr
    cdef cnp.int64_t[::1] ccnt = cnt_arr
    cdef Py_ssize_t i, c, k = 0
    cdef Py_ssize_t best
    cdef double d, best_d
    with nogil:
        for i in range(n):
            best = -1
            best_d = INF
            for c in range(k):
                d = _hav(latv[i], lonv[i], clat[c], clon[c])
                if d < best_d:
                    best_d = d
                    best = c
            if best >= 0 and best_d < dist_km:
                csum_lat[best] += latv[i]
                csum_lon[best] += lonv[i]
                ccnt[best] += 1
                clat[best] = csum_lat[best] / ccnt[best]
                clon[best] = csum_lon[best] / ccnt[best]
                labels[i] = <cnp.int32_t> best
            else:
                clat[k] = latv[i]
                clon[k] = lonv[i]
                csum_lat[k] = latv[i]
                csum_lon[k] = lonv[i]
                ccnt[k] = 1
                labels[i] = <cnp.int32_t> k
                k += 1
    return out_labels, clat_arr[:k].copy(), clon_arr[:k].copy()


def lloyd_refine(lat, lon, clat, clon, double tol_km=1e-6, int max_iter=100):
    """Lloyd iterations seeded at the given centers; see _pure.lloyd_refine."""
    cdef double[::1] latv = np.ascontiguousarray(lat, dtype=np.float64)
    cdef double[::1] lonv = np.ascontiguousarray(lon, dtype=np.float64)
    cdef Py_ssize_t n = latv.shape[0]
    centers_lat = np.asarray(clat, dtype=np.float64).copy()
    centers_lon = np.asarray(clon, dtype=np.float64).copy()
    out_labels = np.zeros(n, dtype=np.int32)
    cdef cnp.int32_t[::1] labels = out_labels
    wss_history = []
    if n == 0 or centers_lat.shape[0] == 0:
        return out_labels, centers_lat, centers_lon, wss_history

    cdef double[::1] cla, clo, slat, slon, nla, nlo
    cdef cnp.int64_t[::1] cn
    cdef Py_ssize_t it, i, c, k, nk, out
    cdef Py_ssize_t best
    cdef double d, best_d, wss, moved
    cdef bint dropped

    for it in range(max_iter):
        cla = centers_lat
        clo = centers_lon
        k = cla.shape[0]
        wss = 0.0
        for i in range(n):
            best = 0
            best_d = _hav(latv[i], lonv[i], cla[0], clo[0])
            for c in range(1, k):
                d = _hav(latv[i], lonv[i], cla[c], clo[c])
                if d < best_d:
                    best_d = d
                    best = c
            labels[i] = <cnp.int32_t> best
            wss += best_d * best_d
        wss_history.append(wss)

        sum_lat = np.zeros(k, dtype=np.float64)
        sum_lon = np.zeros(k, dtype=np.float64)
        cnt = np.zeros(k, dtype=np.int64)
        slat = sum_lat
        slon = sum_lon
        cn = cnt
        for i in range(n):
            c = labels[i]
            slat[c] += latv[i]
            slon[c] += lonv[i]
            cn[c] += 1
        keep = [c for c in range(k) if cn[c] > 0]
        nk = len(keep)
        new_lat = np.empty(nk, dtype=np.float64)
        new_lon = np.empty(nk, dtype=np.float64)
        nla = new_lat
        nlo = new_lon
        moved = 0.0
        for out in range(nk):
            c = keep[out]
            nla[out] = slat[c] / cn[c]
            nlo[out] = slon[c] / cn[c]
            d = _hav(cla[c], clo[c], nla[out], nlo[out])
            if d > moved:
                moved = d
        dropped = nk < k
        centers_lat = new_lat
        centers_lon = new_lon
        if not dropped and moved <= tol_km:
            break

    cla = centers_lat
    clo = centers_lon
    k = cla.shape[0]
    for i in range(n):
        best = 0
        best_d = _hav(latv[i], lonv[i], cla[0], clo[0])
        for c in range(1, k):
            d = _hav(latv[i], lonv[i], cla[c], clo[c])
            if d < best_d:
                best_d = d
                best = c
        labels[i] = <cnp.int32_t> best
    return out_labels, centers_lat, centers_lon, wss_history
