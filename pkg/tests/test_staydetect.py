"""Stay detection stages against hand traces and brute-force oracles."""

from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maw import kernels
from maw.errors import EmptyInputError, UnsortedInputError
from maw.model import ChangePoints, DayTrajectory, StaySource
from maw.staydetect import (incremental_cluster_records,
                            incremental_cluster_stays, kmeans_refine,
                            run_trace_segmentation, stay_duration_filter,
                            trace_segmentation)

from conftest import (make_records, make_stay, make_user,
                      oracle_haversine_km, oracle_trace_segments,
                      random_trajectory)


def _day(points, accuracy=10.0):
    return DayTrajectory("u", date(1970, 1, 1),
                         tuple(make_records("u", points, accuracy)))


class TestTraceSegmentation:
    def test_single_stationary_stay(self, cp_default):
        out = trace_segmentation(_day([(0, 0.0, 0.0), (120, 0.0, 0.0),
                                       (360, 0.0, 0.0)]), cp_default)
        assert all(not lr.is_transient for lr in out)
        assert {lr.stay_duration_min for lr in out} == {6.0}
        assert {(lr.stay_lat, lr.stay_lon) for lr in out} == {(0.0, 0.0)}

    def test_transient_anchor_then_stay(self, cp_default):
        out = trace_segmentation(_day([(0, 0.0, 0.0), (60, 0.0, 0.01),
                                       (460, 0.0, 0.01)]), cp_default)
        assert out[0].is_transient
        assert not out[1].is_transient and not out[2].is_transient
        assert out[1].stay_lon == pytest.approx(0.01)
        assert out[1].stay_duration_min == pytest.approx(400 / 60)

    def test_empty_day(self, cp_default):
        assert trace_segmentation(_day([]), cp_default) == []

    def test_unsorted_rejected(self):
        user = make_user("u", [(0, 0.0, 0.0), (60, 0.0, 0.0)])
        user.ts = user.ts[::-1].copy()
        with pytest.raises(UnsortedInputError):
            run_trace_segmentation(user, ChangePoints(5.0, 0.1))

    @pytest.mark.parametrize("dist_km", [0.05, 0.2, 0.5])
    @pytest.mark.parametrize("dur_min", [0.5, 5.0, 30.0])
    def test_matches_exhaustive_oracle(self, rng, dist_km, dur_min):
        for _ in range(150):
            ts, lat, lon = random_trajectory(rng)
            got = kernels.trace_segment_labels(ts, lat, lon, dist_km, dur_min)
            want = oracle_trace_segments(ts, lat, lon, dist_km, dur_min)
            assert list(got) == want

    def test_emitted_stays_satisfy_thresholds(self, rng):
        cp = ChangePoints(5.0, 0.2)
        for _ in range(50):
            ts, lat, lon = random_trajectory(rng, max_records=20)
            user = make_user("u", list(zip(ts.tolist(), lat, lon)))
            ss = run_trace_segmentation(user, cp)
            for s in ss.stays:
                assert s.duration_min >= cp.duration_min_threshold
                idx = s.record_idx
                for a in idx:
                    for b in idx:
                        d = oracle_haversine_km(
                            (user.lat[a], user.lon[a]),
                            (user.lat[b], user.lon[b]))
                        assert d <= cp.distance_km_threshold + 1e-9

    def test_raising_duration_never_adds_stays(self, rng):
        for _ in range(30):
            ts, lat, lon = random_trajectory(rng, max_records=15)
            counts = []
            for dur in (0.5, 5.0, 30.0):
                labels = kernels.trace_segment_labels(ts, lat, lon, 0.2, dur)
                counts.append(labels.max() + 1 if len(labels) else 0)
            assert counts[0] >= counts[1] >= counts[2]


class TestIncrementalClustering:
    def test_single_record(self):
        cp = ChangePoints(5.0, 0.2)
        a = incremental_cluster_records(make_records("u", [(0, 0.0, 0.0)]), cp)
        assert a.n_clusters == 1
        assert (a.center_lat[0], a.center_lon[0]) == (0.0, 0.0)

    def test_hand_trace_two_clusters(self):
        cp = ChangePoints(5.0, 0.2)
        recs = make_records("u", [(0, 0.0, 0.0), (60, 0.0, 0.001),
                                  (120, 0.0, 0.01)])
        a = incremental_cluster_records(recs, cp)
        assert a.n_clusters == 2
        assert list(a.labels) == [0, 0, 1]
        assert a.center_lon[0] == pytest.approx(0.0005)
        assert a.center_lon[1] == pytest.approx(0.01)

    def test_identical_records_one_cluster(self):
        cp = ChangePoints(5.0, 0.2)
        recs = make_records("u", [(t, 1.0, 1.0) for t in range(0, 600, 60)])
        assert incremental_cluster_records(recs, cp).n_clusters == 1

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            incremental_cluster_records([], ChangePoints(5.0, 0.2))

    def test_unsorted_raises(self):
        recs = make_records("u", [(100, 0.0, 0.0), (0, 0.0, 0.0)])
        with pytest.raises(UnsortedInputError):
            incremental_cluster_records(recs, ChangePoints(5.0, 0.2))

    def test_join_is_strictly_below_threshold(self):
        # Two points exactly one degree of longitude apart at the equator;
        # with the threshold set exactly to that distance, no join happens.
        d = kernels.haversine_km(0.0, 0.0, 0.0, 1.0)
        recs = make_records("u", [(0, 0.0, 0.0), (60, 0.0, 1.0)])
        a = incremental_cluster_records(
            recs, ChangePoints(5.0, d, override=True))
        assert a.n_clusters == 2


class TestKmeansRefine:
    def test_fixed_point_when_centered(self):
        cp = ChangePoints(5.0, 0.2)
        recs = make_records("u", [(0, 0.0, 0.0), (60, 0.0, 0.0),
                                  (120, 1.0, 1.0), (180, 1.0, 1.0)])
        a = incremental_cluster_records(recs, cp)
        r = kmeans_refine(a)
        assert np.array_equal(r.labels, a.labels)
        assert np.array_equal(r.center_lat, a.center_lat)

    def test_k1_center_is_mean(self):
        cp = ChangePoints(5.0, 0.2)
        recs = make_records("u", [(0, 0.0, 0.0), (60, 0.0, 0.001),
                                  (120, 0.001, 0.0)])
        r = kmeans_refine(incremental_cluster_records(recs, cp))
        assert r.n_clusters == 1
        assert r.center_lat[0] == pytest.approx(0.001 / 3)
        assert r.center_lon[0] == pytest.approx(0.001 / 3)

    def test_order_robustness_on_separated_clusters(self, rng):
        threshold = 0.2
        for _ in range(20):
            centers = [(47.6, -122.3), (47.6 + 4 * threshold / 111.195, -122.3)]
            pts = []
            for cx, cy in centers:
                for _ in range(10):
                    pts.append((cx + rng.uniform(-4e-4, 4e-4),
                                cy + rng.uniform(-4e-4, 4e-4)))
            lat = np.array([p[0] for p in pts])
            lon = np.array([p[1] for p in pts])
            fwd = kernels.lloyd_refine(lat, lon,
                                       *kernels.incremental_pass(lat, lon, threshold)[1:])
            rev = kernels.lloyd_refine(lat[::-1].copy(), lon[::-1].copy(),
                                       *kernels.incremental_pass(lat[::-1].copy(),
                                                                 lon[::-1].copy(),
                                                                 threshold)[1:])
            got = sorted(zip(fwd[1], fwd[2]))
            want = sorted(zip(rev[1], rev[2]))
            assert len(got) == len(want)
            for a, b in zip(got, want):
                assert oracle_haversine_km(a, b) <= 1e-6


class TestIncrementalClusterStays:
    def test_relabel_preserves_count_and_times(self):
        cp = ChangePoints(5.0, 0.2)
        s1 = make_stay(0.0, 0.0, 0, 600)
        s2 = make_stay(0.0, 0.05 / 111.195 * 1.0, 86400, 87000)
        out = incremental_cluster_stays([s1, s2], cp)
        assert len(out) == 2
        assert [(s.start, s.end) for s in out] == [(0, 600), (86400, 87000)]
        # both relabeled to the shared cluster center
        assert out[0].centroid == out[1].centroid

    def test_short_stays_removed(self):
        cp = ChangePoints(5.0, 0.2)
        out = incremental_cluster_stays(
            [make_stay(0.0, 0.0, 0, 180)], cp)  # 3 min < 5 min
        assert out == []

    def test_empty(self):
        assert incremental_cluster_stays([], ChangePoints(5.0, 0.2)) == []


class TestStayDurationFilter:
    def test_short_stay_demoted(self, cp_default):
        labeled = trace_segmentation(
            _day([(0, 0.0, 0.0), (120, 0.0, 0.0), (240, 0.0, 0.0)]),
            ChangePoints(0.5, 0.1))
        out = stay_duration_filter(labeled, ChangePoints(5.0, 0.1))
        assert all(lr.is_transient for lr in out)

    def test_long_stay_kept_with_recomputed_duration(self):
        labeled = trace_segmentation(
            _day([(0, 0.0, 0.0), (120, 0.0, 0.0), (240, 0.0, 0.0)]),
            ChangePoints(0.5, 0.1))
        out = stay_duration_filter(labeled, ChangePoints(0.5, 0.1))
        assert {lr.stay_duration_min for lr in out} == {4.0}

    def test_no_stays_identity(self, cp_default):
        labeled = trace_segmentation(_day([(0, 0.0, 0.0)]), cp_default)
        assert stay_duration_filter(labeled, cp_default) == labeled


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=4000), min_size=1,
                max_size=8),
       st.integers(min_value=0, max_value=2 ** 31))
def test_oracle_property_random_grid(gaps, seed):
    rng = np.random.default_rng(seed)
    ts = np.cumsum(np.array(gaps, dtype=np.int64))
    n = len(ts)
    deg = 0.5 / 111.195
    lat = 47.6 + rng.uniform(-deg, deg, n)
    lon = -122.3 + rng.uniform(-deg, deg, n)
    got = kernels.trace_segment_labels(ts, lat, lon, 0.2, 5.0)
    assert list(got) == oracle_trace_segments(ts, lat, lon, 0.2, 5.0)
