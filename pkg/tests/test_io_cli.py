"""Ingestion, serialization round-trips, synthesis, and the CLI."""

import json

import pytest
from click.testing import CliRunner

from maw.cli import main
from maw.dataio import (IngestConfig, load_user_records, read_labeled_csv,
                        read_records, read_stays_csv, split_by_accuracy,
                        write_labeled_csv, write_outputs, write_records_csv,
                        write_stays_csv)
from maw.errors import RecordParseError
from maw.metrics import aggregate_metrics
from maw.oscillation import detect_oscillation_windows
from maw.pipeline import build_preset, execute_workflow, stays_by_user
from maw.synth import SynthConfig, generate

HEADER = "device_id,timestamp,lat,lon,accuracy_m\n"


def _write(tmp_path, name, body):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


class TestIngest:
    def test_single_row(self, tmp_path):
        p = _write(tmp_path, "r.csv", "u1,1000,47.6,-122.3,15\n")
        days = read_records([p])
        assert list(days) == ["u1"]
        assert len(days["u1"]) == 1
        assert len(days["u1"][0].records) == 1

    def test_out_of_order_rows_sorted(self, tmp_path):
        p = _write(tmp_path, "r.csv",
                   "u1,2000,47.6,-122.3,15\nu1,1000,47.6,-122.3,15\n")
        users = load_user_records([p])
        assert list(users["u1"].ts) == [1000, 2000]

    def test_lat_out_of_range_names_line(self, tmp_path):
        p = _write(tmp_path, "r.csv",
                   "u1,1000,47.6,-122.3,15\nu1,2000,95.0,-122.3,15\n")
        with pytest.raises(RecordParseError) as ei:
            load_user_records([p])
        assert ei.value.line == 3

    def test_dedup_keeps_more_accurate(self, tmp_path):
        p = _write(tmp_path, "r.csv",
                   "u1,1000,47.0,-122.0,80\nu1,1000,47.5,-122.5,10\n")
        users = load_user_records([p])
        assert len(users["u1"]) == 1
        assert users["u1"].lat[0] == 47.5

    def test_empty_file_empty_result(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(HEADER)
        assert load_user_records([p]) == {}

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b,c\n")
        with pytest.raises(RecordParseError):
            load_user_records([p])

    def test_iso_timestamps(self, tmp_path):
        p = _write(tmp_path, "r.csv",
                   "u1,1970-01-01T00:16:40Z,47.6,-122.3,15\n")
        users = load_user_records([p], IngestConfig(iso_timestamps=True))
        assert users["u1"].ts[0] == 1000


class TestSplit:
    @pytest.mark.parametrize("acc,stream", [(99.0, "gps"), (100.0, "cellular"),
                                            (0.0, "gps"), (350.0, "cellular")])
    def test_boundary(self, tmp_path, acc, stream):
        p = _write(tmp_path, "r.csv", f"u1,1000,47.6,-122.3,{acc}\n")
        gps, cell = split_by_accuracy(load_user_records([p]))
        assert ("u1" in gps) == (stream == "gps")
        assert ("u1" in cell) == (stream == "cellular")

    def test_partition_is_exact(self):
        users, _ = generate(SynthConfig(seed=4, n_users=3, n_days=1,
                                        gps_fraction=0.5))
        gps, cell = split_by_accuracy(users)
        for d, u in users.items():
            n = len(gps.get(d, ())) and len(gps[d]) or 0
            m = len(cell.get(d, ())) and len(cell[d]) or 0
            assert n + m == len(u)


class TestRoundTrips:
    def test_labeled_csv_round_trip(self, tmp_path):
        users, _ = generate(SynthConfig(seed=5, n_users=2, n_days=1))
        results, _ = execute_workflow(build_preset("workflow5"), users)
        labeled = {d: lab for d, (lab, _) in results.items()}
        path = tmp_path / "labeled.csv"
        write_labeled_csv(labeled, path)
        assert read_labeled_csv(path) == labeled

    def test_stays_csv_round_trip(self, tmp_path):
        users, _ = generate(SynthConfig(seed=5, n_users=2, n_days=1))
        results, _ = execute_workflow(build_preset("workflow5"), users)
        stays = stays_by_user(results)
        path = tmp_path / "stays.csv"
        write_stays_csv(stays, path)
        assert read_stays_csv(path) == {d: v for d, v in stays.items() if v}

    def test_records_csv_round_trip(self, tmp_path):
        users, _ = generate(SynthConfig(seed=6, n_users=2, n_days=1))
        path = tmp_path / "records.csv"
        write_records_csv(users, path)
        back = load_user_records([path])
        for d in users:
            assert list(back[d].ts) == list(users[d].ts)
            assert list(back[d].lat) == list(users[d].lat)

    def test_write_outputs_byte_stable(self, tmp_path):
        users, _ = generate(SynthConfig(seed=5, n_users=2, n_days=1))
        results, _ = execute_workflow(build_preset("workflow5"), users)
        metrics = aggregate_metrics(stays_by_user(results))
        for d in ("a", "b"):
            write_outputs(results, metrics, None, tmp_path / d)
        for name in ("labeled.csv", "stays.csv", "metrics.json",
                     "histogram.csv"):
            assert (tmp_path / "a" / name).read_bytes() \
                == (tmp_path / "b" / name).read_bytes()

    def test_histogram_has_48_rows(self, tmp_path):
        users, _ = generate(SynthConfig(seed=5, n_users=2, n_days=1))
        results, _ = execute_workflow(build_preset("workflow5"), users)
        metrics = aggregate_metrics(stays_by_user(results))
        write_outputs(results, metrics, None, tmp_path)
        lines = (tmp_path / "histogram.csv").read_text().strip().splitlines()
        assert len(lines) == 49  # header + 48 bins

    def test_empty_results_headers_only(self, tmp_path):
        write_outputs({}, None, None, tmp_path)
        assert (tmp_path / "stays.csv").read_text().strip() \
            == "device_id,centroid_lat,centroid_lon,start,end,duration_min,record_count,source"


class TestSynth:
    def test_seed_determinism(self, tmp_path):
        for sub in ("x", "y"):
            users, truth = generate(SynthConfig(seed=12, n_users=3, n_days=1))
            (tmp_path / sub).mkdir()
            write_records_csv(users, tmp_path / sub / "records.csv")
            write_stays_csv(truth, tmp_path / sub / "truth.csv")
        assert (tmp_path / "x" / "records.csv").read_bytes() \
            == (tmp_path / "y" / "records.csv").read_bytes()
        assert (tmp_path / "x" / "truth.csv").read_bytes() \
            == (tmp_path / "y" / "truth.csv").read_bytes()

    def test_user_count(self):
        users, truth = generate(SynthConfig(seed=0, n_users=5, n_days=1))
        assert len(users) == len(truth) == 5

    def test_zero_osc_rate_no_circular_events(self):
        users, _ = generate(SynthConfig(seed=8, n_users=3, n_days=2,
                                        osc_rate=0.0))
        for u in users.values():
            assert detect_oscillation_windows(u.to_records(), 5.0) == []

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SynthConfig(osc_rate=1.5)
        with pytest.raises(ValueError):
            SynthConfig(gps_noise_m=-1)

    def test_truth_recovered_by_trace_segmentation(self):
        users, truth = generate(SynthConfig(seed=13, n_users=3, n_days=2))
        results, _ = execute_workflow(build_preset("workflow5"), users)
        for d, (_, stays) in results.items():
            assert len(stays) == len(truth[d])


class TestCli:
    def _corpus(self, tmp_path, **kw):
        runner = CliRunner()
        args = ["synth", "--seed", "1", "--users", "3", "--days", "1",
                "--out", str(tmp_path / "corpus")]
        for k, v in kw.items():
            args += [f"--{k.replace('_', '-')}", str(v)]
        assert runner.invoke(main, args).exit_code == 0
        return str(tmp_path / "corpus" / "records.csv")

    def test_run_success(self, tmp_path):
        records = self._corpus(tmp_path)
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--workflow", "preset:workflow5",
                                   "--input", records,
                                   "--out", str(tmp_path / "out")])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "out" / "stays.csv").exists()
        assert (tmp_path / "out" / "metrics.json").exists()

    def test_run_validation_error_exits_2(self, tmp_path):
        records = self._corpus(tmp_path)
        res = CliRunner().invoke(main, [
            "run", "--workflow", '{"stages":[{"kind":"STAY_DURATION"}]}',
            "--input", records, "--out", str(tmp_path / "out")])
        assert res.exit_code == 2

    def test_run_missing_input_is_error(self, tmp_path):
        res = CliRunner().invoke(main, [
            "run", "--workflow", "preset:workflow5",
            "--input", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "out")])
        assert res.exit_code != 0

    def test_ingest_writes_streams(self, tmp_path):
        records = self._corpus(tmp_path, gps_fraction=0.5)
        res = CliRunner().invoke(main, ["ingest", records,
                                        "--out", str(tmp_path / "ing")])
        assert res.exit_code == 0
        for name in ("records.csv", "gps.csv", "cellular.csv"):
            assert (tmp_path / "ing" / name).exists()

    def test_compare_and_metrics(self, tmp_path):
        records = self._corpus(tmp_path)
        runner = CliRunner()
        res = runner.invoke(main, [
            "compare", "--workflows", "preset:workflow5",
            "--workflows", "preset:workflow6", "--input", records,
            "--out", str(tmp_path / "cmp.json")])
        assert res.exit_code == 0, res.output
        report = json.loads((tmp_path / "cmp.json").read_text())
        assert len(report["rows"]) == 2

        res = runner.invoke(main, ["run", "--workflow", "preset:workflow5",
                                   "--input", records,
                                   "--out", str(tmp_path / "out")])
        assert res.exit_code == 0
        res = runner.invoke(main, ["metrics", "--stays",
                                   str(tmp_path / "out" / "stays.csv")])
        assert res.exit_code == 0
        assert "trips_per_person_day" in res.output

    def test_bad_workflow_json_exits_2(self, tmp_path):
        records = self._corpus(tmp_path)
        res = CliRunner().invoke(main, ["run", "--workflow", "{bad",
                                        "--input", records,
                                        "--out", str(tmp_path / "out")])
        assert res.exit_code == 2
