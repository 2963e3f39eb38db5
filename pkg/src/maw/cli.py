"""Command-line surface.

Exit codes: 0 success, 2 validation/config error, 1 runtime error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Tuple

import click

from .dataio import (IngestConfig, load_user_records, read_stays_csv,
                     split_by_accuracy, write_outputs, write_records_csv,
                     write_stays_csv)
from .errors import MawError, RecordParseError, UsageError, WorkflowError
from .metrics import aggregate_metrics
from .model import ChangePoints
from .pipeline import (compare_workflows, execute_workflow, parse_workflow,
                       scaling_probe, stays_by_user, validate_workflow,
                       workflow_errors)
from .synth import SynthConfig, generate

EXIT_VALIDATION = 2
EXIT_RUNTIME = 1


def _fail(exc: Exception) -> "click.exceptions.Exit":
    validation = isinstance(exc, (WorkflowError, UsageError, RecordParseError,
                                  ValueError))
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, WorkflowError):
        for d in exc.diagnostics:
            click.echo(f"  {d.severity} {d.code}: {d.message}", err=True)
    return click.exceptions.Exit(EXIT_VALIDATION if validation else EXIT_RUNTIME)


def _load_workflow(text: str, distance_km: Optional[float],
                   duration_min: Optional[float], osc_window_min: float):
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    cp = None
    if distance_km is not None or duration_min is not None:
        cp = ChangePoints(
            duration_min_threshold=duration_min if duration_min is not None else 5.0,
            distance_km_threshold=distance_km if distance_km is not None else 1.0,
            osc_window_min=osc_window_min,
        )
    spec = parse_workflow(text, cp)
    diags = validate_workflow(spec)
    for d in diags:
        if d.severity == "warning":
            click.echo(f"warning {d.code}: {d.message}", err=True)
    errors = workflow_errors(diags)
    if errors:
        raise WorkflowError(errors)
    return spec


@click.group()
def main():
    """Stay, trip, and mobility-metric inference from raw location records."""


@main.command()
@click.argument("inputs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--accuracy-split-m", default=100.0, show_default=True)
@click.option("--utc-offset-min", default=0, show_default=True)
@click.option("--iso", is_flag=True, help="Parse ISO-8601 UTC timestamps.")
def ingest(inputs, out, accuracy_split_m, utc_offset_min, iso):
    """Normalize records CSVs and split them into GPS/cellular streams."""
    try:
        cfg = IngestConfig(accuracy_split_m=accuracy_split_m,
                           utc_offset_min=utc_offset_min, iso_timestamps=iso)
        users = load_user_records(inputs, cfg)
        gps, cellular = split_by_accuracy(users, cfg)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_records_csv(users, out_dir / "records.csv")
        write_records_csv(gps, out_dir / "gps.csv")
        write_records_csv(cellular, out_dir / "cellular.csv")
        click.echo(f"{len(users)} users, "
                   f"{sum(len(u) for u in users.values())} records "
                   f"({len(gps)} gps users, {len(cellular)} cellular users)")
    except Exception as exc:  # noqa: BLE001
        raise _fail(exc)


@main.command()
@click.option("--workflow", "workflow_text", required=True,
              help="preset:workflowN, inline JSON, or @path.json")
@click.option("--input", "inputs", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--distance-km", type=float, default=None)
@click.option("--duration-min", type=float, default=None)
@click.option("--osc-window-min", default=5.0, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--utc-offset-min", default=0, show_default=True)
@click.option("--accuracy-split-m", type=float, default=None,
              help="Restrict input to the workflow's stream at this split.")
@click.option("--profile", "with_profile", is_flag=True,
              help="Also write profile.json (timings are not deterministic).")
@click.option("--iso", is_flag=True)
def run(workflow_text, inputs, out, distance_km, duration_min, osc_window_min,
        workers, utc_offset_min, accuracy_split_m, with_profile, iso):
    """Execute one workflow and write labeled records, stays, and metrics."""
    try:
        spec = _load_workflow(workflow_text, distance_km, duration_min,
                              osc_window_min)
        users = load_user_records(
            inputs, IngestConfig(utc_offset_min=utc_offset_min,
                                 iso_timestamps=iso))
        results, profile = execute_workflow(
            spec, users, workers=workers, utc_offset_min=utc_offset_min,
            accuracy_split_m=accuracy_split_m, sample_memory=with_profile)
        stays = stays_by_user(results)
        metrics = None
        if any(stays.values()):
            metrics = aggregate_metrics(stays, utc_offset_min=utc_offset_min)
        write_outputs(results, metrics,
                      profile if with_profile else None, out)
        n_stays = sum(len(v) for v in stays.values())
        click.echo(f"{spec.name}: {len(results)} users, {n_stays} stays "
                   f"-> {out}")
    except Exception as exc:  # noqa: BLE001
        raise _fail(exc)


@main.command()
@click.option("--workflows", "workflow_texts", multiple=True, required=True)
@click.option("--input", "inputs", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the comparison report as JSON.")
@click.option("--distance-km", type=float, default=None)
@click.option("--duration-min", type=float, default=None)
@click.option("--osc-window-min", default=5.0, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--utc-offset-min", default=0, show_default=True)
def compare(workflow_texts, inputs, out, distance_km, duration_min,
            osc_window_min, workers, utc_offset_min):
    """Run several workflows on one corpus and compare their metrics."""
    try:
        specs = [_load_workflow(t, distance_km, duration_min, osc_window_min)
                 for t in workflow_texts]
        users = load_user_records(
            inputs, IngestConfig(utc_offset_min=utc_offset_min))
        report = compare_workflows(specs, users, workers=workers,
                                   utc_offset_min=utc_offset_min)
        click.echo(f"cohort: {len(report.cohort)} users")
        click.echo(f"{'workflow':<12} {'trips/day':>10} {'rg_km':>10} {'trips':>8}")
        for row in report.rows:
            total = sum(row.metrics.departure_histogram)
            click.echo(f"{row.name:<12} "
                       f"{row.metrics.trips_per_person_day:>10.4f} "
                       f"{row.metrics.rg_km_per_person_day:>10.4f} "
                       f"{total:>8d}")
        if out:
            Path(out).write_text(json.dumps(report.to_dict(), indent=2,
                                            sort_keys=True) + "\n")
    except Exception as exc:  # noqa: BLE001
        raise _fail(exc)


@main.command()
@click.option("--stays", "stays_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--utc-offset-min", default=0, show_default=True)
def metrics(stays_path, utc_offset_min):
    """Print mobility metrics for a stays CSV."""
    try:
        stays = read_stays_csv(stays_path)
        m = aggregate_metrics(stays, utc_offset_min=utc_offset_min)
        click.echo(json.dumps({
            "trips_per_person_day": m.trips_per_person_day,
            "rg_km_per_person_day": m.rg_km_per_person_day,
            "users_included": m.users_included,
            "departure_histogram": list(m.departure_histogram),
        }, indent=2, sort_keys=True))
    except Exception as exc:  # noqa: BLE001
        raise _fail(exc)


@main.command()
@click.option("--seed", default=0, show_default=True)
@click.option("--users", "n_users", default=10, show_default=True)
@click.option("--days", "n_days", default=3, show_default=True)
@click.option("--stays-per-day", default=4, show_default=True)
@click.option("--dwell-min", default=40.0, show_default=True)
@click.option("--gps-fraction", default=1.0, show_default=True)
@click.option("--gps-noise-m", default=0.0, show_default=True)
@click.option("--cell-noise-m", default=0.0, show_default=True)
@click.option("--osc-rate", default=0.0, show_default=True)
@click.option("--tower-pair-km", default=2.0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def synth(seed, n_users, n_days, stays_per_day, dwell_min, gps_fraction,
          gps_noise_m, cell_noise_m, osc_rate, tower_pair_km, out):
    """Generate a seed-deterministic synthetic corpus with ground truth."""
    try:
        cfg = SynthConfig(seed=seed, n_users=n_users, n_days=n_days,
                          stays_per_day=stays_per_day, dwell_min=dwell_min,
                          gps_fraction=gps_fraction, gps_noise_m=gps_noise_m,
                          cell_noise_m=cell_noise_m, osc_rate=osc_rate,
                          tower_pair_km=tower_pair_km)
        users, truth = generate(cfg)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_records_csv(users, out_dir / "records.csv")
        write_stays_csv(truth, out_dir / "truth_stays.csv")
        click.echo(f"{len(users)} users, "
                   f"{sum(len(u) for u in users.values())} records -> {out}")
    except Exception as exc:  # noqa: BLE001
        raise _fail(exc)


def _parse_sizes(raw: str) -> Tuple[int, ...]:
    sizes = []
    for part in raw.split(","):
        part = part.strip().lower()
        if part.endswith("mb"):
            sizes.append(int(float(part[:-2]) * 1_000_000))
        elif part.endswith("x"):
            sizes.append(int(float(part[:-1]) * 1_000_000))
        else:
            sizes.append(int(part))
    return tuple(sizes)


@main.command()
@click.option("--workflow", "workflow_text", default="preset:workflow5",
              show_default=True)
@click.option("--sizes", default="10mb,20mb,40mb", show_default=True,
              help="Comma-separated target corpus sizes (bytes, or with mb suffix).")
@click.option("--seed", default=7, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def profile(workflow_text, sizes, seed, workers, out):
    """Time a workflow at several corpus sizes and fit a line."""
    try:
        spec = _load_workflow(workflow_text, None, None, 5.0)
        result = scaling_probe(spec, _parse_sizes(sizes),
                               base_cfg=SynthConfig(seed=seed, n_users=1),
                               workers=workers)
        for size, sec in zip(result.sizes_bytes, result.seconds):
            click.echo(f"{size:>12d} bytes  {sec:8.3f} s")
        if result.degenerate:
            click.echo("fit: degenerate (no size or time variation)")
        else:
            click.echo(f"fit: r_squared={result.r_squared:.4f} "
                       f"slope={result.slope:.3e} s/byte")
        if out:
            Path(out).write_text(json.dumps(result.to_dict(), indent=2,
                                            sort_keys=True) + "\n")
    except Exception as exc:  # noqa: BLE001
        raise _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
