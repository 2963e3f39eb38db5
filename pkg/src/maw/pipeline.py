"""Workflow composition, validation, execution, and profiling.

A workflow is a named, ordered list of stages with bound change points
plus an input selector (gps, cellular, or both).  Execution is per user:
stages run sequentially inside a user, users run in parallel across
processes, and outputs are sorted by device then time so results are
identical for any worker count.
"""

from __future__ import annotations

import json
import tempfile
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import UsageError, WorkflowError
from .integrator import IntegrationRules, integrate_stays
from .model import ChangePoints, LabeledRecord, Stay, StaySource
from .oscillation import correct_oscillations, run_osc_records, run_osc_stays
from .staydetect import (filter_stays_by_duration, incremental_cluster_stays,
                         run_incremental_records, run_incremental_stays,
                         run_stay_duration, run_trace_segmentation)
from .timeline import StaySet, UserRecords, labeled_from_intervals

DEFAULT_ACCURACY_SPLIT_M = 100.0
CELLULAR_DEFAULTS = ChangePoints(duration_min_threshold=5.0, distance_km_threshold=1.0)
GPS_DEFAULTS = ChangePoints(duration_min_threshold=5.0, distance_km_threshold=0.2)

PRESET_NAMES = tuple(f"workflow{i}" for i in range(1, 7))


class StageKind(str, Enum):
    TRACE_SEG = "TRACE_SEG"
    INCREMENTAL = "INCREMENTAL"
    STAY_DURATION = "STAY_DURATION"
    OSC_CORRECTOR = "OSC_CORRECTOR"
    STAY_INTEGRATOR = "STAY_INTEGRATOR"


@dataclass(frozen=True)
class StageSpec:
    kind: StageKind
    change_points: ChangePoints
    mode: str = "records"  # INCREMENTAL / OSC_CORRECTOR: "records" or "stays"
    cellular_stages: Tuple["StageSpec", ...] = ()  # STAY_INTEGRATOR only

    def __post_init__(self):
        if self.mode not in ("records", "stays"):
            raise ValueError(f"unknown stage mode: {self.mode}")


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    stages: Tuple[StageSpec, ...]
    input: str = "gps"  # "gps" | "cellular" | "both"

    def __post_init__(self):
        if self.input not in ("gps", "cellular", "both"):
            raise ValueError(f"unknown input selector: {self.input}")


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str  # "error" | "warning"
    message: str
    stage_index: Optional[int] = None


@dataclass
class RunProfile:
    """Wall-clock and memory accounting for one workflow execution."""

    stage_names: List[str] = field(default_factory=list)
    stage_seconds: List[float] = field(default_factory=list)
    stage_completed_at: List[float] = field(default_factory=list)
    memory_samples_mb: List[Tuple[float, float]] = field(default_factory=list)
    input_bytes: int = 0
    output_rows: int = 0
    total_seconds: float = 0.0
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "stage_names": self.stage_names,
            "stage_seconds": self.stage_seconds,
            "stage_completed_at": self.stage_completed_at,
            "memory_samples_mb": [list(s) for s in self.memory_samples_mb],
            "input_bytes": self.input_bytes,
            "output_rows": self.output_rows,
            "total_seconds": self.total_seconds,
            "workers": self.workers,
        }


def build_preset(name: str, cp: Optional[ChangePoints] = None) -> WorkflowSpec:
    """One of the six standard workflow designs.

    Workflows 1-3 target the cellular stream (defaults 1 km / 5 min),
    workflows 4-6 the GPS stream (defaults 0.2 km / 5 min); pass cp to
    override the change points everywhere.
    """
    if name not in PRESET_NAMES:
        raise UsageError(f"unknown preset: {name!r} (expected one of {PRESET_NAMES})")
    num = int(name[len("workflow"):])
    cellular = num <= 3
    c = cp if cp is not None else (CELLULAR_DEFAULTS if cellular else GPS_DEFAULTS)
    ts = StageSpec(StageKind.TRACE_SEG, c)
    ic = StageSpec(StageKind.INCREMENTAL, c)
    ic_stays = StageSpec(StageKind.INCREMENTAL, c, mode="stays")
    sdc = StageSpec(StageKind.STAY_DURATION, c)
    oc_records = StageSpec(StageKind.OSC_CORRECTOR, c)
    oc_stays = StageSpec(StageKind.OSC_CORRECTOR, c, mode="stays")
    stages = {
        1: (ic, sdc),
        2: (ic, sdc, oc_stays, sdc),
        3: (oc_records, ic, sdc),
        4: (ic, sdc),
        5: (ts, sdc),
        6: (ts, ic_stays, sdc),
    }[num]
    return WorkflowSpec(name=name, stages=stages,
                        input="cellular" if cellular else "gps")


def _parse_stage(obj: dict, index: int) -> StageSpec:
    def fail(code, msg):
        raise WorkflowError([Diagnostic(code, "error", msg, index)])

    if not isinstance(obj, dict) or "kind" not in obj:
        fail("E010", "stage must be an object with a 'kind' field")
    try:
        kind = StageKind(obj["kind"])
    except ValueError:
        fail("E010", f"unknown stage kind: {obj['kind']!r}")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        fail("E011", "stage 'params' must be an object")
    try:
        cp = ChangePoints(
            duration_min_threshold=float(params.get("duration_min", 5.0)),
            distance_km_threshold=float(params.get("distance_km", 1.0)),
            osc_window_min=float(params.get("osc_window_min", 5.0)),
            override=bool(params.get("override", False)),
        )
    except (TypeError, ValueError) as exc:
        fail("E011", f"bad change points: {exc}")
    mode = params.get("mode", "records")
    if mode not in ("records", "stays"):
        fail("E011", f"bad stage mode: {mode!r}")
    cellular = tuple(
        _parse_stage(s, index) for s in obj.get("cellular_stages", []))
    return StageSpec(kind, cp, mode=mode, cellular_stages=cellular)


def parse_workflow(text: str, cp: Optional[ChangePoints] = None) -> WorkflowSpec:
    """Parse `preset:workflowN` or a JSON workflow document."""
    text = text.strip()
    if text.startswith("preset:"):
        return build_preset(text[len("preset:"):], cp)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorkflowError([Diagnostic(
            "E012", "error", f"invalid JSON at line {exc.lineno}: {exc.msg}")])
    if not isinstance(doc, dict) or not isinstance(doc.get("stages"), list):
        raise WorkflowError([Diagnostic(
            "E012", "error", "workflow document needs a 'stages' list")])
    stages = tuple(_parse_stage(s, i) for i, s in enumerate(doc["stages"]))
    try:
        return WorkflowSpec(name=str(doc.get("name", "custom")), stages=stages,
                            input=doc.get("input", "gps"))
    except ValueError as exc:
        raise WorkflowError([Diagnostic("E012", "error", str(exc))])


def _validate_chain(stages: Sequence[StageSpec], start_kind: str,
                    diags: List[Diagnostic], offset: int = 0) -> str:
    """Walk a linear stage list tracking the stream type; returns the
    final type ("records" or "stays")."""
    current = start_kind
    for i, stage in enumerate(stages):
        idx = offset + i
        if stage.kind is StageKind.TRACE_SEG:
            if current != "records":
                diags.append(Diagnostic(
                    "E004", "error",
                    "trace segmentation needs raw records", idx))
            current = "stays"
        elif stage.kind is StageKind.INCREMENTAL:
            if stage.mode == "stays":
                if current != "stays":
                    diags.append(Diagnostic(
                        "E003", "error",
                        "incremental clustering of stays has no upstream "
                        "stay producer", idx))
            elif current != "records":
                diags.append(Diagnostic(
                    "E004", "error",
                    "incremental clustering of records needs raw records", idx))
            current = "stays"
        elif stage.kind is StageKind.STAY_DURATION:
            if current != "stays":
                diags.append(Diagnostic(
                    "E001", "error",
                    "stay duration calculator has no upstream stay producer",
                    idx))
            current = "stays"
        elif stage.kind is StageKind.OSC_CORRECTOR:
            if idx == 0 and current == "records":
                diags.append(Diagnostic(
                    "W001", "warning",
                    "oscillation correction before any stay detection "
                    "(pre-processing placement)", idx))
        elif stage.kind is StageKind.STAY_INTEGRATOR:
            if current != "stays" or not stage.cellular_stages:
                diags.append(Diagnostic(
                    "E002", "error",
                    "stay integrator must be fed by exactly two stay streams",
                    idx))
            branch_diags: List[Diagnostic] = []
            if stage.cellular_stages:
                branch_end = _validate_chain(stage.cellular_stages, "records",
                                             branch_diags, offset=idx)
                if branch_end != "stays":
                    branch_diags.append(Diagnostic(
                        "E002", "error",
                        "integrator cellular branch does not produce stays",
                        idx))
            diags.extend(branch_diags)
            current = "stays"
    return current


def validate_workflow(spec: WorkflowSpec) -> List[Diagnostic]:
    """Type-check the stage sequence; errors carry E-codes, warnings W-codes."""
    diags: List[Diagnostic] = []
    n_integrators = sum(
        1 for s in spec.stages if s.kind is StageKind.STAY_INTEGRATOR)
    if spec.input == "both" and n_integrators != 1:
        diags.append(Diagnostic(
            "E002", "error",
            "input 'both' requires exactly one stay integrator stage"))
    if n_integrators and spec.input != "both":
        diags.append(Diagnostic(
            "E002", "error",
            "stay integrator requires input 'both'"))
    _validate_chain(spec.stages, "records", diags)
    return diags


def workflow_errors(diags: Sequence[Diagnostic]) -> List[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


State = Union[UserRecords, StaySet, List[Stay]]


def _source_for(spec: WorkflowSpec) -> StaySource:
    return StaySource.CELLULAR if spec.input == "cellular" else StaySource.GPS


def _apply_stage(stage: StageSpec, state: State, spec: WorkflowSpec,
                 cellular: Optional[UserRecords],
                 utc_offset_min: int) -> State:
    cp = stage.change_points
    if stage.kind is StageKind.TRACE_SEG:
        return run_trace_segmentation(state, cp, utc_offset_min,
                                      source=_source_for(spec))
    if stage.kind is StageKind.INCREMENTAL:
        if stage.mode == "stays":
            if isinstance(state, StaySet):
                return run_incremental_stays(state, cp)
            return incremental_cluster_stays(state, cp)
        return run_incremental_records(state, cp, source=_source_for(spec))
    if stage.kind is StageKind.STAY_DURATION:
        if isinstance(state, StaySet):
            return run_stay_duration(state, cp)
        return filter_stays_by_duration(state, cp.duration_min_threshold)
    if stage.kind is StageKind.OSC_CORRECTOR:
        if isinstance(state, UserRecords):
            return run_osc_records(state, cp.osc_window_min, utc_offset_min)
        if isinstance(state, StaySet):
            return run_osc_stays(state, cp.osc_window_min)
        return correct_oscillations(state, cp.osc_window_min, utc_offset_min)
    # STAY_INTEGRATOR: main (GPS) branch stays + cellular branch stays.
    gps_stays = state.to_stays() if isinstance(state, StaySet) else list(state)
    cell_state: State = cellular if cellular is not None else UserRecords(
        gps_stays[0].device_id if gps_stays else "",
        np.empty(0, np.int64), np.empty(0, np.float64),
        np.empty(0, np.float64), np.empty(0, np.float64))
    for sub in stage.cellular_stages:
        cell_state = _apply_stage(sub, cell_state, spec, None, utc_offset_min)
    cell_stays = (cell_state.to_stays() if isinstance(cell_state, StaySet)
                  else list(cell_state))
    return integrate_stays(gps_stays, cell_stays, cp, IntegrationRules())


def _run_user(spec: WorkflowSpec, user: UserRecords,
              cellular: Optional[UserRecords],
              utc_offset_min: int) -> Tuple[List[LabeledRecord], List[Stay], List[float]]:
    state: State = user
    seconds: List[float] = []
    for stage in spec.stages:
        t0 = time.perf_counter()
        state = _apply_stage(stage, state, spec, cellular, utc_offset_min)
        seconds.append(time.perf_counter() - t0)
    if isinstance(state, StaySet):
        return state.to_labeled(), state.to_stays(), seconds
    if isinstance(state, UserRecords):
        return [LabeledRecord(r) for r in state.to_records()], [], seconds
    full = user if cellular is None else _concat_users(user, cellular)
    return labeled_from_intervals(full, state), list(state), seconds


def _concat_users(a: UserRecords, b: UserRecords) -> UserRecords:
    ts = np.concatenate([a.ts, b.ts])
    order = np.argsort(ts, kind="stable")
    return UserRecords(a.device_id, ts[order],
                       np.concatenate([a.lat, b.lat])[order],
                       np.concatenate([a.lon, b.lon])[order],
                       np.concatenate([a.accuracy, b.accuracy])[order])


def _worker(args):
    spec, device, user, cellular, utc_offset_min = args
    labeled, stays, seconds = _run_user(spec, user, cellular, utc_offset_min)
    return device, labeled, stays, seconds


def _split_streams(users: Mapping[str, UserRecords], spec: WorkflowSpec,
                   accuracy_split_m: Optional[float]):
    """Select per-user input streams.

    For single-input workflows the whole record set is used unless an
    accuracy split is requested; input 'both' always splits (default
    100 m) and feeds GPS to the main branch, cellular to the integrator.
    """
    from .dataio import IngestConfig, split_by_accuracy

    if spec.input == "both":
        split = accuracy_split_m or DEFAULT_ACCURACY_SPLIT_M
        gps, cell = split_by_accuracy(users, IngestConfig(accuracy_split_m=split))
        empty = {
            d: UserRecords(d, np.empty(0, np.int64), np.empty(0, np.float64),
                           np.empty(0, np.float64), np.empty(0, np.float64))
            for d in users
        }
        return ({d: gps.get(d, empty[d]) for d in users},
                {d: cell.get(d, empty[d]) for d in users})
    if accuracy_split_m is not None:
        gps, cell = split_by_accuracy(
            users, IngestConfig(accuracy_split_m=accuracy_split_m))
        chosen = gps if spec.input == "gps" else cell
        return {d: u for d, u in chosen.items()}, None
    return dict(users), None


class _MemorySampler:
    """Background resident-set-size probe at roughly 1 Hz."""

    def __init__(self, interval_s: float = 1.0):
        self.interval_s = interval_s
        self.samples: List[Tuple[float, float]] = []
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._t0 = time.perf_counter()

    def _rss_mb(self) -> float:
        import psutil

        return psutil.Process().memory_info().rss / 1e6

    def _loop(self):
        while not self._stop.wait(self.interval_s):
            self.samples.append((time.perf_counter() - self._t0, self._rss_mb()))

    def __enter__(self):
        self.samples.append((0.0, self._rss_mb()))
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self.samples.append((time.perf_counter() - self._t0, self._rss_mb()))


def execute_workflow(spec: WorkflowSpec, users: Mapping[str, UserRecords],
                     workers: int = 1, utc_offset_min: int = 0,
                     accuracy_split_m: Optional[float] = None,
                     sample_memory: bool = False,
                     ) -> Tuple[Dict[str, Tuple[List[LabeledRecord], List[Stay]]], RunProfile]:
    """Run every user through the workflow; returns per-user outputs plus
    a profile.  Outputs are independent of the worker count."""
    errors = workflow_errors(validate_workflow(spec))
    if errors:
        raise WorkflowError(errors)

    main, cell = _split_streams(users, spec, accuracy_split_m)
    devices = sorted(main)
    profile = RunProfile(
        stage_names=[s.kind.value for s in spec.stages],
        stage_seconds=[0.0] * len(spec.stages),
        workers=max(1, workers),
        input_bytes=sum(
            int(u.ts.nbytes + u.lat.nbytes + u.lon.nbytes + u.accuracy.nbytes)
            for u in users.values()),
    )
    tasks = [(spec, d, main[d], None if cell is None else cell[d],
              utc_offset_min) for d in devices]
    results: Dict[str, Tuple[List[LabeledRecord], List[Stay]]] = {}
    t_start = time.perf_counter()
    sampler = _MemorySampler() if sample_memory else None
    if sampler:
        sampler.__enter__()
    try:
        if workers <= 1 or len(tasks) <= 1:
            outs = map(_worker, tasks)
        else:
            pool = ProcessPoolExecutor(max_workers=workers)
            outs = pool.map(_worker, tasks, chunksize=max(1, len(tasks) // (workers * 4)))
        raw_stage_seconds = [0.0] * len(spec.stages)
        for device, labeled, stays, seconds in outs:
            results[device] = (labeled, stays)
            for i, s in enumerate(seconds):
                raw_stage_seconds[i] += s
        if workers > 1 and len(tasks) > 1:
            pool.shutdown()
    finally:
        if sampler:
            sampler.__exit__()
            profile.memory_samples_mb = sampler.samples
    profile.total_seconds = time.perf_counter() - t_start
    # With parallel workers the per-stage sums are CPU seconds and can
    # exceed the wall clock; attribute elapsed time proportionally so
    # stage times always sum to <= total.
    raw_total = sum(raw_stage_seconds)
    if raw_total > 0:
        scale = min(1.0, profile.total_seconds / raw_total)
        profile.stage_seconds = [s * scale for s in raw_stage_seconds]
    now = time.time()
    acc = 0.0
    profile.stage_completed_at = []
    for s in profile.stage_seconds:
        acc += s
        profile.stage_completed_at.append(now - profile.total_seconds + acc)
    profile.output_rows = sum(
        len(lab) + len(st) for lab, st in results.values())
    return results, profile


def stays_by_user(results: Mapping[str, Tuple[List[LabeledRecord], List[Stay]]]
                  ) -> Dict[str, List[Stay]]:
    return {d: st for d, (_, st) in results.items()}


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    metrics: "MobilityMetrics"
    profile: RunProfile


@dataclass(frozen=True)
class ComparisonReport:
    rows: Tuple[ComparisonRow, ...]
    cohort: Tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "cohort_size": len(self.cohort),
            "rows": [
                {
                    "name": r.name,
                    "trips_per_person_day": r.metrics.trips_per_person_day,
                    "rg_km_per_person_day": r.metrics.rg_km_per_person_day,
                    "users_included": r.metrics.users_included,
                    "departure_histogram": list(r.metrics.departure_histogram),
                    "total_seconds": r.profile.total_seconds,
                }
                for r in self.rows
            ],
        }


def compare_workflows(specs: Sequence[WorkflowSpec],
                      users: Mapping[str, UserRecords],
                      workers: int = 1, utc_offset_min: int = 0,
                      accuracy_split_m: Optional[float] = None) -> ComparisonReport:
    """Run each workflow and compute metrics on the shared cohort of
    users that have at least one stay under every workflow."""
    from .metrics import aggregate_metrics

    if len(specs) < 2:
        raise UsageError("compare_workflows needs at least two workflows")
    runs = []
    for spec in specs:
        results, profile = execute_workflow(
            spec, users, workers=workers, utc_offset_min=utc_offset_min,
            accuracy_split_m=accuracy_split_m)
        runs.append((spec, stays_by_user(results), profile))
    cohort = sorted(
        d for d in users
        if all(stays.get(d) for _, stays, _ in runs))
    rows = tuple(
        ComparisonRow(spec.name,
                      aggregate_metrics(stays, cohort=cohort,
                                        utc_offset_min=utc_offset_min),
                      profile)
        for spec, stays, profile in runs)
    return ComparisonReport(rows=rows, cohort=tuple(cohort))


@dataclass(frozen=True)
class ScalingResult:
    sizes_bytes: Tuple[int, ...]
    seconds: Tuple[float, ...]
    slope: float
    intercept: float
    r_squared: Optional[float]
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "sizes_bytes": list(self.sizes_bytes),
            "seconds": list(self.seconds),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "degenerate": self.degenerate,
        }


def _corpus_csv_bytes(users: Mapping[str, UserRecords]) -> int:
    from .dataio import write_records_csv

    with tempfile.NamedTemporaryFile(suffix=".csv", delete=False) as fh:
        path = Path(fh.name)
    try:
        write_records_csv(users, path)
        return path.stat().st_size
    finally:
        path.unlink(missing_ok=True)


def scaling_probe(spec: WorkflowSpec, target_bytes: Sequence[int],
                  base_cfg=None, workers: int = 1) -> ScalingResult:
    """Time the workflow on synthetic corpora near each requested CSV
    size and fit seconds = slope * bytes + intercept by least squares."""
    from .synth import SynthConfig, generate

    if len(target_bytes) < 3:
        raise UsageError("scaling_probe needs at least three sizes")
    cfg = base_cfg if base_cfg is not None else SynthConfig(seed=7, n_users=1)
    one_user, _ = generate(replace(cfg, n_users=1))
    per_user = max(1, _corpus_csv_bytes(one_user))
    sizes: List[int] = []
    secs: List[float] = []
    for target in target_bytes:
        n_users = max(1, round(target / per_user))
        users, _ = generate(replace(cfg, n_users=n_users))
        size = _corpus_csv_bytes(users)
        t0 = time.perf_counter()
        execute_workflow(spec, users, workers=workers)
        secs.append(time.perf_counter() - t0)
        sizes.append(size)
    x = np.array(sizes, dtype=np.float64)
    y = np.array(secs, dtype=np.float64)
    if np.ptp(x) == 0.0:
        return ScalingResult(tuple(sizes), tuple(secs), 0.0, float(np.mean(y)),
                             None, True)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return ScalingResult(tuple(sizes), tuple(secs), float(slope),
                             float(intercept), None, True)
    return ScalingResult(tuple(sizes), tuple(secs), float(slope),
                         float(intercept), 1.0 - ss_res / ss_tot, False)
