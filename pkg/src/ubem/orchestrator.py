"""Batch execution of per-building work plus cluster planning estimators.

The runner fans building tasks over worker processes. Each worker parses the
weather file and archetype table once in its initializer; tasks then carry only
the building payload. Failed tasks are retried a bounded number of times and
then marked failed; a failure fraction above the abort threshold kills the run.

Result rows are keyed and sorted by parcel id, and the results CSV contains
only deterministic columns, so the same inputs give byte-identical output no
matter how many workers ran or how tasks interleaved. Wall-clock timings go to
sidecar files excluded from that guarantee.

Planning helpers estimate how the same workload would behave on a cluster:
a longest-processing-time greedy packs measured durations onto cores, and the
classic headroom estimate subtracts the mean of the ten largest tasks from the
serial total.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .archetypes import VARIANT_BASELINE, ArchetypeTable, bundled_table, load_archetype_table
from .engine import (
    SimResult,
    SolarContext,
    make_forcing,
    make_solar_context,
    simulate_dynamic,
    zone_params_from_model,
)
from .geometry import Polygon
from .lod1 import (
    BuildingModel,
    build_bare_model,
    build_horizon,
    collect_neighbors,
    model_from_dict,
    model_to_dict,
)
from .weather import parse_epw

TASK_GENERATE_MODEL = "GENERATE_MODEL"
TASK_SIMULATE = "SIMULATE"

DEFAULT_RETRIES = 2
DEFAULT_ABORT_FRACTION = 0.10
DEFAULT_CHUNK_SIZE = 64


class RunAbortedError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunnerConfig:
    workers: int = 1
    retries: int = DEFAULT_RETRIES
    abort_failure_fraction: float = DEFAULT_ABORT_FRACTION
    chunk_size: int = DEFAULT_CHUNK_SIZE


@dataclass
class RunReport:
    workers: int
    tasks: int
    completed: int
    failed: int
    retried: int
    wall_s: float
    failed_parcels: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "workers": self.workers,
            "tasks": self.tasks,
            "completed": self.completed,
            "failed": self.failed,
            "retried": self.retried,
            "wall_s": self.wall_s,
            "throughput_per_s": self.completed / self.wall_s if self.wall_s > 0 else 0.0,
            "failed_parcels": sorted(self.failed_parcels),
        }


@dataclass(frozen=True)
class BuildingResult:
    parcel_id: str
    period: str
    neighborhood_id: str
    floor_area_m2: float
    result: SimResult
    duration_s: float = 0.0

    @property
    def heating_kwh(self) -> float:
        return self.result.heating_kwh

    @property
    def cooling_kwh(self) -> float:
        return self.result.cooling_kwh

    @property
    def heating_kwh_m2(self) -> float:
        return self.result.heating_kwh / self.floor_area_m2

    @property
    def cooling_kwh_m2(self) -> float:
        return self.result.cooling_kwh / self.floor_area_m2

    @property
    def total_kwh_m2(self) -> float:
        return self.heating_kwh_m2 + self.cooling_kwh_m2


# Worker-global state, populated once per process by the pool initializer.
_WORKER: dict = {}


def _init_worker(epw_path: str, table_path: str | None) -> None:
    series = parse_epw(epw_path)
    _WORKER["ctx"] = make_solar_context(series)
    _WORKER["table"] = (
        load_archetype_table(table_path) if table_path else bundled_table()
    )


def _simulate_payload(payload: dict) -> dict:
    start = time.perf_counter()
    model = model_from_dict(payload["model"])
    variant = payload.get("variant", VARIANT_BASELINE)
    ctx: SolarContext = _WORKER["ctx"]
    table: ArchetypeTable = _WORKER["table"]
    spec = table.get(model.period, variant)
    params = zone_params_from_model(model, spec)
    result = simulate_dynamic(params, make_forcing(model, spec, ctx))
    return {
        "parcel_id": model.parcel_id,
        "period": model.period.name,
        "neighborhood_id": model.neighborhood_id,
        "floor_area_m2": model.floor_area_m2,
        "heating_kwh_monthly": list(result.heating_kwh_monthly),
        "cooling_kwh_monthly": list(result.cooling_kwh_monthly),
        "duration_s": time.perf_counter() - start,
    }


def run_tasks(
    payloads: list[dict],
    task_fn,
    config: RunnerConfig,
    init_fn=None,
    init_args: tuple = (),
    task_key=lambda p: p.get("parcel_id", ""),
) -> tuple[list, RunReport]:
    """Run payloads through task_fn with retries; results keep submission order.

    With one worker everything runs in-process; more workers use a process
    pool whose initializer is init_fn(*init_args).
    """
    start = time.perf_counter()
    n = len(payloads)
    results: list = [None] * n
    failed: dict[int, str] = {}
    pending = list(range(n))
    retried = 0

    def run_round(indices: list[int]) -> list[int]:
        failures = []
        if config.workers <= 1:
            for i in indices:
                try:
                    results[i] = task_fn(payloads[i])
                except Exception as exc:
                    failures.append(i)
                    failed[i] = f"{type(exc).__name__}: {exc}"
        else:
            with ProcessPoolExecutor(
                max_workers=config.workers,
                initializer=init_fn,
                initargs=init_args,
            ) as pool:
                futures = {pool.submit(task_fn, payloads[i]): i for i in indices}
                for fut, i in futures.items():
                    try:
                        results[i] = fut.result()
                    except Exception as exc:
                        failures.append(i)
                        failed[i] = f"{type(exc).__name__}: {exc}"
        return sorted(failures)

    if config.workers <= 1 and init_fn is not None:
        init_fn(*init_args)
    pending = run_round(pending)
    for _ in range(config.retries):
        if not pending:
            break
        retried += len(pending)
        for i in pending:
            failed.pop(i, None)
        pending = run_round(pending)

    failed_keys = sorted(task_key(payloads[i]) for i in pending)
    completed = [r for r in results if r is not None]
    wall = time.perf_counter() - start
    report = RunReport(
        workers=config.workers,
        tasks=n,
        completed=len(completed),
        failed=len(pending),
        retried=retried,
        wall_s=wall,
        failed_parcels=failed_keys,
    )
    if n > 0 and len(pending) / n > config.abort_failure_fraction:
        raise RunAbortedError(
            f"{len(pending)} of {n} tasks failed "
            f"(threshold {config.abort_failure_fraction:.0%}); first errors: "
            + "; ".join(failed[i] for i in pending[:3])
        )
    return completed, report


def _generate_payload(payload: dict) -> dict:
    start = time.perf_counter()
    footprint = Polygon.from_coords(payload["exterior"], payload.get("holes", []))
    model = build_bare_model(
        parcel_id=payload["parcel_id"],
        footprint=footprint,
        height_m=payload["height_m"],
        year=payload.get("year"),
        neighborhood_id=payload["neighborhood_id"],
    )
    out = model_to_dict(model)
    out["duration_s"] = time.perf_counter() - start
    return out


def generate_models_stock(
    records,
    heights_by_parcel: dict[str, float],
    shading_radius_m: float,
    config: RunnerConfig = RunnerConfig(),
) -> tuple[list[BuildingModel], RunReport]:
    """Per-building geometry as a task wave, then horizons once all heights exist."""
    payloads = []
    for rec in sorted(records, key=lambda r: r.parcel_id):
        if rec.parcel_id not in heights_by_parcel:
            raise KeyError(f"no extracted height for parcel {rec.parcel_id}")
        payloads.append({
            "parcel_id": rec.parcel_id,
            "exterior": [list(p) for p in rec.footprint.exterior],
            "holes": [[list(p) for p in h] for h in rec.footprint.holes],
            "height_m": heights_by_parcel[rec.parcel_id],
            "year": rec.year,
            "neighborhood_id": rec.neighborhood_id,
        })
    raw, report = run_tasks(payloads, _generate_payload, config)
    models = []
    for obj in raw:
        obj = dict(obj)
        obj.pop("duration_s", None)
        models.append(model_from_dict(obj))
    models.sort(key=lambda m: m.parcel_id)
    neighbor_map = collect_neighbors(models, shading_radius_m)
    for model in models:
        model.horizon = build_horizon(model, neighbor_map[model.parcel_id])
    return models, report


def simulate_stock(
    models: list[BuildingModel],
    epw_path: str | Path,
    config: RunnerConfig = RunnerConfig(),
    variant_by_parcel: dict[str, str] | None = None,
    archetype_csv: str | Path | None = None,
) -> tuple[list[BuildingResult], RunReport]:
    """Simulate every model with its assigned variant; rows come back id-sorted."""
    ordered = sorted(models, key=lambda m: m.parcel_id)
    payloads = []
    for model in ordered:
        variant = VARIANT_BASELINE
        if variant_by_parcel is not None:
            variant = variant_by_parcel.get(model.parcel_id, VARIANT_BASELINE)
        payloads.append({
            "parcel_id": model.parcel_id,
            "model": model_to_dict(model),
            "variant": variant,
        })
    table_arg = str(archetype_csv) if archetype_csv else None
    raw, report = run_tasks(
        payloads,
        _simulate_payload,
        config,
        init_fn=_init_worker,
        init_args=(str(epw_path), table_arg),
    )
    out = [
        BuildingResult(
            parcel_id=r["parcel_id"],
            period=r["period"],
            neighborhood_id=r["neighborhood_id"],
            floor_area_m2=r["floor_area_m2"],
            result=SimResult(
                heating_kwh_monthly=tuple(r["heating_kwh_monthly"]),
                cooling_kwh_monthly=tuple(r["cooling_kwh_monthly"]),
            ),
            duration_s=r["duration_s"],
        )
        for r in raw
    ]
    out.sort(key=lambda r: r.parcel_id)
    return out, report


RESULT_COLUMNS = (
    "parcel_id",
    "period",
    "neighborhood_id",
    "floor_area_m2",
    "heating_kwh",
    "cooling_kwh",
    "heating_kwh_m2",
    "cooling_kwh_m2",
    "total_kwh_m2",
)


def write_results_csv(results: list[BuildingResult], path: str | Path) -> None:
    """Deterministic simulation results: same inputs, same bytes, any worker count."""
    ordered = sorted(results, key=lambda r: r.parcel_id)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in ordered:
            writer.writerow([
                r.parcel_id,
                r.period,
                r.neighborhood_id,
                repr(r.floor_area_m2),
                repr(r.heating_kwh),
                repr(r.cooling_kwh),
                repr(r.heating_kwh_m2),
                repr(r.cooling_kwh_m2),
                repr(r.total_kwh_m2),
            ])


def read_results_csv(path: str | Path) -> list[BuildingResult]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            heating = float(row["heating_kwh"])
            cooling = float(row["cooling_kwh"])
            # annual totals only; monthly detail lives in the run, not the file
            out.append(
                BuildingResult(
                    parcel_id=row["parcel_id"],
                    period=row["period"],
                    neighborhood_id=row["neighborhood_id"],
                    floor_area_m2=float(row["floor_area_m2"]),
                    result=SimResult(
                        heating_kwh_monthly=(heating,) + (0.0,) * 11,
                        cooling_kwh_monthly=(cooling,) + (0.0,) * 11,
                    ),
                )
            )
    return out


def write_timings_csv(results: list[BuildingResult], path: str | Path) -> None:
    """Wall-clock sidecar; excluded from the byte-identity contract."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("parcel_id", "duration_s"))
        for r in sorted(results, key=lambda r: r.parcel_id):
            writer.writerow((r.parcel_id, f"{r.duration_s:.6f}"))


def write_run_report(report: RunReport, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(report.as_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def simulate_makespan(durations_s: list[float], cores: int) -> float:
    """Longest-processing-time greedy: biggest task first onto the laziest core."""
    import heapq

    if cores <= 0:
        raise ValueError("cores must be positive")
    if not durations_s:
        return 0.0
    loads = [(0.0, i) for i in range(cores)]
    heapq.heapify(loads)
    for d in sorted(durations_s, reverse=True):
        if d < 0 or not math.isfinite(d):
            raise ValueError("durations must be finite and non-negative")
        load, idx = heapq.heappop(loads)
        heapq.heappush(loads, (load + d, idx))
    return max(load for load, _ in loads)


def estimate_speedup_potential(durations_s: list[float], top_n: int = 10) -> float:
    """Achievable wall-time reduction: serial total minus the mean of the largest tasks.

    The mean of the ten largest durations approximates the floor a perfectly
    balanced run cannot beat, so total minus that mean is the room parallelism
    has to claw back.
    """
    if not durations_s:
        return 0.0
    largest = sorted(durations_s, reverse=True)[:top_n]
    return sum(durations_s) - sum(largest) / len(largest)


@dataclass(frozen=True)
class CostModel:
    """Per-building run-time estimate: a base plus a term per shading neighbor."""

    base_s: float = 75.0
    per_neighbor_s: float = 0.4

    def duration_s(self, neighbor_count: int) -> float:
        return self.base_s + self.per_neighbor_s * neighbor_count


def neighbor_counts(models: list[BuildingModel], radius_m: float) -> list[int]:
    from scipy.spatial import cKDTree

    pts = [(m.centroid_x, m.centroid_y) for m in models]
    tree = cKDTree(pts)
    return [len(tree.query_ball_point(p, r=radius_m)) - 1 for p in pts]


def scaling_surface(
    models: list[BuildingModel],
    radii_m: list[float],
    node_counts: list[int],
    cores_per_node: int = 112,
    cost: CostModel = CostModel(),
) -> list[dict]:
    """Estimated makespan for every (shading radius, node count) combination."""
    rows = []
    for radius in radii_m:
        counts = neighbor_counts(models, radius)
        durations = [cost.duration_s(c) for c in counts]
        for nodes in node_counts:
            makespan = simulate_makespan(durations, nodes * cores_per_node)
            rows.append({
                "radius_m": radius,
                "nodes": nodes,
                "cores": nodes * cores_per_node,
                "est_makespan_s": makespan,
                "serial_s": sum(durations),
            })
    return rows


def write_scaling_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("radius_m", "nodes", "cores", "est_makespan_s", "serial_s"))
        for r in rows:
            writer.writerow([
                repr(float(r["radius_m"])),
                r["nodes"],
                r["cores"],
                repr(float(r["est_makespan_s"])),
                repr(float(r["serial_s"])),
            ])
