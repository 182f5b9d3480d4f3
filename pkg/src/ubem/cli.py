"""Command line entry point: one subcommand per pipeline stage.

Stages hand work to each other through files under the output directory,
one subdirectory per stage, so any stage can be re-run in isolation and
inspected on disk. Running a stage before its inputs exist fails with a
message naming the subcommand that produces them. Every stage drops a
config_echo.json recording the resolved configuration it ran with.

    synth       generate the synthetic town (GIS layers, rasters, weather)
    ingest      join the GIS layers into building records
    heights     merge volumetric heights with raster extraction
    genmodels   extrude prism models and build shading horizons
    simulate    run the thermal engine over the stock, both variants
    scenarios   score all retrofit scenarios and the efficient front
    report      write the full analysis bundle
    bench       scaling estimates and measured engine throughput
    sensitivity shading-radius sweep with elbow detection
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .analytics import (
    calibration_report,
    elbow_radius,
    emit_report,
    radius_sensitivity,
    read_sensitivity_csv,
    write_sensitivity_csv,
)
from .archetypes import VARIANT_RETROFIT, bundled_table_path, load_archetype_table
from .config import PipelineConfig, bundled_config_path, load_config
from .engine import make_solar_context
from .geoingest import ingest_dataset, read_buildings, write_buildings
from .lod1 import read_models, write_models
from .orchestrator import (
    RunAbortedError,
    RunnerConfig,
    generate_models_stock,
    read_results_csv,
    scaling_surface,
    simulate_stock,
    write_results_csv,
    write_run_report,
    write_scaling_csv,
    write_timings_csv,
)
from .scenarios import (
    evaluate_scenarios,
    pair_results,
    pareto_front,
    write_before_after_csv,
    write_binary_map_csv,
    write_front_csv,
    write_neighborhood_savings_csv,
    write_scenarios_csv,
)
from .synthcity import generate
from .terrain import extract_height, load_raster
from .weather import HOURS_PER_YEAR, parse_epw


class StageError(RuntimeError):
    """A stage cannot run; the message says what to do about it."""


# Default location of each pipeline input when [paths] does not override it:
# the file the synth stage writes.
_SYNTH_PRODUCTS = {
    "footprints": "footprints.geojson",
    "volumetrics": "volumetrics.geojson",
    "civics": "civics.geojson",
    "neighborhoods": "neighborhoods.geojson",
    "dsm": "dsm.asc",
    "dtm": "dtm.asc",
    "epw": "weather.epw",
}


def _resolve_input(cfg: PipelineConfig, key: str) -> Path:
    explicit = cfg.inputs.get(key)
    if explicit is not None:
        explicit = Path(explicit)
        if not explicit.exists():
            raise StageError(f"configured {key} path {explicit} does not exist")
        return explicit
    if key == "archetype_table":
        return bundled_table_path()
    path = cfg.outdir / "synth" / _SYNTH_PRODUCTS[key]
    return _require(path, "synth")


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise StageError(f'missing {path}; run the "{producer}" subcommand first')
    return path


def _stage_dir(cfg: PipelineConfig, name: str) -> Path:
    path = cfg.outdir / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _echo_config(cfg: PipelineConfig, stage: str, overrides: dict, stage_path: Path) -> None:
    _write_json(
        {"stage": stage, "config": cfg.as_dict(), "overrides": overrides},
        stage_path / "config_echo.json",
    )


def _runner(cfg: PipelineConfig, workers: int = 1) -> RunnerConfig:
    return RunnerConfig(workers=workers, retries=cfg.retries)


# ------------------------------------------------------------------- stages

def cmd_synth(cfg: PipelineConfig, args) -> str:
    synth_cfg = cfg.synth
    overrides = {}
    if args.seed is not None:
        synth_cfg = replace(synth_cfg, seed=args.seed)
        overrides["seed"] = args.seed
    if args.n_buildings is not None:
        synth_cfg = replace(synth_cfg, n_buildings=args.n_buildings)
        overrides["n_buildings"] = args.n_buildings
    sdir = _stage_dir(cfg, "synth")
    manifest = generate(synth_cfg, sdir)
    _echo_config(cfg, "synth", overrides, sdir)
    return (
        f"synth: {manifest['n_buildings']} buildings "
        f"({manifest['n_volumetric']} with volumetric height) -> {sdir}"
    )


def cmd_ingest(cfg: PipelineConfig, args) -> str:
    layers = {k: _resolve_input(cfg, k) for k in ("footprints", "volumetrics", "civics", "neighborhoods")}
    records, report = ingest_dataset(
        layers["footprints"], layers["volumetrics"], layers["civics"], layers["neighborhoods"]
    )
    idir = _stage_dir(cfg, "ingest")
    write_buildings(records, idir / "buildings.jsonl")
    _write_json(report.as_dict(), idir / "ingest_report.json")
    _echo_config(cfg, "ingest", {}, idir)
    return f"ingest: {len(records)} building records -> {idir}"


def cmd_heights(cfg: PipelineConfig, args) -> str:
    buildings_path = _require(cfg.outdir / "ingest" / "buildings.jsonl", "ingest")
    dsm = load_raster(_resolve_input(cfg, "dsm"))
    dtm = load_raster(_resolve_input(cfg, "dtm"))
    records = read_buildings(buildings_path)
    heights: dict[str, float] = {}
    n_vol = n_raster = 0
    for rec in records:
        if rec.height_m is not None:
            heights[rec.parcel_id] = rec.height_m
            n_vol += 1
        else:
            sample = extract_height(rec.footprint, dsm, dtm, parcel_id=rec.parcel_id)
            heights[rec.parcel_id] = sample.height_m
            n_raster += 1
    hdir = _stage_dir(cfg, "heights")
    with (hdir / "heights.json").open("w", newline="\n") as fh:
        json.dump(heights, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_json(
        {"from_volumetrics": n_vol, "from_rasters": n_raster},
        hdir / "heights_report.json",
    )
    _echo_config(cfg, "heights", {}, hdir)
    return f"heights: {n_vol} from volumetrics, {n_raster} from rasters -> {hdir}"


def cmd_genmodels(cfg: PipelineConfig, args) -> str:
    buildings_path = _require(cfg.outdir / "ingest" / "buildings.jsonl", "ingest")
    heights_path = _require(cfg.outdir / "heights" / "heights.json", "heights")
    radius = cfg.radius_m
    overrides = {}
    if args.radius is not None:
        if args.radius < 0:
            raise StageError("--radius must be >= 0")
        radius = args.radius
        overrides["radius_m"] = radius
    records = read_buildings(buildings_path)
    heights = json.loads(heights_path.read_text())
    models, report = generate_models_stock(records, heights, radius)
    gdir = _stage_dir(cfg, "genmodels")
    write_models(models, gdir / "models.jsonl")
    _write_json({"radius_m": radius, "n_models": len(models)}, gdir / "meta.json")
    write_run_report(report, gdir / "run_report.json")
    _echo_config(cfg, "genmodels", overrides, gdir)
    return f"genmodels: {len(models)} models, shading radius {radius:g} m -> {gdir}"


def cmd_simulate(cfg: PipelineConfig, args) -> str:
    models_path = _require(cfg.outdir / "genmodels" / "models.jsonl", "genmodels")
    meta = json.loads((cfg.outdir / "genmodels" / "meta.json").read_text())
    overrides = {}
    if args.radius is not None and args.radius != meta["radius_m"]:
        raise StageError(
            f"models were generated with radius {meta['radius_m']:g} m; "
            f're-run the "genmodels" subcommand with --radius {args.radius:g} first'
        )
    workers = cfg.workers
    if args.workers is not None:
        if args.workers < 1:
            raise StageError("--workers must be >= 1")
        workers = args.workers
        overrides["workers"] = workers
    epw_path = _resolve_input(cfg, "epw")
    table_path = _resolve_input(cfg, "archetype_table")
    models = read_models(models_path)
    runner = _runner(cfg, workers)

    sdir = _stage_dir(cfg, "simulate")
    baseline, base_report = simulate_stock(models, epw_path, runner, None, table_path)
    write_results_csv(baseline, sdir / "results.csv")
    write_timings_csv(baseline, sdir / "timings.csv")
    write_run_report(base_report, sdir / "run_report.json")

    retrofit_variants = {m.parcel_id: VARIANT_RETROFIT for m in models}
    retrofit, retro_report = simulate_stock(models, epw_path, runner, retrofit_variants, table_path)
    write_results_csv(retrofit, sdir / "results_retrofit.csv")
    write_timings_csv(retrofit, sdir / "timings_retrofit.csv")
    write_run_report(retro_report, sdir / "run_report_retrofit.json")

    _echo_config(cfg, "simulate", overrides, sdir)
    return (
        f"simulate: {len(baseline)} buildings x 2 variants with "
        f"{workers} worker(s) -> {sdir}"
    )


def cmd_scenarios(cfg: PipelineConfig, args) -> str:
    sim_dir = cfg.outdir / "simulate"
    baseline = read_results_csv(_require(sim_dir / "results.csv", "simulate"))
    retrofit = read_results_csv(_require(sim_dir / "results_retrofit.csv", "simulate"))
    pairs = pair_results(baseline, retrofit)
    outcomes = evaluate_scenarios(pairs)
    front = pareto_front(outcomes)
    from .scenarios import neighborhood_savings

    savings, _ = neighborhood_savings(pairs)
    cdir = _stage_dir(cfg, "scenarios")
    write_scenarios_csv(outcomes, cdir / "scenarios.csv")
    write_front_csv(front, cdir / "front.csv")
    write_binary_map_csv(front, cdir / "binary_map.csv")
    write_neighborhood_savings_csv(savings, cdir / "neighborhood_savings.csv")
    write_before_after_csv(pairs, cdir / "before_after.csv")
    _echo_config(cfg, "scenarios", {}, cdir)
    return f"scenarios: {len(outcomes)} evaluated, front holds {len(front)} -> {cdir}"


def cmd_report(cfg: PipelineConfig, args) -> str:
    sim_dir = cfg.outdir / "simulate"
    baseline = read_results_csv(_require(sim_dir / "results.csv", "simulate"))
    retrofit = read_results_csv(_require(sim_dir / "results_retrofit.csv", "simulate"))
    models = read_models(_require(cfg.outdir / "genmodels" / "models.jsonl", "genmodels"))
    epw_path = _resolve_input(cfg, "epw")
    table = load_archetype_table(_resolve_input(cfg, "archetype_table"))
    ctx = make_solar_context(parse_epw(epw_path))
    cal_rows = calibration_report(models, ctx, table)

    sens_csv = cfg.outdir / "sensitivity" / "sensitivity.csv"
    sensitivity = read_sensitivity_csv(sens_csv) if sens_csv.exists() else None

    rdir = _stage_dir(cfg, "report")
    summary = emit_report(
        rdir,
        baseline,
        retrofit,
        cal_rows,
        sensitivity=sensitivity,
        emission_factor=cfg.emission_factor_t_per_tj,
    )
    _echo_config(cfg, "report", {}, rdir)
    return (
        f"report: {summary['buildings']} buildings, front {summary['front_size']}, "
        f"co2 {summary['co2_intensity_kg_m2']:.2f} kg/m2 -> {rdir}"
    )


def cmd_bench(cfg: PipelineConfig, args) -> str:
    models = read_models(_require(cfg.outdir / "genmodels" / "models.jsonl", "genmodels"))
    epw_path = _resolve_input(cfg, "epw")
    table_path = _resolve_input(cfg, "archetype_table")
    nodes = list(args.nodes) if args.nodes else list(cfg.bench_nodes)
    radii = list(args.radii) if args.radii else list(cfg.bench_radii)
    overrides = {}
    if args.nodes:
        overrides["nodes"] = nodes
    if args.radii:
        overrides["radii"] = radii

    bdir = _stage_dir(cfg, "bench")
    rows = scaling_surface(models, radii, nodes, cfg.cores_per_node)
    write_scaling_csv(rows, bdir / "scaling.csv")

    start = time.perf_counter()
    results, run_report = simulate_stock(models, epw_path, _runner(cfg, cfg.workers), None, table_path)
    wall_s = time.perf_counter() - start
    rate = len(results) / wall_s if wall_s > 0 else float("inf")
    _write_json(
        {
            "n_buildings": len(results),
            "hours_per_building": HOURS_PER_YEAR,
            "workers": cfg.workers,
            "wall_s": wall_s,
            "buildings_per_s": rate,
            "building_hours_per_s": rate * HOURS_PER_YEAR,
            "projected_minutes_for_25k": 25_000.0 / rate / 60.0,
        },
        bdir / "bench_report.json",
    )
    _echo_config(cfg, "bench", overrides, bdir)
    return (
        f"bench: {len(rows)} scaling rows, measured {rate:.1f} buildings/s "
        f"({rate * HOURS_PER_YEAR:,.0f} building-hours/s) -> {bdir}"
    )


def cmd_sensitivity(cfg: PipelineConfig, args) -> str:
    buildings_path = _require(cfg.outdir / "ingest" / "buildings.jsonl", "ingest")
    heights_path = _require(cfg.outdir / "heights" / "heights.json", "heights")
    epw_path = _resolve_input(cfg, "epw")
    table_path = _resolve_input(cfg, "archetype_table")
    radii = list(args.radii) if args.radii else list(cfg.sensitivity_radii)
    overrides = {"radii": radii} if args.radii else {}

    records = read_buildings(buildings_path)
    heights = json.loads(heights_path.read_text())
    results_by_radius = {}
    for radius in radii:
        models, _ = generate_models_stock(records, heights, radius)
        results, _ = simulate_stock(models, epw_path, _runner(cfg), None, table_path)
        results_by_radius[radius] = results
    points = radius_sensitivity(results_by_radius)
    elbow = None
    if len(points) >= 3:
        elbow = elbow_radius(
            [p.radius_m for p in points], [p.mean_total_kwh_m2 for p in points]
        )

    xdir = _stage_dir(cfg, "sensitivity")
    write_sensitivity_csv(points, xdir / "sensitivity.csv")
    _write_json(
        {"radii_m": radii, "elbow_radius_m": elbow}, xdir / "sensitivity_report.json"
    )
    _echo_config(cfg, "sensitivity", overrides, xdir)
    elbow_text = f"elbow at {elbow:g} m" if elbow is not None else "no elbow (fewer than 3 radii)"
    return f"sensitivity: {len(radii)} radii swept, {elbow_text} -> {xdir}"


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "heights": cmd_heights,
    "genmodels": cmd_genmodels,
    "simulate": cmd_simulate,
    "scenarios": cmd_scenarios,
    "report": cmd_report,
    "bench": cmd_bench,
    "sensitivity": cmd_sensitivity,
}


def _int_list(raw: str) -> tuple:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _float_list(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ubem",
        description="Urban building energy pipeline: synthetic town to retrofit report.",
    )
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="pipeline config file (default: the bundled one)",
    )
    parser.add_argument(
        "--outdir", type=Path, default=None, help="override the configured output directory"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="stage")

    p = sub.add_parser("synth", help="generate the synthetic town inputs")
    p.add_argument("--seed", type=int, default=None, help="override the town seed")
    p.add_argument("--n-buildings", type=int, default=None, help="override the stock size")

    sub.add_parser("ingest", help="join GIS layers into building records")
    sub.add_parser("heights", help="attach a height to every building")

    p = sub.add_parser("genmodels", help="build prism models with shading horizons")
    p.add_argument("--radius", type=float, default=None, help="shading search radius in meters")

    p = sub.add_parser("simulate", help="simulate the stock, baseline and retrofit")
    p.add_argument("--radius", type=float, default=None,
                   help="assert the shading radius the models were generated with")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")

    sub.add_parser("scenarios", help="score retrofit scenarios and the efficient front")
    sub.add_parser("report", help="write the full analysis bundle")

    p = sub.add_parser("bench", help="scaling estimates and measured throughput")
    p.add_argument("--nodes", type=_int_list, default=None, help="node counts, e.g. 1,2,4")
    p.add_argument("--radii", type=_float_list, default=None, help="radii in meters, e.g. 10,30,60")

    p = sub.add_parser("sensitivity", help="sweep the shading radius")
    p.add_argument("--radii", type=_float_list, default=None, help="radii in meters, e.g. 10,20,40")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config if args.config is not None else bundled_config_path())
        if args.outdir is not None:
            cfg.outdir = args.outdir
        message = COMMANDS[args.command](cfg, args)
    except (ValueError, StageError, RunAbortedError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
