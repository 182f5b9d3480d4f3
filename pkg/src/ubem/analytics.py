"""Stock-level assessment: distributions, cumulative curves, emissions,
shading-radius sensitivity, and the dynamic vs quasi-steady comparison.

Everything here aggregates immutable result tables into CSV-ready rows. The
writers format floats with repr so a rerun over the same inputs produces the
same bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archetypes import PERIODS, ArchetypePeriod, ArchetypeTable, VARIANT_BASELINE
from .engine import (
    SolarContext,
    make_forcing,
    simulate_dynamic,
    simulate_quasi_steady,
    zone_params_from_model,
)
from .lod1 import BuildingModel
from .orchestrator import BuildingResult

HISTOGRAM_MAX_KWH_M2 = 400.0
HISTOGRAM_BIN_WIDTH = 10.0
N_HISTOGRAM_BINS = int(HISTOGRAM_MAX_KWH_M2 / HISTOGRAM_BIN_WIDTH)

DEFAULT_EMISSION_FACTOR_T_PER_TJ = 59.182
TJ_PER_KWH = 3.6e-6
KG_PER_T = 1000.0


class AnalyticsError(ValueError):
    pass


# ---------------------------------------------------------------- histograms

@dataclass(frozen=True)
class HistogramRow:
    period: ArchetypePeriod
    n: int
    counts: tuple[int, ...]
    overflow: int
    mean: float
    median: float
    skewness: float


def _skewness(values: np.ndarray) -> float:
    """Fisher-Pearson moment coefficient, biased form m3 / m2^1.5."""
    if values.size < 2:
        return 0.0
    centered = values - values.mean()
    m2 = float(np.mean(centered ** 2))
    if m2 == 0.0:
        return 0.0
    m3 = float(np.mean(centered ** 3))
    return m3 / m2 ** 1.5


def intensity_histograms(results: list[BuildingResult]) -> list[HistogramRow]:
    """Total-intensity histogram per construction period, fixed 10 kWh/m2 bins.

    Intensities at or beyond 400 kWh/m2 land in the overflow bucket so the
    counts of every row still sum to that period's building count.
    """
    values: dict[ArchetypePeriod, list[float]] = {p: [] for p in PERIODS}
    for r in results:
        values[ArchetypePeriod[r.period]].append(r.total_kwh_m2)
    rows = []
    for period in PERIODS:
        vals = np.asarray(values[period], dtype=float)
        counts = [0] * N_HISTOGRAM_BINS
        overflow = 0
        for v in vals:
            idx = int(v // HISTOGRAM_BIN_WIDTH)
            if 0 <= idx < N_HISTOGRAM_BINS:
                counts[idx] += 1
            else:
                overflow += 1
        rows.append(
            HistogramRow(
                period=period,
                n=int(vals.size),
                counts=tuple(counts),
                overflow=overflow,
                mean=float(vals.mean()) if vals.size else 0.0,
                median=float(np.median(vals)) if vals.size else 0.0,
                skewness=_skewness(vals),
            )
        )
    return rows


def write_histograms_csv(rows: list[HistogramRow], path: str | Path) -> None:
    bin_names = [f"bin_{int(i * HISTOGRAM_BIN_WIDTH)}" for i in range(N_HISTOGRAM_BINS)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["period", "n", "mean", "median", "skewness"] + bin_names + ["overflow"])
        for row in rows:
            writer.writerow(
                [row.period.label, row.n, repr(row.mean), repr(row.median),
                 repr(row.skewness)] + list(row.counts) + [row.overflow]
            )


# ----------------------------------------------------------- cumulative curve

@dataclass(frozen=True)
class CumulativeCurve:
    """Cumulative energy share versus cumulative building share.

    Buildings are sorted by total energy descending, so the curve is concave
    and sits on or above the diagonal.
    """

    building_fraction: tuple[float, ...]
    energy_fraction: tuple[float, ...]

    def x_at_energy_share(self, target: float) -> float:
        if not 0.0 <= target <= 1.0:
            raise AnalyticsError("energy share target must be within [0, 1]")
        xs, ys = self.building_fraction, self.energy_fraction
        for i in range(1, len(ys)):
            if ys[i] >= target:
                if ys[i] == target or ys[i] == ys[i - 1]:
                    return xs[i]
                t = (target - ys[i - 1]) / (ys[i] - ys[i - 1])
                return xs[i - 1] + t * (xs[i] - xs[i - 1])
        return 1.0


def cumulative_curve(results: list[BuildingResult]) -> CumulativeCurve:
    if not results:
        raise AnalyticsError("no results to accumulate")
    energies = sorted((r.heating_kwh + r.cooling_kwh for r in results), reverse=True)
    total = sum(energies)
    if total <= 0.0:
        raise AnalyticsError("total energy is zero, cumulative curve is degenerate")
    n = len(energies)
    xs = [0.0]
    ys = [0.0]
    acc = 0.0
    for i, e in enumerate(energies, start=1):
        acc += e
        xs.append(i / n)
        ys.append(acc / total)
    return CumulativeCurve(tuple(xs), tuple(ys))


def write_cumulative_csv(curve: CumulativeCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("building_fraction", "energy_fraction"))
        for x, y in zip(curve.building_fraction, curve.energy_fraction):
            writer.writerow((repr(x), repr(y)))


# -------------------------------------------------------------------- CO2

@dataclass(frozen=True)
class EmissionEstimate:
    emission_factor_t_per_tj: float
    gas_energy_kwh: float
    co2_kg: float
    co2_intensity_kg_m2: float


def co2_from_kwh(kwh: float, factor: float = DEFAULT_EMISSION_FACTOR_T_PER_TJ) -> float:
    return kwh * TJ_PER_KWH * factor * KG_PER_T


def co2_estimate(
    results: list[BuildingResult], factor: float = DEFAULT_EMISSION_FACTOR_T_PER_TJ
) -> EmissionEstimate:
    """Gas-driven CO2 for the heating demand; cooling electricity is excluded."""
    if factor <= 0.0 or not math.isfinite(factor):
        raise AnalyticsError("emission factor must be a positive real")
    gas_kwh = sum(r.heating_kwh for r in results)
    floor_area = sum(r.floor_area_m2 for r in results)
    co2_kg = co2_from_kwh(gas_kwh, factor)
    return EmissionEstimate(
        emission_factor_t_per_tj=factor,
        gas_energy_kwh=gas_kwh,
        co2_kg=co2_kg,
        co2_intensity_kg_m2=co2_kg / floor_area if floor_area > 0 else 0.0,
    )


def write_co2_csv(est: EmissionEstimate, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("emission_factor_t_per_tj", "gas_energy_kwh", "co2_kg",
                         "co2_intensity_kg_m2"))
        writer.writerow((repr(est.emission_factor_t_per_tj), repr(est.gas_energy_kwh),
                         repr(est.co2_kg), repr(est.co2_intensity_kg_m2)))


# ------------------------------------------------------- radius sensitivity

@dataclass(frozen=True)
class SensitivityPoint:
    radius_m: float
    mean_heating_kwh_m2: float
    mean_cooling_kwh_m2: float
    mean_total_kwh_m2: float
    heating_delta_pct: float
    cooling_delta_pct: float
    total_delta_pct: float


def _delta_pct(value: float, reference: float) -> float:
    if reference == 0.0:
        return 0.0 if value == 0.0 else float("inf")
    return (value / reference - 1.0) * 100.0


def radius_sensitivity(
    results_by_radius: dict[float, list[BuildingResult]]
) -> list[SensitivityPoint]:
    """Relative change of mean intensities against the smallest-radius run."""
    if not results_by_radius:
        raise AnalyticsError("no radius runs given")
    radii = sorted(results_by_radius)
    means = {}
    for radius in radii:
        rows = results_by_radius[radius]
        if not rows:
            raise AnalyticsError(f"radius {radius} has no results")
        means[radius] = (
            sum(r.heating_kwh_m2 for r in rows) / len(rows),
            sum(r.cooling_kwh_m2 for r in rows) / len(rows),
            sum(r.total_kwh_m2 for r in rows) / len(rows),
        )
    h0, c0, t0 = means[radii[0]]
    points = []
    for radius in radii:
        h, c, t = means[radius]
        points.append(
            SensitivityPoint(
                radius_m=radius,
                mean_heating_kwh_m2=h,
                mean_cooling_kwh_m2=c,
                mean_total_kwh_m2=t,
                heating_delta_pct=_delta_pct(h, h0),
                cooling_delta_pct=_delta_pct(c, c0),
                total_delta_pct=_delta_pct(t, t0),
            )
        )
    return points


def elbow_radius(radii: list[float], values: list[float]) -> float:
    """Radius of maximum discrete curvature (largest |second divided difference|)."""
    if len(radii) != len(values) or len(radii) < 3:
        raise AnalyticsError("elbow detection needs at least three (radius, value) points")
    order = np.argsort(radii)
    r = np.asarray(radii, dtype=float)[order]
    v = np.asarray(values, dtype=float)[order]
    best_r, best_c = None, -1.0
    for i in range(1, len(r) - 1):
        left = (v[i] - v[i - 1]) / (r[i] - r[i - 1])
        right = (v[i + 1] - v[i]) / (r[i + 1] - r[i])
        curvature = abs(2.0 * (right - left) / (r[i + 1] - r[i - 1]))
        if curvature > best_c:
            best_r, best_c = float(r[i]), curvature
    return best_r


def write_sensitivity_csv(points: list[SensitivityPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("radius_m", "mean_heating_kwh_m2", "mean_cooling_kwh_m2",
                         "mean_total_kwh_m2", "heating_delta_pct", "cooling_delta_pct",
                         "total_delta_pct"))
        for p in points:
            writer.writerow((repr(p.radius_m), repr(p.mean_heating_kwh_m2),
                             repr(p.mean_cooling_kwh_m2), repr(p.mean_total_kwh_m2),
                             repr(p.heating_delta_pct), repr(p.cooling_delta_pct),
                             repr(p.total_delta_pct)))


def read_sensitivity_csv(path: str | Path) -> list[SensitivityPoint]:
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(
                SensitivityPoint(
                    radius_m=float(row["radius_m"]),
                    mean_heating_kwh_m2=float(row["mean_heating_kwh_m2"]),
                    mean_cooling_kwh_m2=float(row["mean_cooling_kwh_m2"]),
                    mean_total_kwh_m2=float(row["mean_total_kwh_m2"]),
                    heating_delta_pct=float(row["heating_delta_pct"]),
                    cooling_delta_pct=float(row["cooling_delta_pct"]),
                    total_delta_pct=float(row["total_delta_pct"]),
                )
            )
    return points


# --------------------------------------------------- engine calibration rows

@dataclass(frozen=True)
class CalibrationRow:
    period: ArchetypePeriod
    parcel_id: str
    floor_area_m2: float
    dynamic_kwh_m2: float
    quasi_steady_kwh_m2: float
    ratio: float
    dynamic_exceeds: bool


def period_representatives(models: list[BuildingModel]) -> dict[ArchetypePeriod, BuildingModel]:
    """Per period, the building whose floor area is closest to the period median."""
    grouped: dict[ArchetypePeriod, list[BuildingModel]] = {}
    for m in models:
        grouped.setdefault(m.period, []).append(m)
    reps = {}
    for period, group in grouped.items():
        median = float(np.median([m.floor_area_m2 for m in group]))
        reps[period] = min(
            group, key=lambda m: (abs(m.floor_area_m2 - median), m.parcel_id)
        )
    return reps


def calibration_report(
    models: list[BuildingModel],
    ctx: SolarContext,
    table: ArchetypeTable,
) -> list[CalibrationRow]:
    """Heating intensity of both engines on one median-sized building per period."""
    reps = period_representatives(models)
    rows = []
    for period in PERIODS:
        model = reps.get(period)
        if model is None:
            continue
        spec = table.get(period, VARIANT_BASELINE)
        params = zone_params_from_model(model, spec)
        forcing = make_forcing(model, spec, ctx)
        dyn = simulate_dynamic(params, forcing).heating_kwh / model.floor_area_m2
        qs = simulate_quasi_steady(params, forcing).heating_kwh / model.floor_area_m2
        rows.append(
            CalibrationRow(
                period=period,
                parcel_id=model.parcel_id,
                floor_area_m2=model.floor_area_m2,
                dynamic_kwh_m2=dyn,
                quasi_steady_kwh_m2=qs,
                ratio=dyn / qs if qs > 0.0 else float("nan"),
                dynamic_exceeds=dyn > qs,
            )
        )
    return rows


def write_calibration_csv(rows: list[CalibrationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("period", "parcel_id", "floor_area_m2", "dynamic_kwh_m2",
                         "quasi_steady_kwh_m2", "ratio", "dynamic_exceeds"))
        for r in rows:
            writer.writerow((r.period.label, r.parcel_id, repr(r.floor_area_m2),
                             repr(r.dynamic_kwh_m2), repr(r.quasi_steady_kwh_m2),
                             repr(r.ratio), int(r.dynamic_exceeds)))


# ------------------------------------------------------------- report bundle

REPORT_FILES = (
    "scenarios.csv",
    "front.csv",
    "binary_map.csv",
    "neighborhood_savings.csv",
    "before_after.csv",
    "histograms.csv",
    "cumulative_curve.csv",
    "co2.csv",
    "calibration.csv",
)


def emit_report(
    outdir: str | Path,
    baseline: list[BuildingResult],
    retrofit: list[BuildingResult],
    calibration_rows: list[CalibrationRow],
    sensitivity: list[SensitivityPoint] | None = None,
    emission_factor: float = DEFAULT_EMISSION_FACTOR_T_PER_TJ,
) -> dict:
    """Write the full CSV bundle plus a plain-text summary; returns the headline numbers."""
    from .scenarios import (
        evaluate_scenarios,
        neighborhood_savings,
        pair_results,
        pareto_front,
        write_before_after_csv,
        write_binary_map_csv,
        write_front_csv,
        write_neighborhood_savings_csv,
        write_scenarios_csv,
    )

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pairs = pair_results(baseline, retrofit)
    outcomes = evaluate_scenarios(pairs)
    front = pareto_front(outcomes)
    savings, excluded = neighborhood_savings(pairs)
    hist = intensity_histograms(baseline)
    curve = cumulative_curve(baseline)
    x80 = curve.x_at_energy_share(0.8)
    co2 = co2_estimate(baseline, emission_factor)

    write_scenarios_csv(outcomes, outdir / "scenarios.csv")
    write_front_csv(front, outdir / "front.csv")
    write_binary_map_csv(front, outdir / "binary_map.csv")
    write_neighborhood_savings_csv(savings, outdir / "neighborhood_savings.csv")
    write_before_after_csv(pairs, outdir / "before_after.csv")
    write_histograms_csv(hist, outdir / "histograms.csv")
    write_cumulative_csv(curve, outdir / "cumulative_curve.csv")
    write_co2_csv(co2, outdir / "co2.csv")
    write_calibration_csv(calibration_rows, outdir / "calibration.csv")

    elbow = None
    if sensitivity is not None and len(sensitivity) >= 3:
        elbow = elbow_radius(
            [p.radius_m for p in sensitivity],
            [p.mean_total_kwh_m2 for p in sensitivity],
        )
    summary = {
        "buildings": len(pairs),
        "baseline_total_kwh": outcomes[0].total_energy_kwh,
        "all_retrofit_total_kwh": outcomes[-1].total_energy_kwh,
        "front_size": len(front),
        "x_at_80pct_energy": x80,
        "co2_intensity_kg_m2": co2.co2_intensity_kg_m2,
        "elbow_radius_m": elbow,
        "zero_baseline_excluded": excluded,
    }
    lines = ["stock and scenario summary", "=" * 26]
    for key in ("buildings", "baseline_total_kwh", "all_retrofit_total_kwh",
                "front_size", "x_at_80pct_energy", "co2_intensity_kg_m2",
                "elbow_radius_m", "zero_baseline_excluded"):
        value = summary[key]
        if value is None:
            text = "n/a"
        elif isinstance(value, float):
            text = f"{value:.6f}"
        else:
            text = str(value)
        lines.append(f"{key}: {text}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    return summary
