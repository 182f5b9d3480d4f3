"""Retrofit scenario enumeration and Pareto selection.

A scenario retrofits every building of the construction periods named by an
8-bit mask (oldest period is bit 0). Because buildings are thermally
independent, two simulations per building, one baseline and one retrofitted,
are enough to compose any of the 256 citywide totals exactly; no mask is ever
re-simulated.

The Pareto front minimizes the pair (buildings retrofitted, citywide energy)
under weak dominance, keeps the smallest mask among outcomes tied on both
objectives, and comes out sorted by count with strictly decreasing energy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .archetypes import PERIODS, ArchetypePeriod
from .orchestrator import BuildingResult

N_SCENARIOS = 1 << len(PERIODS)


class ScenarioError(ValueError):
    pass


def mask_includes(mask: int, period: ArchetypePeriod) -> bool:
    return bool(mask >> period.bit & 1)


def mask_periods(mask: int) -> list[ArchetypePeriod]:
    return [p for p in PERIODS if mask_includes(mask, p)]


def mask_bits(mask: int) -> str:
    """Eight characters, oldest period first."""
    return "".join("1" if mask_includes(mask, p) else "0" for p in PERIODS)


@dataclass(frozen=True)
class BuildingPair:
    """Baseline and retrofitted annual energy for one building."""

    parcel_id: str
    period: ArchetypePeriod
    neighborhood_id: str
    floor_area_m2: float
    baseline_kwh: float
    retrofit_kwh: float

    @property
    def baseline_kwh_m2(self) -> float:
        return self.baseline_kwh / self.floor_area_m2

    @property
    def retrofit_kwh_m2(self) -> float:
        return self.retrofit_kwh / self.floor_area_m2

    @property
    def savings_pct(self) -> float:
        if self.baseline_kwh == 0.0:
            return 0.0
        return (1.0 - self.retrofit_kwh / self.baseline_kwh) * 100.0


def pair_results(
    baseline: list[BuildingResult], retrofit: list[BuildingResult]
) -> list[BuildingPair]:
    base_by_id = {r.parcel_id: r for r in baseline}
    retro_by_id = {r.parcel_id: r for r in retrofit}
    if set(base_by_id) != set(retro_by_id):
        odd = sorted(set(base_by_id) ^ set(retro_by_id))
        raise ScenarioError(f"unpaired simulation results for: {', '.join(odd[:5])}")
    pairs = []
    for pid in sorted(base_by_id):
        b, r = base_by_id[pid], retro_by_id[pid]
        pairs.append(
            BuildingPair(
                parcel_id=pid,
                period=ArchetypePeriod[b.period],
                neighborhood_id=b.neighborhood_id,
                floor_area_m2=b.floor_area_m2,
                baseline_kwh=b.heating_kwh + b.cooling_kwh,
                retrofit_kwh=r.heating_kwh + r.cooling_kwh,
            )
        )
    return pairs


@dataclass(frozen=True)
class ScenarioOutcome:
    mask: int
    buildings_retrofitted: int
    total_energy_kwh: float
    mean_intensity_kwh_m2: float


def evaluate_scenarios(pairs: list[BuildingPair]) -> list[ScenarioOutcome]:
    """All 256 mask outcomes, composed from per-period sums of the paired runs."""
    if not pairs:
        raise ScenarioError("no building pairs to evaluate")
    count = {p: 0 for p in PERIODS}
    base_sum = {p: 0.0 for p in PERIODS}
    retro_sum = {p: 0.0 for p in PERIODS}
    base_int_sum = {p: 0.0 for p in PERIODS}
    retro_int_sum = {p: 0.0 for p in PERIODS}
    for pair in pairs:
        count[pair.period] += 1
        base_sum[pair.period] += pair.baseline_kwh
        retro_sum[pair.period] += pair.retrofit_kwh
        base_int_sum[pair.period] += pair.baseline_kwh_m2
        retro_int_sum[pair.period] += pair.retrofit_kwh_m2
    n = len(pairs)
    outcomes = []
    for mask in range(N_SCENARIOS):
        retrofitted = 0
        total = 0.0
        int_total = 0.0
        for period in PERIODS:
            if mask_includes(mask, period):
                retrofitted += count[period]
                total += retro_sum[period]
                int_total += retro_int_sum[period]
            else:
                total += base_sum[period]
                int_total += base_int_sum[period]
        outcomes.append(
            ScenarioOutcome(
                mask=mask,
                buildings_retrofitted=retrofitted,
                total_energy_kwh=total,
                mean_intensity_kwh_m2=int_total / n,
            )
        )
    return outcomes


def dominates(p: ScenarioOutcome, q: ScenarioOutcome) -> bool:
    return (
        p.buildings_retrofitted <= q.buildings_retrofitted
        and p.total_energy_kwh <= q.total_energy_kwh
        and (
            p.buildings_retrofitted < q.buildings_retrofitted
            or p.total_energy_kwh < q.total_energy_kwh
        )
    )


def pareto_front(outcomes: list[ScenarioOutcome]) -> list[ScenarioOutcome]:
    """Non-dominated outcomes, count ascending, ties resolved to the smallest mask."""
    if not outcomes:
        raise ScenarioError("no outcomes")
    # best candidate per retrofit count: lowest energy, then smallest mask
    best: dict[int, ScenarioOutcome] = {}
    for o in outcomes:
        cur = best.get(o.buildings_retrofitted)
        if (
            cur is None
            or o.total_energy_kwh < cur.total_energy_kwh
            or (o.total_energy_kwh == cur.total_energy_kwh and o.mask < cur.mask)
        ):
            best[o.buildings_retrofitted] = o
    front = []
    energy_floor = float("inf")
    for n in sorted(best):
        o = best[n]
        if o.total_energy_kwh < energy_floor:
            front.append(o)
            energy_floor = o.total_energy_kwh
    return front


def archetype_front_frequency(front: list[ScenarioOutcome]) -> dict[ArchetypePeriod, int]:
    freq = {p: 0 for p in PERIODS}
    for o in front:
        for period in mask_periods(o.mask):
            freq[period] += 1
    return freq


def binary_map(front: list[ScenarioOutcome]) -> list[list[bool]]:
    """8 period rows by len(front) scenario columns, front in count order."""
    return [[mask_includes(o.mask, p) for o in front] for p in PERIODS]


def neighborhood_savings(
    pairs: list[BuildingPair], area_weighted: bool = False
) -> tuple[dict[str, float], int]:
    """Mean per-building savings percent per neighborhood.

    Buildings with zero baseline energy cannot express a percentage and are
    excluded; the second return value counts them.
    """
    num: dict[str, float] = {}
    den: dict[str, float] = {}
    excluded = 0
    for pair in pairs:
        if pair.baseline_kwh == 0.0:
            excluded += 1
            continue
        weight = pair.floor_area_m2 if area_weighted else 1.0
        num[pair.neighborhood_id] = num.get(pair.neighborhood_id, 0.0) + weight * pair.savings_pct
        den[pair.neighborhood_id] = den.get(pair.neighborhood_id, 0.0) + weight
    return {zone: num[zone] / den[zone] for zone in sorted(num)}, excluded


_SCENARIO_COLUMNS = ("mask", "bits", "buildings_retrofitted",
                     "total_energy_kwh", "mean_intensity_kwh_m2")


def _write_outcome_rows(outcomes: list[ScenarioOutcome], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_SCENARIO_COLUMNS)
        for o in outcomes:
            writer.writerow([
                o.mask,
                mask_bits(o.mask),
                o.buildings_retrofitted,
                repr(o.total_energy_kwh),
                repr(o.mean_intensity_kwh_m2),
            ])


def write_scenarios_csv(outcomes: list[ScenarioOutcome], path: str | Path) -> None:
    _write_outcome_rows(outcomes, path)


def write_front_csv(front: list[ScenarioOutcome], path: str | Path) -> None:
    _write_outcome_rows(front, path)


def write_binary_map_csv(front: list[ScenarioOutcome], path: str | Path) -> None:
    matrix = binary_map(front)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["period"] + [f"mask_{o.mask}" for o in front])
        for period, row in zip(PERIODS, matrix):
            writer.writerow([period.label] + [int(v) for v in row])


def write_neighborhood_savings_csv(
    savings: dict[str, float], path: str | Path
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("neighborhood_id", "mean_savings_pct"))
        for zone in sorted(savings):
            writer.writerow([zone, repr(savings[zone])])


def write_before_after_csv(pairs: list[BuildingPair], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("parcel_id", "period", "baseline_kwh_m2",
                         "retrofit_kwh_m2", "savings_pct"))
        for p in sorted(pairs, key=lambda p: p.parcel_id):
            writer.writerow([
                p.parcel_id,
                p.period.label,
                repr(p.baseline_kwh_m2),
                repr(p.retrofit_kwh_m2),
                repr(p.savings_pct),
            ])
