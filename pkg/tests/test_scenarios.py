import random

import pytest

from ubem.archetypes import PERIODS, ArchetypePeriod
from ubem.engine import SimResult
from ubem.orchestrator import BuildingResult
from ubem.scenarios import (
    N_SCENARIOS,
    BuildingPair,
    ScenarioError,
    ScenarioOutcome,
    archetype_front_frequency,
    binary_map,
    dominates,
    evaluate_scenarios,
    mask_bits,
    mask_includes,
    mask_periods,
    neighborhood_savings,
    pair_results,
    pareto_front,
    write_before_after_csv,
    write_binary_map_csv,
    write_front_csv,
    write_neighborhood_savings_csv,
    write_scenarios_csv,
)


def pair(pid, period, base, retro, zone="Z1", area=100.0):
    return BuildingPair(
        parcel_id=pid,
        period=period,
        neighborhood_id=zone,
        floor_area_m2=area,
        baseline_kwh=base,
        retrofit_kwh=retro,
    )


def small_stock():
    return [
        pair("A", ArchetypePeriod.PRE1900, 3000.0, 1800.0),
        pair("B", ArchetypePeriod.PRE1900, 2600.0, 1700.0),
        pair("C", ArchetypePeriod.Y1946_1960, 2000.0, 1500.0),
        pair("D", ArchetypePeriod.POST2005, 900.0, 900.0),
    ]


class TestMasks:
    def test_bit_positions(self):
        assert mask_includes(1, ArchetypePeriod.PRE1900)
        assert mask_includes(128, ArchetypePeriod.POST2005)
        assert not mask_includes(1, ArchetypePeriod.POST2005)
        assert mask_periods(0) == []
        assert mask_periods(255) == list(PERIODS)
        assert mask_periods(0b101) == [ArchetypePeriod.PRE1900, ArchetypePeriod.Y1921_1945]

    def test_bits_string_oldest_first(self):
        assert mask_bits(0) == "00000000"
        assert mask_bits(1) == "10000000"
        assert mask_bits(128) == "00000001"
        assert mask_bits(255) == "11111111"


class TestEvaluate:
    def test_identity_and_full_masks(self):
        outcomes = evaluate_scenarios(small_stock())
        assert len(outcomes) == N_SCENARIOS
        assert [o.mask for o in outcomes] == list(range(256))
        base_total = 3000.0 + 2600.0 + 2000.0 + 900.0
        retro_total = 1800.0 + 1700.0 + 1500.0 + 900.0
        assert outcomes[0].total_energy_kwh == pytest.approx(base_total)
        assert outcomes[0].buildings_retrofitted == 0
        assert outcomes[255].total_energy_kwh == pytest.approx(retro_total)
        assert outcomes[255].buildings_retrofitted == 4

    def test_single_period_mask_is_additive(self):
        stock = small_stock()
        outcomes = evaluate_scenarios(stock)
        base_total = sum(p.baseline_kwh for p in stock)
        pre1900_savings = (3000.0 - 1800.0) + (2600.0 - 1700.0)
        assert outcomes[1].total_energy_kwh == pytest.approx(base_total - pre1900_savings)
        assert outcomes[1].buildings_retrofitted == 2

    def test_every_mask_matches_per_building_composition(self):
        stock = small_stock()
        outcomes = evaluate_scenarios(stock)
        for o in outcomes:
            want = sum(
                p.retrofit_kwh if mask_includes(o.mask, p.period) else p.baseline_kwh
                for p in stock
            )
            count = sum(1 for p in stock if mask_includes(o.mask, p.period))
            assert o.total_energy_kwh == pytest.approx(want, rel=1e-12)
            assert o.buildings_retrofitted == count

    def test_mean_intensity(self):
        stock = small_stock()
        outcomes = evaluate_scenarios(stock)
        want = sum(p.baseline_kwh / p.floor_area_m2 for p in stock) / len(stock)
        assert outcomes[0].mean_intensity_kwh_m2 == pytest.approx(want)

    def test_empty_stock_rejected(self):
        with pytest.raises(ScenarioError):
            evaluate_scenarios([])


class TestPairing:
    def result(self, pid, period, heating, zone="Z1", area=100.0):
        return BuildingResult(
            parcel_id=pid,
            period=period.name,
            neighborhood_id=zone,
            floor_area_m2=area,
            result=SimResult(
                heating_kwh_monthly=(heating,) + (0.0,) * 11,
                cooling_kwh_monthly=(0.0,) * 12,
            ),
        )

    def test_pairs_by_parcel(self):
        base = [self.result("B", ArchetypePeriod.PRE1900, 2000.0),
                self.result("A", ArchetypePeriod.POST2005, 900.0)]
        retro = [self.result("A", ArchetypePeriod.POST2005, 900.0),
                 self.result("B", ArchetypePeriod.PRE1900, 1200.0)]
        pairs = pair_results(base, retro)
        assert [p.parcel_id for p in pairs] == ["A", "B"]
        assert pairs[1].baseline_kwh == pytest.approx(2000.0)
        assert pairs[1].retrofit_kwh == pytest.approx(1200.0)
        assert pairs[0].period is ArchetypePeriod.POST2005

    def test_unpaired_parcel_raises(self):
        base = [self.result("A", ArchetypePeriod.PRE1900, 2000.0)]
        with pytest.raises(ScenarioError, match="A"):
            pair_results(base, [])


class TestParetoFront:
    def outcome(self, mask, count, energy):
        return ScenarioOutcome(mask, count, energy, 0.0)

    def test_mutually_nondominated_all_kept(self):
        outs = [self.outcome(1, 1, 10.0), self.outcome(2, 2, 5.0), self.outcome(4, 3, 1.0)]
        front = pareto_front(outs)
        assert [(o.buildings_retrofitted, o.total_energy_kwh) for o in front] == [
            (1, 10.0), (2, 5.0), (3, 1.0)]

    def test_weak_dominance_drops_equal_energy_higher_count(self):
        outs = [self.outcome(1, 1, 5.0), self.outcome(2, 2, 5.0)]
        front = pareto_front(outs)
        assert [(o.buildings_retrofitted, o.total_energy_kwh) for o in front] == [(1, 5.0)]

    def test_duplicate_objectives_keep_smallest_mask(self):
        outs = [self.outcome(6, 1, 5.0), self.outcome(3, 1, 5.0), self.outcome(9, 0, 9.0)]
        front = pareto_front(outs)
        assert [o.mask for o in front] == [9, 3]

    def test_sorted_and_strictly_decreasing(self):
        outcomes = evaluate_scenarios(small_stock())
        front = pareto_front(outcomes)
        counts = [o.buildings_retrofitted for o in front]
        energies = [o.total_energy_kwh for o in front]
        assert counts == sorted(counts)
        assert all(a > b for a, b in zip(energies, energies[1:]))
        assert front[0].mask == 0

    def test_noop_retrofit_period_never_on_front_masks(self):
        # the newest period saves nothing, so no front mask should include it
        front = pareto_front(evaluate_scenarios(small_stock()))
        assert all(not mask_includes(o.mask, ArchetypePeriod.POST2005) for o in front)

    def test_matches_brute_force_on_random_stocks(self):
        rng = random.Random(42)
        for _ in range(25):
            stock = []
            for i in range(rng.randint(3, 40)):
                period = PERIODS[rng.randrange(8)]
                base = rng.uniform(500.0, 5000.0)
                retro = base * rng.uniform(0.4, 1.0)
                stock.append(pair(f"S{i:03d}", period, base, retro))
            outcomes = evaluate_scenarios(stock)
            front = pareto_front(outcomes)
            brute = [
                q for q in outcomes
                if not any(dominates(p, q) for p in outcomes if p.mask != q.mask)
            ]
            # brute force keeps every member of a duplicate group; collapse to
            # the smallest mask per (count, energy) to mirror the tie rule
            dedup = {}
            for q in brute:
                key = (q.buildings_retrofitted, q.total_energy_kwh)
                if key not in dedup or q.mask < dedup[key].mask:
                    dedup[key] = q
            want = sorted(dedup.values(), key=lambda o: o.buildings_retrofitted)
            assert [(o.mask, o.buildings_retrofitted, o.total_energy_kwh) for o in front] == [
                (o.mask, o.buildings_retrofitted, o.total_energy_kwh) for o in want]

    def test_off_front_outcomes_are_dominated(self):
        outcomes = evaluate_scenarios(small_stock())
        front = pareto_front(outcomes)
        front_masks = {o.mask for o in front}
        by_objectives = {(o.buildings_retrofitted, o.total_energy_kwh) for o in front}
        for q in outcomes:
            if q.mask in front_masks:
                continue
            covered = (q.buildings_retrofitted, q.total_energy_kwh) in by_objectives
            assert covered or any(dominates(p, q) for p in front)


class TestFrontAnalyses:
    def test_frequency_counts_masked_periods(self):
        front = [ScenarioOutcome(1, 0, 9.0, 0.0), ScenarioOutcome(3, 1, 5.0, 0.0)]
        freq = archetype_front_frequency(front)
        assert freq[ArchetypePeriod.PRE1900] == 2
        assert freq[ArchetypePeriod.Y1901_1920] == 1
        assert freq[ArchetypePeriod.POST2005] == 0

    def test_binary_map_shape(self):
        front = [ScenarioOutcome(0b1, 1, 9.0, 0.0), ScenarioOutcome(0b11, 2, 5.0, 0.0)]
        matrix = binary_map(front)
        assert len(matrix) == 8
        assert all(len(row) == 2 for row in matrix)
        col_sums = [sum(row[j] for row in matrix) for j in range(2)]
        assert col_sums == [1, 2]


class TestNeighborhoodSavings:
    def test_unweighted_mean(self):
        pairs = [
            pair("A", ArchetypePeriod.PRE1900, 1000.0, 900.0, zone="N"),
            pair("B", ArchetypePeriod.PRE1900, 1000.0, 700.0, zone="N"),
        ]
        savings, excluded = neighborhood_savings(pairs)
        assert savings == {"N": pytest.approx(20.0)}
        assert excluded == 0

    def test_noop_retrofit_contributes_zero(self):
        pairs = [
            pair("A", ArchetypePeriod.POST2005, 1000.0, 1000.0, zone="N"),
            pair("B", ArchetypePeriod.PRE1900, 1000.0, 600.0, zone="N"),
        ]
        savings, _ = neighborhood_savings(pairs)
        assert savings["N"] == pytest.approx(20.0)

    def test_zero_baseline_excluded(self):
        pairs = [
            pair("A", ArchetypePeriod.PRE1900, 0.0, 0.0, zone="N"),
            pair("B", ArchetypePeriod.PRE1900, 1000.0, 900.0, zone="N"),
        ]
        savings, excluded = neighborhood_savings(pairs)
        assert savings["N"] == pytest.approx(10.0)
        assert excluded == 1

    def test_area_weighting_flag(self):
        pairs = [
            pair("A", ArchetypePeriod.PRE1900, 1000.0, 900.0, zone="N", area=300.0),
            pair("B", ArchetypePeriod.PRE1900, 1000.0, 700.0, zone="N", area=100.0),
        ]
        unweighted, _ = neighborhood_savings(pairs)
        weighted, _ = neighborhood_savings(pairs, area_weighted=True)
        assert unweighted["N"] == pytest.approx(20.0)
        assert weighted["N"] == pytest.approx((300 * 10 + 100 * 30) / 400)


class TestCsvOutputs:
    def test_scenarios_csv(self, tmp_path):
        outcomes = evaluate_scenarios(small_stock())
        path = tmp_path / "scenarios.csv"
        write_scenarios_csv(outcomes, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "mask,bits,buildings_retrofitted,total_energy_kwh,mean_intensity_kwh_m2"
        assert len(lines) == 257
        assert lines[1].startswith("0,00000000,0,")

    def test_front_and_binary_map_consistent(self, tmp_path):
        outcomes = evaluate_scenarios(small_stock())
        front = pareto_front(outcomes)
        fpath = tmp_path / "front.csv"
        bpath = tmp_path / "binary_map.csv"
        write_front_csv(front, fpath)
        write_binary_map_csv(front, bpath)
        front_rows = fpath.read_text().splitlines()
        map_rows = bpath.read_text().splitlines()
        assert len(front_rows) == len(front) + 1
        assert len(map_rows) == 9
        assert map_rows[0].split(",")[1:] == [f"mask_{o.mask}" for o in front]

    def test_savings_and_before_after(self, tmp_path):
        pairs = small_stock()
        savings, _ = neighborhood_savings(pairs)
        spath = tmp_path / "sav.csv"
        apath = tmp_path / "ba.csv"
        write_neighborhood_savings_csv(savings, spath)
        write_before_after_csv(pairs, apath)
        assert spath.read_text().splitlines()[0] == "neighborhood_id,mean_savings_pct"
        lines = apath.read_text().splitlines()
        assert lines[0] == "parcel_id,period,baseline_kwh_m2,retrofit_kwh_m2,savings_pct"
        assert len(lines) == 5

    def test_rewrites_are_byte_identical(self, tmp_path):
        outcomes = evaluate_scenarios(small_stock())
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_scenarios_csv(outcomes, p1)
        write_scenarios_csv(outcomes, p2)
        assert p1.read_bytes() == p2.read_bytes()
