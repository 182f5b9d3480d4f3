import json

import numpy as np
import pytest

from ubem.archetypes import VARIANT_RETROFIT
from ubem.geoingest import BuildingRecord
from ubem.geometry import Polygon
from ubem.lod1 import build_models, model_to_dict
from ubem.orchestrator import (
    CostModel,
    RunAbortedError,
    RunnerConfig,
    estimate_speedup_potential,
    generate_models_stock,
    neighbor_counts,
    read_results_csv,
    run_tasks,
    scaling_surface,
    simulate_makespan,
    simulate_stock,
    write_results_csv,
    write_run_report,
    write_scaling_csv,
    write_timings_csv,
)
from ubem.weather import HOURS_PER_YEAR, WeatherSeries, write_epw


def square(cx, cy, side):
    h = side / 2.0
    return Polygon.from_coords(
        [(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)]
    )


def make_records():
    years = [1890, 1950, 1980, 2010, None, 1930]
    recs = []
    for i, year in enumerate(years):
        recs.append(
            BuildingRecord(
                parcel_id=f"B{i:02d}",
                footprint=square(20.0 * i, 0.0, 10.0),
                year=year,
                neighborhood_id="Z1" if i < 3 else "Z2",
            )
        )
    return recs


HEIGHTS = {f"B{i:02d}": h for i, h in enumerate([9.0, 6.0, 12.0, 7.5, 9.0, 15.0])}


@pytest.fixture(scope="module")
def epw_file(tmp_path_factory):
    hours = np.arange(HOURS_PER_YEAR)
    seasonal = -12.0 * np.cos(2 * np.pi * (hours / 24.0 - 25) / 365.0)
    diurnal = 5.0 * np.sin(2 * np.pi * (hours % 24 - 9) / 24.0)
    shape = np.maximum(0.0, np.sin(np.pi * ((hours % 24) - 6) / 12.0))
    series = WeatherSeries(
        latitude_deg=44.5,
        longitude_deg=11.33,
        tz_offset_h=1.0,
        elevation_m=54.0,
        drybulb_c=14.0 + seasonal + diurnal,
        dni_wm2=600.0 * shape,
        dhi_wm2=150.0 * shape,
    )
    path = tmp_path_factory.mktemp("wx") / "city.epw"
    write_epw(series, path)
    return path


@pytest.fixture(scope="module")
def models():
    return build_models(make_records(), HEIGHTS, shading_radius_m=50.0)


class TestMakespan:
    def test_two_core_packing(self):
        # biggest first, always to the least-loaded core:
        # core0 gets 5,3,2 and core1 gets 4,3,2,1
        assert simulate_makespan([5, 4, 3, 3, 2, 2, 1], 2) == 10.0

    def test_greedy_is_not_optimal(self):
        # optimal split is 3+3 vs 2+2+2 = 6, greedy lands on 7
        assert simulate_makespan([3, 3, 2, 2, 2], 2) == 7.0

    def test_single_core_is_serial_total(self):
        assert simulate_makespan([1.5, 2.5, 3.0], 1) == 7.0

    def test_more_cores_than_tasks(self):
        assert simulate_makespan([4.0, 2.0], 16) == 4.0

    def test_empty(self):
        assert simulate_makespan([], 8) == 0.0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            simulate_makespan([1.0], 0)
        with pytest.raises(ValueError):
            simulate_makespan([-1.0], 2)
        with pytest.raises(ValueError):
            simulate_makespan([float("nan")], 2)

    def test_lower_bounds_hold(self):
        durations = [float(d) for d in (7, 1, 4, 4, 9, 2, 2, 5, 3, 6, 8, 1)]
        for cores in (2, 3, 5):
            ms = simulate_makespan(durations, cores)
            assert ms >= max(durations)
            assert ms >= sum(durations) / cores


class TestSpeedupPotential:
    def test_twenty_tasks(self):
        durations = [float(d) for d in range(1, 21)]
        # total 210, mean of the ten largest (11..20) is 15.5
        assert estimate_speedup_potential(durations) == pytest.approx(194.5)

    def test_fewer_than_ten(self):
        assert estimate_speedup_potential([4.0, 2.0]) == pytest.approx(3.0)

    def test_empty(self):
        assert estimate_speedup_potential([]) == 0.0


class TestRunTasks:
    def test_results_keep_submission_order(self):
        payloads = [{"parcel_id": f"P{i}", "x": i} for i in range(5)]
        out, report = run_tasks(payloads, lambda p: p["x"] * 2, RunnerConfig())
        assert out == [0, 2, 4, 6, 8]
        assert report.completed == 5
        assert report.failed == 0
        assert report.retried == 0

    def test_retry_until_success(self):
        attempts = {}

        def flaky(payload):
            n = attempts.get(payload["parcel_id"], 0)
            attempts[payload["parcel_id"]] = n + 1
            if payload["parcel_id"] == "P3" and n < 2:
                raise RuntimeError("transient")
            return payload["parcel_id"]

        payloads = [{"parcel_id": f"P{i}"} for i in range(10)]
        out, report = run_tasks(payloads, flaky, RunnerConfig(retries=2))
        assert out == [f"P{i}" for i in range(10)]
        assert report.retried == 2
        assert report.failed == 0
        assert attempts["P3"] == 3

    def test_persistent_failure_marked_not_fatal_at_threshold(self):
        def broken(payload):
            if payload["parcel_id"] == "P3":
                raise ValueError("bad geometry")
            return payload["parcel_id"]

        # one failure out of ten sits exactly on the 10% threshold: keep going
        payloads = [{"parcel_id": f"P{i}"} for i in range(10)]
        out, report = run_tasks(payloads, broken, RunnerConfig(retries=1))
        assert len(out) == 9
        assert "P3" not in out
        assert report.failed == 1
        assert report.failed_parcels == ["P3"]
        assert report.retried == 1

    def test_aborts_above_failure_threshold(self):
        def broken(payload):
            if payload["parcel_id"] in ("P1", "P4", "P7"):
                raise ValueError("boom")
            return payload["parcel_id"]

        payloads = [{"parcel_id": f"P{i}"} for i in range(20)]
        with pytest.raises(RunAbortedError, match="3 of 20"):
            run_tasks(payloads, broken, RunnerConfig(retries=0))

    def test_report_dict_shape(self):
        payloads = [{"parcel_id": "A"}]
        _, report = run_tasks(payloads, lambda p: 1, RunnerConfig())
        d = report.as_dict()
        assert d["tasks"] == 1
        assert d["completed"] == 1
        assert d["failed_parcels"] == []
        assert d["throughput_per_s"] > 0


class TestGenerateWave:
    def test_matches_direct_build(self):
        recs = make_records()
        direct = build_models(recs, HEIGHTS, shading_radius_m=50.0)
        waved, report = generate_models_stock(recs, HEIGHTS, shading_radius_m=50.0)
        assert report.completed == len(recs)
        assert [model_to_dict(m) for m in waved] == [model_to_dict(m) for m in direct]

    def test_missing_height_is_an_error(self):
        recs = make_records()
        heights = dict(HEIGHTS)
        del heights["B02"]
        with pytest.raises(KeyError, match="B02"):
            generate_models_stock(recs, heights, shading_radius_m=50.0)


class TestSimulateStock:
    def test_sorted_and_positive(self, models, epw_file):
        results, report = simulate_stock(models, epw_file)
        assert [r.parcel_id for r in results] == sorted(HEIGHTS)
        assert report.completed == len(models)
        for r in results:
            assert r.heating_kwh > 0.0
            assert r.total_kwh_m2 == pytest.approx(
                r.heating_kwh_m2 + r.cooling_kwh_m2
            )

    def test_retrofit_variant_cuts_heating(self, models, epw_file):
        base, _ = simulate_stock(models, epw_file)
        retro, _ = simulate_stock(
            models, epw_file, variant_by_parcel={"B00": VARIANT_RETROFIT}
        )
        by_id = {r.parcel_id: r for r in retro}
        base_by_id = {r.parcel_id: r for r in base}
        assert by_id["B00"].heating_kwh < base_by_id["B00"].heating_kwh
        for pid in sorted(HEIGHTS):
            if pid != "B00":
                assert by_id[pid].heating_kwh == base_by_id[pid].heating_kwh

    def test_worker_count_does_not_change_bytes(self, models, epw_file, tmp_path):
        r1, _ = simulate_stock(models, epw_file, RunnerConfig(workers=1))
        r2, _ = simulate_stock(models, epw_file, RunnerConfig(workers=2))
        p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        write_results_csv(r1, p1)
        write_results_csv(r2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rerun_is_byte_identical(self, models, epw_file, tmp_path):
        r1, _ = simulate_stock(models, epw_file)
        r2, _ = simulate_stock(models, epw_file)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(r1, p1)
        write_results_csv(r2, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestResultFiles:
    def test_csv_round_trip_exact(self, models, epw_file, tmp_path):
        results, _ = simulate_stock(models, epw_file)
        path = tmp_path / "results.csv"
        write_results_csv(results, path)
        back = read_results_csv(path)
        assert [r.parcel_id for r in back] == [r.parcel_id for r in results]
        for orig, rec in zip(results, back):
            assert rec.heating_kwh == orig.heating_kwh
            assert rec.cooling_kwh == orig.cooling_kwh
            assert rec.floor_area_m2 == orig.floor_area_m2
            assert rec.period == orig.period
            assert rec.neighborhood_id == orig.neighborhood_id

    def test_header_and_columns(self, models, epw_file, tmp_path):
        results, _ = simulate_stock(models, epw_file)
        path = tmp_path / "results.csv"
        write_results_csv(results, path)
        header = path.read_text().splitlines()[0]
        assert header == (
            "parcel_id,period,neighborhood_id,floor_area_m2,heating_kwh,"
            "cooling_kwh,heating_kwh_m2,cooling_kwh_m2,total_kwh_m2"
        )

    def test_sidecars(self, models, epw_file, tmp_path):
        results, report = simulate_stock(models, epw_file)
        tpath = tmp_path / "timings.csv"
        jpath = tmp_path / "run_report.json"
        write_timings_csv(results, tpath)
        write_run_report(report, jpath)
        lines = tpath.read_text().splitlines()
        assert lines[0] == "parcel_id,duration_s"
        assert len(lines) == len(results) + 1
        blob = json.loads(jpath.read_text())
        assert blob["tasks"] == len(results)
        assert blob["failed"] == 0


class TestScalingEstimates:
    def test_neighbor_counts_by_radius(self, models):
        row = sorted(models, key=lambda m: m.centroid_x)
        counts_near = neighbor_counts(row, 25.0)
        counts_far = neighbor_counts(row, 45.0)
        # 20 m grid spacing: 25 m sees adjacent only, 45 m sees two out
        assert counts_near == [1, 2, 2, 2, 2, 1]
        assert counts_far == [2, 3, 4, 4, 3, 2]

    def test_cost_model(self):
        cost = CostModel(base_s=10.0, per_neighbor_s=1.0)
        assert cost.duration_s(0) == 10.0
        assert cost.duration_s(7) == 17.0

    def test_surface_shape_and_monotonicity(self, models):
        rows = scaling_surface(
            models,
            radii_m=[25.0, 45.0],
            node_counts=[1, 2],
            cores_per_node=2,
            cost=CostModel(base_s=10.0, per_neighbor_s=1.0),
        )
        assert len(rows) == 4
        by_key = {(r["radius_m"], r["nodes"]): r for r in rows}
        # serial cost grows with the shading radius
        assert by_key[(45.0, 1)]["serial_s"] > by_key[(25.0, 1)]["serial_s"]
        # more nodes never makes the estimated makespan worse
        for radius in (25.0, 45.0):
            assert (
                by_key[(radius, 2)]["est_makespan_s"]
                <= by_key[(radius, 1)]["est_makespan_s"]
            )
            assert by_key[(radius, 1)]["cores"] == 2
            assert by_key[(radius, 2)]["cores"] == 4

    def test_surface_values(self, models):
        rows = scaling_surface(
            models,
            radii_m=[25.0],
            node_counts=[1],
            cores_per_node=2,
            cost=CostModel(base_s=10.0, per_neighbor_s=1.0),
        )
        # durations [11, 12, 12, 12, 12, 11]: serial 70, LPT on 2 cores packs 35
        assert rows[0]["serial_s"] == pytest.approx(70.0)
        assert rows[0]["est_makespan_s"] == pytest.approx(35.0)

    def test_scaling_csv(self, models, tmp_path):
        rows = scaling_surface(models, [25.0], [1], cores_per_node=2)
        path = tmp_path / "scaling.csv"
        write_scaling_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "radius_m,nodes,cores,est_makespan_s,serial_s"
        assert len(lines) == 2
