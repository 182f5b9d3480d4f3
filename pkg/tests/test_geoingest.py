import json
import math
from pathlib import Path

import pytest

from ubem.geoingest import (
    UNASSIGNED_ZONE,
    IngestError,
    IngestReport,
    ParcelFeature,
    VolumetricFeature,
    ingest_dataset,
    integrate,
    join_volumetrics,
    load_civics,
    load_parcels,
    load_volumetrics,
    read_buildings,
    write_buildings,
)
from ubem.geometry import Polygon


def feature(geom_type, coords, props=None):
    return {
        "type": "Feature",
        "geometry": {"type": geom_type, "coordinates": coords},
        "properties": props or {},
    }


def square_coords(x0, y0, size):
    return [[[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size], [x0, y0]]]


def write_fc(path, features, crs="urn:ubem:local-meters"):
    doc = {"type": "FeatureCollection", "features": features}
    if crs is not None:
        doc["crs"] = {"type": "name", "properties": {"name": crs}}
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def layers(tmp_path):
    parcels = write_fc(
        tmp_path / "parcels.geojson",
        [
            feature("Polygon", square_coords(0, 0, 10), {"parcel_id": "P1"}),
            feature("Polygon", square_coords(20, 0, 10), {"parcel_id": "P2"}),
            feature("Polygon", square_coords(50, 50, 8), {"parcel_id": "P3"}),
        ],
    )
    volumetrics = write_fc(
        tmp_path / "vol.geojson",
        [
            # V1 covers x in [0, 7] of P1: overlap 70
            feature(
                "Polygon",
                [[[0, 0], [7, 0], [7, 10], [0, 10], [0, 0]]],
                {"vol_id": "V1", "height_m": 12.0},
            ),
            # V2 covers x in [7, 10] of P1 (overlap 30) and all of P2 (overlap 100),
            # so the whole unit belongs to P2
            feature(
                "Polygon",
                [[[7, 0], [30, 0], [30, 10], [7, 10], [7, 0]]],
                {"vol_id": "V2", "height_m": 21.0},
            ),
        ],
    )
    civics = write_fc(
        tmp_path / "civ.geojson",
        [
            feature("Point", [5, 5], {"civic_id": "C1", "year": 1930}),
            feature("Point", [5, 6], {"civic_id": "C2", "year": 1920}),
            feature("Point", [25, 5], {"civic_id": "C3", "year": None}),
            feature("Point", [500, 500], {"civic_id": "C4", "year": 1980}),
        ],
    )
    zones = write_fc(
        tmp_path / "zones.geojson",
        [
            feature("Polygon", square_coords(-5, -5, 20), {"zone_id": "Z_WEST"}),
            feature("Polygon", square_coords(15, -5, 20), {"zone_id": "Z_EAST"}),
        ],
    )
    return parcels, volumetrics, civics, zones


class TestJoins:
    def test_integrated_records(self, layers):
        records, report = ingest_dataset(*layers)
        by_id = {r.parcel_id: r for r in records}
        # every parcel stays a record; P3 simply has no height yet
        assert sorted(by_id) == ["P1", "P2", "P3"]
        # V2 overlaps P1 by 30 and P2 by 100, so it belongs to P2 entirely
        assert by_id["P1"].height_m == pytest.approx(12.0)
        assert by_id["P2"].height_m == pytest.approx(21.0)
        assert by_id["P3"].height_m is None
        # oldest civic year wins; year-less civic leaves None
        assert by_id["P1"].year == 1920
        assert by_id["P2"].year is None
        assert by_id["P1"].neighborhood_id == "Z_WEST"
        assert by_id["P2"].neighborhood_id == "Z_EAST"
        assert by_id["P3"].neighborhood_id == UNASSIGNED_ZONE
        counts = report.as_dict()
        assert counts["parcels_unbuilt"] == 1
        assert counts["civics_unmatched"] == 1
        assert counts["buildings_integrated"] == 3

    def test_records_sorted_by_parcel_id(self, layers):
        records, _ = ingest_dataset(*layers)
        ids = [r.parcel_id for r in records]
        assert ids == sorted(ids)

    def test_multi_unit_parcel_gets_weighted_mean(self):
        report = IngestReport()
        parcels = [
            ParcelFeature("P1", Polygon.from_coords([(0, 0), (10, 0), (10, 10), (0, 10)]))
        ]
        units = [
            VolumetricFeature(
                "V1", Polygon.from_coords([(0, 0), (5, 0), (5, 10), (0, 10)]), 10.0
            ),
            VolumetricFeature(
                "V2", Polygon.from_coords([(5, 0), (10, 0), (10, 10), (5, 10)]), 20.0
            ),
        ]
        heights = join_volumetrics(parcels, units, report)
        assert heights == {"P1": pytest.approx(15.0)}

    def test_uneven_weights(self):
        # 30 m2 of h=10 and 70 m2 of h=20 average to 17
        parcels = [
            ParcelFeature("P1", Polygon.from_coords([(0, 0), (10, 0), (10, 10), (0, 10)]))
        ]
        units = [
            VolumetricFeature(
                "V1", Polygon.from_coords([(0, 0), (3, 0), (3, 10), (0, 10)]), 10.0
            ),
            VolumetricFeature(
                "V2", Polygon.from_coords([(3, 0), (10, 0), (10, 10), (3, 10)]), 20.0
            ),
        ]
        heights = join_volumetrics(parcels, units, IngestReport())
        assert heights["P1"] == pytest.approx(17.0)
        lo, hi = 10.0, 20.0
        assert lo <= heights["P1"] <= hi

    def test_overlap_tie_prefers_smaller_parcel_id(self):
        parcels = [
            ParcelFeature("PB", Polygon.from_coords([(0, 0), (10, 0), (10, 10), (0, 10)])),
            ParcelFeature("PA", Polygon.from_coords([(10, 0), (20, 0), (20, 10), (10, 10)])),
        ]
        unit = VolumetricFeature(
            "V1", Polygon.from_coords([(5, 0), (15, 0), (15, 10), (5, 10)]), 9.0
        )
        heights = join_volumetrics(parcels, [unit], IngestReport())
        assert heights == {"PA": pytest.approx(9.0)}

    def test_shuffled_inputs_give_identical_records(self, layers, tmp_path):
        records, _ = ingest_dataset(*layers)
        shuffled_paths = []
        for i, src in enumerate(layers):
            doc = json.loads(Path(src).read_text())
            doc["features"] = list(reversed(doc["features"]))
            dst = tmp_path / f"shuf{i}.geojson"
            dst.write_text(json.dumps(doc))
            shuffled_paths.append(dst)
        shuffled, _ = ingest_dataset(*shuffled_paths)
        assert shuffled == records

    def test_centroid_outside_all_zones(self, tmp_path):
        report = IngestReport()
        parcels = load_parcels(
            write_fc(
                tmp_path / "p.geojson",
                [feature("Polygon", square_coords(0, 0, 10), {"parcel_id": "P1"})],
            ),
            None,
            report,
        )
        vol = [
            VolumetricFeature(
                "V1", Polygon.from_coords([(0, 0), (10, 0), (10, 10), (0, 10)]), 9.0
            )
        ]
        records, _ = integrate(parcels, vol, [], [], report)
        assert records[0].neighborhood_id == UNASSIGNED_ZONE
        assert records[0].year is None
        assert records[0].height_m == pytest.approx(9.0)


class TestLoaderEdges:
    def test_duplicate_parcel_id_rejected(self, tmp_path):
        path = write_fc(
            tmp_path / "dup.geojson",
            [
                feature("Polygon", square_coords(0, 0, 5), {"parcel_id": "P1"}),
                feature("Polygon", square_coords(10, 0, 5), {"parcel_id": "P1"}),
            ],
        )
        with pytest.raises(IngestError, match="duplicate"):
            load_parcels(path, None, IngestReport())

    def test_invalid_geometry_skipped_and_counted(self, tmp_path):
        bowtie = [[[0, 0], [2, 2], [2, 0], [0, 2], [0, 0]]]
        path = write_fc(
            tmp_path / "inv.geojson",
            [
                feature("Polygon", bowtie, {"parcel_id": "BAD"}),
                feature("Polygon", square_coords(0, 0, 5), {"parcel_id": "OK"}),
            ],
        )
        report = IngestReport()
        parcels = load_parcels(path, None, report)
        assert [p.parcel_id for p in parcels] == ["OK"]
        assert report.counts["parcels_skipped_invalid_geometry"] == 1

    def test_missing_id_skipped(self, tmp_path):
        path = write_fc(
            tmp_path / "noid.geojson",
            [feature("Polygon", square_coords(0, 0, 5))],
        )
        report = IngestReport()
        assert load_parcels(path, None, report) == []
        assert report.counts["parcels_skipped_missing_id"] == 1

    def test_multipolygon_keeps_largest_part(self, tmp_path):
        coords = [square_coords(0, 0, 1), square_coords(5, 0, 3)]
        path = write_fc(
            tmp_path / "mp.geojson",
            [feature("MultiPolygon", coords, {"parcel_id": "M1"})],
        )
        parcels = load_parcels(path, None, IngestReport())
        assert parcels[0].footprint.area() == pytest.approx(9.0)

    def test_not_a_feature_collection(self, tmp_path):
        path = tmp_path / "x.geojson"
        path.write_text(json.dumps({"type": "Feature"}))
        with pytest.raises(IngestError, match="FeatureCollection"):
            load_parcels(path, None, IngestReport())

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "y.geojson"
        path.write_text("{not json")
        with pytest.raises(IngestError, match="JSON"):
            load_parcels(path, None, IngestReport())

    def test_bad_volumetric_height_skipped(self, tmp_path):
        path = write_fc(
            tmp_path / "v.geojson",
            [
                feature("Polygon", square_coords(0, 0, 5), {"vol_id": "A", "height_m": 9.0}),
                feature("Polygon", square_coords(10, 0, 5), {"vol_id": "B"}),
                feature("Polygon", square_coords(20, 0, 5), {"vol_id": "C", "height_m": -3}),
                feature("Polygon", square_coords(30, 0, 5), {"vol_id": "D", "height_m": 999}),
            ],
        )
        report = IngestReport()
        units = load_volumetrics(path, None, report)
        assert [u.vol_id for u in units] == ["A"]
        assert report.counts["volumetrics_skipped_bad_height"] == 3

    def test_civic_year_parsing(self, tmp_path):
        path = write_fc(
            tmp_path / "c.geojson",
            [
                feature("Point", [1, 1], {"civic_id": "A", "year": 1955}),
                feature("Point", [1, 1], {"civic_id": "B", "year": "1960"}),
                feature("Point", [1, 1], {"civic_id": "C", "year": "unknown"}),
            ],
        )
        civics = load_civics(path, None, IngestReport())
        assert [c.year for c in civics] == [1955, 1960, None]


class TestGeographicInput:
    def test_degrees_projected_to_meters(self, tmp_path):
        lon0, lat0 = 11.300, 44.500
        d = 0.001
        ring = [[[lon0, lat0], [lon0 + d, lat0], [lon0 + d, lat0 + d],
                 [lon0, lat0 + d], [lon0, lat0]]]
        parcels = write_fc(
            tmp_path / "pg.geojson",
            [feature("Polygon", ring, {"parcel_id": "G1"})],
            crs=None,
        )
        vol = write_fc(
            tmp_path / "vg.geojson",
            [feature("Polygon", ring, {"vol_id": "V1", "height_m": 12.0})],
            crs=None,
        )
        empty = write_fc(tmp_path / "e.geojson", [], crs=None)
        records, report = ingest_dataset(parcels, vol, empty, empty)
        assert len(records) == 1
        # a 0.001 x 0.001 degree square near 44.5 N spans about 111.2 x 79.3 m
        want = 111.19508 ** 2 * math.cos(math.radians(44.5 + d / 2))
        assert records[0].footprint.area() == pytest.approx(want, rel=1e-3)
        assert records[0].height_m == pytest.approx(12.0)
        assert report.counts["projected_from_geographic"] == 1

    def test_metric_input_left_alone(self, layers):
        records, report = ingest_dataset(*layers)
        assert report.counts["projected_from_geographic"] == 0
        assert records[0].footprint.area() == pytest.approx(100.0)


class TestBuildingsFile:
    def test_round_trip_exact(self, layers, tmp_path):
        records, _ = ingest_dataset(*layers)
        path = tmp_path / "buildings.jsonl"
        write_buildings(records, path)
        back = read_buildings(path)
        assert back == records

    def test_round_trip_preserves_holes(self, tmp_path):
        from ubem.geoingest import BuildingRecord

        rec = BuildingRecord(
            parcel_id="H1",
            footprint=Polygon.from_coords(
                [(0, 0), (10.125, 0), (10.125, 10), (0, 10)],
                holes=[[(4, 4), (6, 4), (6, 6), (4, 6)]],
            ),
            year=1950,
            neighborhood_id="Z",
            height_m=7.125,
        )
        path = tmp_path / "b.jsonl"
        write_buildings([rec], path)
        assert read_buildings(path) == [rec]
