"""Loading and joining of the municipal GIS layers.

Four layers feed the pipeline: cadastral parcels (building footprints),
volumetric units (built bodies carrying a height), civic number points
(carrying the construction year), and neighborhood zones. Ingestion reconciles
them into one building record per parcel: each volumetric unit goes to the
parcel it mostly covers and a parcel's height is the overlap-area-weighted
mean of the units it won; the construction year is the oldest civic point
falling inside the footprint; the neighborhood is the zone containing the
centroid. Parcels without any volumetric unit keep an empty height for the
raster stage to fill.

Geometry quirks are skipped and counted rather than fatal; identity problems
(duplicate parcel ids, malformed files) abort the run.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import (
    GeometryError,
    LocalProjection,
    Polygon,
    intersection_area,
    looks_geographic,
)


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class ParcelFeature:
    parcel_id: str
    footprint: Polygon


MAX_VOLUMETRIC_HEIGHT_M = 300.0


@dataclass(frozen=True)
class VolumetricFeature:
    vol_id: str
    outline: Polygon
    height_m: float


@dataclass(frozen=True)
class CivicPoint:
    civic_id: str
    x: float
    y: float
    year: int | None


@dataclass(frozen=True)
class NeighborhoodZone:
    zone_id: str
    outline: Polygon


@dataclass(frozen=True)
class BuildingRecord:
    """One building as established by ingestion.

    height_m is None when no volumetric unit covered the parcel; the raster
    stage fills those from the surface models.
    """

    parcel_id: str
    footprint: Polygon
    year: int | None
    neighborhood_id: str
    height_m: float | None = None

    @property
    def plan_area_m2(self) -> float:
        return self.footprint.area()


@dataclass
class IngestReport:
    counts: Counter = field(default_factory=Counter)

    def bump(self, key: str, n: int = 1) -> None:
        self.counts[key] += n

    def as_dict(self) -> dict:
        return dict(sorted(self.counts.items()))


UNASSIGNED_ZONE = "UNASSIGNED"


def _read_collection(path: str | Path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("type") != "FeatureCollection":
        raise IngestError(f"{path}: expected a FeatureCollection")
    return doc


def _read_feature_collection(path: str | Path) -> list[dict]:
    return _read_collection(path).get("features", [])


METRIC_CRS_NAME = "urn:ubem:local-meters"

_METRIC_TOKENS = ("meter", "metre", "local")
_GEOGRAPHIC_TOKENS = ("crs84", "4326", "wgs")


def _crs_hint(doc: dict) -> str | None:
    """'metric', 'geographic', or None when the file carries no usable crs member."""
    name = str(((doc.get("crs") or {}).get("properties") or {}).get("name", "")).lower()
    if any(tok in name for tok in _METRIC_TOKENS):
        return "metric"
    if any(tok in name for tok in _GEOGRAPHIC_TOKENS):
        return "geographic"
    return None


def _rings_from_geometry(geom: dict) -> list[list[list[float]]] | None:
    """Polygon rings, reducing MultiPolygon to its largest part. None if unusable."""
    if not geom:
        return None
    gtype = geom.get("type")
    if gtype == "Polygon":
        return geom.get("coordinates") or None
    if gtype == "MultiPolygon":
        parts = geom.get("coordinates") or []
        best, best_area = None, -1.0
        for rings in parts:
            if not rings:
                continue
            try:
                area = Polygon.from_coords(rings[0]).area()
            except GeometryError:
                continue
            if area > best_area:
                best, best_area = rings, area
        return best
    return None


def _project_ring(ring, proj: LocalProjection | None):
    if proj is None:
        return [(float(x), float(y)) for x, y, *_ in ring]
    return [proj.to_plane(float(x), float(y)) for x, y, *_ in ring]


def _polygon_from_feature(feat: dict, proj: LocalProjection | None) -> Polygon | None:
    rings = _rings_from_geometry(feat.get("geometry"))
    if not rings:
        return None
    try:
        exterior = _project_ring(rings[0], proj)
        holes = [_project_ring(r, proj) for r in rings[1:]]
        poly = Polygon.from_coords(exterior, holes)
    except GeometryError:
        return None
    if not poly.to_shapely().is_valid:
        return None
    return poly


def _feature_id(feat: dict, prop_key: str) -> str | None:
    props = feat.get("properties") or {}
    value = props.get(prop_key, feat.get("id"))
    if value is None:
        return None
    return str(value)


def detect_projection(path: str | Path) -> LocalProjection | None:
    """Pick the frame for the whole dataset from the parcels layer.

    An explicit crs member wins; otherwise coordinates that all fit inside
    lon/lat bounds are treated as geographic and projected onto a local
    tangent plane centered on the layer bbox. Returns None for metric input.
    """
    doc = _read_collection(path)
    hint = _crs_hint(doc)
    if hint == "metric":
        return None
    coords: list[tuple[float, float]] = []
    for feat in doc.get("features", []):
        rings = _rings_from_geometry(feat.get("geometry"))
        if rings:
            coords.extend((float(x), float(y)) for x, y, *_ in rings[0])
    if not coords:
        return None
    if hint != "geographic" and not looks_geographic(coords):
        return None
    xs = [c[0] for c in coords]
    ys = [c[1] for c in coords]
    return LocalProjection(lat0=(min(ys) + max(ys)) / 2.0, lon0=(min(xs) + max(xs)) / 2.0)


def load_parcels(
    path: str | Path, proj: LocalProjection | None, report: IngestReport
) -> list[ParcelFeature]:
    parcels: list[ParcelFeature] = []
    seen: set[str] = set()
    for feat in _read_feature_collection(path):
        pid = _feature_id(feat, "parcel_id")
        if pid is None:
            report.bump("parcels_skipped_missing_id")
            continue
        if pid in seen:
            raise IngestError(f"duplicate parcel_id {pid!r}")
        poly = _polygon_from_feature(feat, proj)
        if poly is None:
            report.bump("parcels_skipped_invalid_geometry")
            continue
        seen.add(pid)
        parcels.append(ParcelFeature(pid, poly))
    report.bump("parcels_loaded", len(parcels))
    return parcels


def load_volumetrics(
    path: str | Path,
    proj: LocalProjection | None,
    report: IngestReport,
    height_key: str = "height_m",
) -> list[VolumetricFeature]:
    units: list[VolumetricFeature] = []
    for feat in _read_feature_collection(path):
        vid = _feature_id(feat, "vol_id")
        if vid is None:
            report.bump("volumetrics_skipped_missing_id")
            continue
        poly = _polygon_from_feature(feat, proj)
        if poly is None:
            report.bump("volumetrics_skipped_invalid_geometry")
            continue
        try:
            height = float((feat.get("properties") or {}).get(height_key))
        except (TypeError, ValueError):
            height = float("nan")
        if not (0.0 < height <= MAX_VOLUMETRIC_HEIGHT_M):
            report.bump("volumetrics_skipped_bad_height")
            continue
        units.append(VolumetricFeature(vid, poly, height))
    report.bump("volumetrics_loaded", len(units))
    return units


def load_civics(
    path: str | Path, proj: LocalProjection | None, report: IngestReport
) -> list[CivicPoint]:
    civics: list[CivicPoint] = []
    for feat in _read_feature_collection(path):
        cid = _feature_id(feat, "civic_id")
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point" or cid is None:
            report.bump("civics_skipped")
            continue
        x, y, *_ = geom.get("coordinates", (None, None))
        if x is None:
            report.bump("civics_skipped")
            continue
        if proj is not None:
            x, y = proj.to_plane(float(x), float(y))
        year_raw = (feat.get("properties") or {}).get("year")
        try:
            year = int(year_raw) if year_raw is not None else None
        except (TypeError, ValueError):
            year = None
        civics.append(CivicPoint(cid, float(x), float(y), year))
    report.bump("civics_loaded", len(civics))
    return civics


def load_neighborhoods(
    path: str | Path, proj: LocalProjection | None, report: IngestReport
) -> list[NeighborhoodZone]:
    zones: list[NeighborhoodZone] = []
    for feat in _read_feature_collection(path):
        zid = _feature_id(feat, "zone_id")
        if zid is None:
            report.bump("neighborhoods_skipped_missing_id")
            continue
        poly = _polygon_from_feature(feat, proj)
        if poly is None:
            report.bump("neighborhoods_skipped_invalid_geometry")
            continue
        zones.append(NeighborhoodZone(zid, poly))
    report.bump("neighborhoods_loaded", len(zones))
    return zones


def join_volumetrics(
    parcels: list[ParcelFeature],
    volumetrics: list[VolumetricFeature],
    report: IngestReport,
) -> dict[str, float]:
    """parcel_id -> height from the volumetric layer.

    Each unit is attributed to the single parcel it overlaps most; a parcel
    that wins several units gets the mean of their heights weighted by the
    overlap areas. Parcels winning nothing are absent from the map.
    """
    from shapely.strtree import STRtree

    if not parcels or not volumetrics:
        report.bump("parcels_unbuilt", len(parcels))
        return {}
    tree = STRtree([p.footprint.to_shapely() for p in parcels])
    won: dict[str, list[tuple[float, float]]] = {}
    # unit order and tie-breaks are fixed by ids so input shuffles cannot
    # change any assignment or the weighted-sum order
    for unit in sorted(volumetrics, key=lambda v: v.vol_id):
        gu = unit.outline.to_shapely()
        candidates = []
        for idx in tree.query(gu):
            parcel = parcels[int(idx)]
            area = intersection_area(unit.outline, parcel.footprint)
            if area > 0.0:
                candidates.append((-area, parcel.parcel_id))
        if not candidates:
            report.bump("volumetrics_unmatched")
            continue
        neg_area, pid = min(candidates)
        won.setdefault(pid, []).append((-neg_area, unit.height_m))
    heights: dict[str, float] = {}
    for pid, items in won.items():
        if len(items) == 1:
            # keep a lone unit's height exact rather than multiply-divide it
            heights[pid] = items[0][1]
            continue
        total = sum(area for area, _ in items)
        heights[pid] = sum(area * h for area, h in items) / total
    report.bump("parcels_unbuilt", len(parcels) - len(heights))
    report.bump("parcels_matched_volumetric", len(heights))
    return heights


def join_civics(
    parcels: list[ParcelFeature], civics: list[CivicPoint], report: IngestReport
) -> dict[str, int]:
    """parcel_id -> construction year, the oldest among civic points inside the footprint."""
    years: dict[str, int] = {}
    unmatched = 0
    for civic in civics:
        if civic.year is None:
            continue
        hit = False
        for parcel in parcels:
            xmin, ymin, xmax, ymax = parcel.footprint.bounds()
            if not (xmin <= civic.x <= xmax and ymin <= civic.y <= ymax):
                continue
            if parcel.footprint.contains(civic.x, civic.y):
                prev = years.get(parcel.parcel_id)
                if prev is None or civic.year < prev:
                    years[parcel.parcel_id] = civic.year
                hit = True
                break
        if not hit:
            unmatched += 1
    report.bump("civics_unmatched", unmatched)
    report.bump("parcels_with_year", len(years))
    return years


def assign_neighborhoods(
    parcels: list[ParcelFeature], zones: list[NeighborhoodZone], report: IngestReport
) -> dict[str, str]:
    """parcel_id -> zone containing the footprint centroid, UNASSIGNED when none does."""
    out: dict[str, str] = {}
    for parcel in parcels:
        cx, cy = parcel.footprint.centroid()
        zone_id = UNASSIGNED_ZONE
        for zone in zones:
            xmin, ymin, xmax, ymax = zone.outline.bounds()
            if xmin <= cx <= xmax and ymin <= cy <= ymax and zone.outline.contains(cx, cy):
                zone_id = zone.zone_id
                break
        if zone_id == UNASSIGNED_ZONE:
            report.bump("parcels_without_neighborhood")
        out[parcel.parcel_id] = zone_id
    return out


def integrate(
    parcels: list[ParcelFeature],
    volumetrics: list[VolumetricFeature],
    civics: list[CivicPoint],
    zones: list[NeighborhoodZone],
    report: IngestReport | None = None,
) -> tuple[list[BuildingRecord], IngestReport]:
    """Join all layers into building records, sorted by parcel id."""
    report = report or IngestReport()
    height_by_parcel = join_volumetrics(parcels, volumetrics, report)
    year_by_parcel = join_civics(parcels, civics, report)
    zone_by_parcel = assign_neighborhoods(parcels, zones, report)
    records = [
        BuildingRecord(
            parcel_id=p.parcel_id,
            footprint=p.footprint,
            year=year_by_parcel.get(p.parcel_id),
            neighborhood_id=zone_by_parcel[p.parcel_id],
            height_m=height_by_parcel.get(p.parcel_id),
        )
        for p in parcels
    ]
    records.sort(key=lambda r: r.parcel_id)
    report.bump("buildings_integrated", len(records))
    return records, report


def ingest_dataset(
    parcels_path: str | Path,
    volumetrics_path: str | Path,
    civics_path: str | Path,
    neighborhoods_path: str | Path,
) -> tuple[list[BuildingRecord], IngestReport]:
    """Full ingestion: detect the frame from parcels, load all layers, join."""
    report = IngestReport()
    proj = detect_projection(parcels_path)
    report.bump("projected_from_geographic", 1 if proj else 0)
    parcels = load_parcels(parcels_path, proj, report)
    volumetrics = load_volumetrics(volumetrics_path, proj, report)
    civics = load_civics(civics_path, proj, report)
    zones = load_neighborhoods(neighborhoods_path, proj, report)
    return integrate(parcels, volumetrics, civics, zones, report)


def write_buildings(records: list[BuildingRecord], path: str | Path) -> None:
    """One JSON object per line, stable key order, exact float round-trip."""
    with open(path, "w", newline="\n") as fh:
        for rec in records:
            obj = {
                "parcel_id": rec.parcel_id,
                "footprint": {
                    "exterior": [list(p) for p in rec.footprint.exterior],
                    "holes": [[list(p) for p in h] for h in rec.footprint.holes],
                },
                "year": rec.year,
                "neighborhood_id": rec.neighborhood_id,
                "height_m": rec.height_m,
            }
            fh.write(json.dumps(obj, sort_keys=True))
            fh.write("\n")


def read_buildings(path: str | Path) -> list[BuildingRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            fp = obj["footprint"]
            records.append(
                BuildingRecord(
                    parcel_id=obj["parcel_id"],
                    footprint=Polygon.from_coords(fp["exterior"], fp.get("holes", [])),
                    year=obj.get("year"),
                    neighborhood_id=obj.get("neighborhood_id", UNASSIGNED_ZONE),
                    height_m=obj.get("height_m"),
                )
            )
    return records
