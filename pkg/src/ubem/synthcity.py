"""Deterministic synthetic city generator.

Builds a jittered-grid town with known heights, construction years and
neighborhoods, then writes it out in exactly the formats the pipeline
ingests: four GeoJSON layers, a DSM/DTM raster pair, and an EPW weather
file. Because every quantity is drawn from a per-building RNG stream keyed
on (seed, building index), the same config reproduces the same bytes, and
the generator itself serves as ground truth for height extraction and
stock statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .archetypes import PERIODS, assign_period
from .geoingest import METRIC_CRS_NAME, BuildingRecord
from .geometry import Polygon
from .terrain import RasterGrid, write_raster
from .weather import HOURS_PER_YEAR, WeatherSeries, write_epw


class SynthConfigError(ValueError):
    pass


# Construction-period mix used when none is configured. Mid-century housing
# dominates, matching the bulge such stocks typically show.
DEFAULT_YEAR_WEIGHTS = (0.10, 0.09, 0.13, 0.24, 0.18, 0.12, 0.08, 0.06)

# Year span sampled inside each period, oldest first, inclusive bounds.
_PERIOD_YEAR_SPAN = (
    (1850, 1900),
    (1901, 1920),
    (1921, 1945),
    (1946, 1960),
    (1961, 1975),
    (1976, 1990),
    (1991, 2005),
    (2006, 2020),
)

_WEIGHT_SUM_TOL = 1e-9

# Clearance kept between a footprint and its grid cell so neighbors never touch.
EDGE_MARGIN_M = 1.0

# Raster apron beyond the outermost grid cells.
RASTER_APRON_M = 3.0

SITE_LATITUDE_DEG = 44.50
SITE_LONGITUDE_DEG = 11.35
SITE_TIMEZONE_H = 1.0
SITE_ELEVATION_M = 54.0

LAYER_FILES = {
    "parcels": "footprints.geojson",
    "volumetrics": "volumetrics.geojson",
    "civics": "civics.geojson",
    "neighborhoods": "neighborhoods.geojson",
}
RASTER_FILES = {"dsm": "dsm.asc", "dtm": "dtm.asc"}
WEATHER_FILE = "weather.epw"
TRUTH_FILE = "truth.json"


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one synthetic town.

    Buildings sit one per cell on a cols x rows grid of pitch grid_spacing_m,
    jittered inside their cell. Footprints are axis-aligned rectangles with
    side lengths in [footprint_min_m, footprint_max_m] and eave heights in
    [height_min_m, height_max_m]. year_weights give the probability of each
    of the eight construction periods, oldest first. A volumetric_fraction
    share of buildings also appear in the volumetric layer carrying their
    height; the rest must get theirs from the rasters. The terrain is the
    plane dtm_base_m + dtm_slope * x.
    """

    seed: int = 0
    n_buildings: int = 100
    grid_spacing_m: float = 20.0
    footprint_min_m: float = 8.0
    footprint_max_m: float = 14.0
    height_min_m: float = 4.0
    height_max_m: float = 15.0
    year_weights: tuple = DEFAULT_YEAR_WEIGHTS
    n_neighborhoods: int = 4
    cellsize_m: float = 0.5
    dtm_slope: float = 0.0
    dtm_base_m: float = 40.0
    volumetric_fraction: float = 0.7

    def validate(self) -> None:
        if self.n_buildings < 1:
            raise SynthConfigError("n_buildings must be at least 1")
        if self.grid_spacing_m <= 0:
            raise SynthConfigError("grid_spacing_m must be positive")
        if not 0 < self.footprint_min_m <= self.footprint_max_m:
            raise SynthConfigError("footprint range must satisfy 0 < min <= max")
        if not 0 < self.height_min_m <= self.height_max_m:
            raise SynthConfigError("height range must satisfy 0 < min <= max")
        weights = tuple(self.year_weights)
        if len(weights) != len(PERIODS):
            raise SynthConfigError(
                f"year_weights needs {len(PERIODS)} entries, got {len(weights)}"
            )
        if any(w < 0 for w in weights):
            raise SynthConfigError("year_weights must be non-negative")
        if abs(sum(weights) - 1.0) > _WEIGHT_SUM_TOL:
            raise SynthConfigError(f"year_weights must sum to 1, got {sum(weights)!r}")
        if self.n_neighborhoods < 1:
            raise SynthConfigError("n_neighborhoods must be at least 1")
        if self.cellsize_m <= 0:
            raise SynthConfigError("cellsize_m must be positive")
        if not 0.0 <= self.volumetric_fraction <= 1.0:
            raise SynthConfigError("volumetric_fraction must lie in [0, 1]")
        room = self.grid_spacing_m - 2.0 * EDGE_MARGIN_M
        if self.footprint_max_m > room:
            raise SynthConfigError(
                "density infeasible: footprint_max_m "
                f"{self.footprint_max_m} plus {EDGE_MARGIN_M} m clearance per side "
                f"does not fit grid_spacing_m {self.grid_spacing_m}"
            )

    @property
    def grid_cols(self) -> int:
        return int(math.ceil(math.sqrt(self.n_buildings)))

    @property
    def grid_rows(self) -> int:
        return int(math.ceil(self.n_buildings / self.grid_cols))

    @property
    def extent_m(self) -> tuple[float, float]:
        """Width and height of the gridded area."""
        return (
            self.grid_cols * self.grid_spacing_m,
            self.grid_rows * self.grid_spacing_m,
        )


@dataclass(frozen=True)
class SynthBuilding:
    """Ground truth for one generated building."""

    parcel_id: str
    footprint: Polygon
    height_m: float
    year: int
    neighborhood_id: str
    has_volumetric: bool

    @property
    def centroid(self) -> tuple[float, float]:
        return self.footprint.centroid()


def _building_rng(seed: int, index: int) -> np.random.Generator:
    # one independent, order-insensitive stream per building
    return np.random.default_rng([seed, index])


def _zone_id(index: int) -> str:
    return f"Z{index + 1:02d}"


def generate_stock(config: SynthConfig) -> list[SynthBuilding]:
    """All buildings of the town, in parcel id order, without touching disk."""
    config.validate()
    cols = config.grid_cols
    spacing = config.grid_spacing_m
    width = config.extent_m[0]
    strip_w = width / config.n_neighborhoods
    cum_weights = np.cumsum(np.asarray(config.year_weights, dtype=float))
    pad = len(str(max(config.n_buildings - 1, 1)))
    buildings: list[SynthBuilding] = []
    for i in range(config.n_buildings):
        rng = _building_rng(config.seed, i)
        row, col = divmod(i, cols)
        w = rng.uniform(config.footprint_min_m, config.footprint_max_m)
        d = rng.uniform(config.footprint_min_m, config.footprint_max_m)
        x0 = col * spacing + EDGE_MARGIN_M + rng.uniform(0.0, spacing - w - 2 * EDGE_MARGIN_M)
        y0 = row * spacing + EDGE_MARGIN_M + rng.uniform(0.0, spacing - d - 2 * EDGE_MARGIN_M)
        height = rng.uniform(config.height_min_m, config.height_max_m)
        period_idx = int(np.searchsorted(cum_weights, rng.random(), side="right"))
        period_idx = min(period_idx, len(PERIODS) - 1)
        lo, hi = _PERIOD_YEAR_SPAN[period_idx]
        year = int(rng.integers(lo, hi + 1))
        has_vol = bool(rng.random() < config.volumetric_fraction)
        footprint = Polygon.from_coords(
            [(x0, y0), (x0 + w, y0), (x0 + w, y0 + d), (x0, y0 + d)]
        )
        cx = x0 + w / 2.0
        zone = _zone_id(min(int(cx / strip_w), config.n_neighborhoods - 1))
        buildings.append(
            SynthBuilding(
                parcel_id=f"B{i:0{pad}d}",
                footprint=footprint,
                height_m=height,
                year=year,
                neighborhood_id=zone,
                has_volumetric=has_vol,
            )
        )
    return buildings


def stock_records(stock: list[SynthBuilding]) -> list[BuildingRecord]:
    """Building records straight from truth, bypassing the file pipeline."""
    return [
        BuildingRecord(
            parcel_id=b.parcel_id,
            footprint=b.footprint,
            year=b.year,
            neighborhood_id=b.neighborhood_id,
            height_m=b.height_m,
        )
        for b in stock
    ]


def _ring_coords(poly: Polygon) -> list[list[float]]:
    ring = [[float(x), float(y)] for x, y in poly.exterior]
    ring.append(ring[0])
    return ring


def _feature_collection(features: list[dict]) -> dict:
    return {
        "type": "FeatureCollection",
        "crs": {"type": "name", "properties": {"name": METRIC_CRS_NAME}},
        "features": features,
    }


def _polygon_feature(props: dict, poly: Polygon) -> dict:
    return {
        "type": "Feature",
        "properties": props,
        "geometry": {"type": "Polygon", "coordinates": [_ring_coords(poly)]},
    }


def _write_json(doc: dict, path: Path) -> None:
    with path.open("w", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _neighborhood_features(config: SynthConfig) -> list[dict]:
    width, height = config.extent_m
    strip_w = width / config.n_neighborhoods
    y0 = -RASTER_APRON_M
    y1 = height + RASTER_APRON_M
    feats = []
    for j in range(config.n_neighborhoods):
        x0 = j * strip_w if j > 0 else -RASTER_APRON_M
        x1 = (j + 1) * strip_w if j < config.n_neighborhoods - 1 else width + RASTER_APRON_M
        poly = Polygon.from_coords([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
        feats.append(_polygon_feature({"zone_id": _zone_id(j)}, poly))
    return feats


def _terrain_height(config: SynthConfig, x: float) -> float:
    return config.dtm_base_m + config.dtm_slope * x


def build_rasters(config: SynthConfig, stock: list[SynthBuilding]) -> tuple[RasterGrid, RasterGrid]:
    """DTM plane and the DSM with one flat-roofed prism per building.

    The roof of each building sits at terrain-at-centroid plus its height, so
    on sloped ground the surface-minus-terrain difference varies a little
    across the footprint, just as a real level roof would make it.
    """
    width, height = config.extent_m
    cs = config.cellsize_m
    xll = -RASTER_APRON_M
    yll = -RASTER_APRON_M
    ncols = int(math.ceil((width + 2 * RASTER_APRON_M) / cs))
    nrows = int(math.ceil((height + 2 * RASTER_APRON_M) / cs))
    x_centers = xll + (np.arange(ncols) + 0.5) * cs
    dtm_row = config.dtm_base_m + config.dtm_slope * x_centers
    dtm = np.tile(dtm_row, (nrows, 1))
    dsm = dtm.copy()
    top_y = yll + nrows * cs
    for b in stock:
        x0, y0, x1, y1 = b.footprint.bounds()
        roof = _terrain_height(config, b.centroid[0]) + b.height_m
        c0 = max(int(math.floor((x0 - xll) / cs - 0.5)) + 1, 0)
        c1 = min(int(math.ceil((x1 - xll) / cs - 0.5)), ncols)
        r0 = max(int(math.floor((top_y - y1) / cs - 0.5)) + 1, 0)
        r1 = min(int(math.ceil((top_y - y0) / cs - 0.5)), nrows)
        if c0 < c1 and r0 < r1:
            block = dsm[r0:r1, c0:c1]
            np.maximum(block, roof, out=block)
    grid_kw = dict(xll=xll, yll=yll, cellsize=cs)
    return RasterGrid(data=dsm, **grid_kw), RasterGrid(data=dtm, **grid_kw)


def build_weather(config: SynthConfig) -> WeatherSeries:
    """Temperate heating-dominated year: seasonal and diurnal sinusoids with
    a per-day cloudiness draw, cold winters around 2 C and warm summers
    around 24 C."""
    t = np.arange(HOURS_PER_YEAR)
    day = t // 24
    hod = t % 24
    seasonal = -np.cos(2.0 * np.pi * (day - 15) / 365.0)
    diurnal = np.sin(2.0 * np.pi * (hod - 9) / 24.0)
    rng = np.random.default_rng([config.seed, 982451653])
    drybulb = 13.0 + 11.0 * seasonal + 4.0 * diurnal + rng.normal(0.0, 0.3, HOURS_PER_YEAR)
    sun_shape = np.clip(np.sin(np.pi * (hod - 6) / 12.0), 0.0, None)
    season_sun = 0.75 + 0.25 * seasonal
    cloud = rng.uniform(0.45, 1.0, 365)[day]
    dni = 860.0 * sun_shape * season_sun * cloud
    dhi = (60.0 + 110.0 * sun_shape) * season_sun * (sun_shape > 0.0)
    return WeatherSeries(
        latitude_deg=SITE_LATITUDE_DEG,
        longitude_deg=SITE_LONGITUDE_DEG,
        tz_offset_h=SITE_TIMEZONE_H,
        elevation_m=SITE_ELEVATION_M,
        drybulb_c=drybulb,
        dni_wm2=dni,
        dhi_wm2=dhi,
    )


def truth_payload(config: SynthConfig, stock: list[SynthBuilding]) -> dict:
    return {
        "config": asdict(config) | {"year_weights": list(config.year_weights)},
        "buildings": {
            b.parcel_id: {
                "height_m": b.height_m,
                "year": b.year,
                "period": assign_period(b.year).name,
                "neighborhood_id": b.neighborhood_id,
                "has_volumetric": b.has_volumetric,
            }
            for b in stock
        },
    }


def generate(config: SynthConfig, outdir: str | Path) -> dict:
    """Write the whole town under outdir and return a manifest of paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stock = generate_stock(config)

    parcel_feats = [
        _polygon_feature({"parcel_id": b.parcel_id}, b.footprint) for b in stock
    ]
    vol_feats = [
        _polygon_feature({"vol_id": f"V{b.parcel_id[1:]}", "height_m": b.height_m}, b.footprint)
        for b in stock
        if b.has_volumetric
    ]
    civic_feats = [
        {
            "type": "Feature",
            "properties": {"civic_id": f"C{b.parcel_id[1:]}", "year": b.year},
            "geometry": {
                "type": "Point",
                "coordinates": [float(b.centroid[0]), float(b.centroid[1])],
            },
        }
        for b in stock
    ]

    paths = {name: outdir / fname for name, fname in LAYER_FILES.items()}
    _write_json(_feature_collection(parcel_feats), paths["parcels"])
    _write_json(_feature_collection(vol_feats), paths["volumetrics"])
    _write_json(_feature_collection(civic_feats), paths["civics"])
    _write_json(_feature_collection(_neighborhood_features(config)), paths["neighborhoods"])

    dsm, dtm = build_rasters(config, stock)
    paths["dsm"] = outdir / RASTER_FILES["dsm"]
    paths["dtm"] = outdir / RASTER_FILES["dtm"]
    write_raster(dsm, paths["dsm"])
    write_raster(dtm, paths["dtm"])

    paths["epw"] = outdir / WEATHER_FILE
    write_epw(build_weather(config), paths["epw"], city="SynthTown")

    paths["truth"] = outdir / TRUTH_FILE
    _write_json(truth_payload(config, stock), paths["truth"])

    manifest = {name: str(p) for name, p in paths.items()}
    manifest["n_buildings"] = len(stock)
    manifest["n_volumetric"] = len(vol_feats)
    return manifest
