"""LoD1 building models: footprint extrusion, window placement, neighbor shading.

A model is the footprint extruded to the extracted eave height. Every exterior
edge becomes one facade (slivers below half a meter are merged away first),
glazing totals one eighth of the plan area spread over facades in proportion to
wall area, and the sky around each building is summarized as a 36-sector
horizon of obstruction angles built from neighboring prisms. That horizon is
all the thermal engine needs to shade direct beam and scale diffuse light.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .archetypes import ArchetypePeriod, assign_period
from .geometry import Polygon

MIN_EDGE_M = 0.5
WINDOW_TO_PLAN_RATIO = 1.0 / 8.0
MAX_WINDOW_WALL_FRACTION = 0.95
FLOOR_HEIGHT_M = 3.0
HORIZON_SECTORS = 36
SECTOR_WIDTH_DEG = 360.0 / HORIZON_SECTORS
MIN_SHADING_GAP_M = 1.0

MODEL_FORMAT = "ubm/1"


class ModelBuildError(ValueError):
    pass


@dataclass
class Facade:
    azimuth_deg: float
    length_m: float
    wall_area_m2: float
    window_area_m2: float = 0.0


@dataclass(frozen=True)
class ShadingPrism:
    """A neighboring building reduced to what shading needs."""

    parcel_id: str
    distance_m: float
    bearing_deg: float
    eq_radius_m: float
    height_m: float


@dataclass(frozen=True)
class HorizonProfile:
    """Obstruction elevation per 10-degree azimuth sector, clockwise from north."""

    angles_deg: tuple[float, ...]
    sky_view_factor: float

    def sector_of(self, azimuth_deg: float) -> int:
        return int(azimuth_deg % 360.0 // SECTOR_WIDTH_DEG) % HORIZON_SECTORS

    def beam_blocked(self, altitude_deg: float, azimuth_deg: float) -> bool:
        return altitude_deg < self.angles_deg[self.sector_of(azimuth_deg)]


OPEN_HORIZON = HorizonProfile(angles_deg=(0.0,) * HORIZON_SECTORS, sky_view_factor=1.0)


@dataclass
class BuildingModel:
    parcel_id: str
    period: ArchetypePeriod
    neighborhood_id: str
    height_m: float
    plan_area_m2: float
    perimeter_m: float
    floors: int
    floor_area_m2: float
    volume_m3: float
    centroid_x: float
    centroid_y: float
    eq_radius_m: float
    facades: list[Facade]
    horizon: HorizonProfile = OPEN_HORIZON

    @property
    def roof_area_m2(self) -> float:
        return self.plan_area_m2

    @property
    def slab_area_m2(self) -> float:
        return self.plan_area_m2

    @property
    def window_area_m2(self) -> float:
        return sum(f.window_area_m2 for f in self.facades)

    @property
    def wall_area_m2(self) -> float:
        return sum(f.wall_area_m2 for f in self.facades)

    def opaque_wall_area_m2(self) -> float:
        return self.wall_area_m2 - self.window_area_m2


def merge_short_edges(ring: tuple[tuple[float, float], ...], min_edge: float = MIN_EDGE_M):
    """Collapse edges shorter than min_edge by dropping their far endpoint.

    Always removes the shortest offending edge first so the result does not
    depend on where the ring happens to start.
    """
    pts = list(ring)
    while len(pts) > 3:
        n = len(pts)
        lengths = [
            math.hypot(pts[(i + 1) % n][0] - pts[i][0], pts[(i + 1) % n][1] - pts[i][1])
            for i in range(n)
        ]
        shortest = min(range(n), key=lambda i: (lengths[i], i))
        if lengths[shortest] >= min_edge:
            break
        del pts[(shortest + 1) % n]
    return tuple(pts)


def edge_azimuth_deg(p0: tuple[float, float], p1: tuple[float, float]) -> float:
    """Outward-normal bearing of a counter-clockwise ring edge."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    # outward normal of CCW travel is (dy, -dx)
    return math.degrees(math.atan2(dy, -dx)) % 360.0


def extrude(footprint: Polygon, height_m: float) -> list[Facade]:
    """One facade per exterior edge after sliver merging."""
    if height_m <= 0:
        raise ModelBuildError("extrusion needs a positive height")
    ring = merge_short_edges(footprint.exterior)
    facades = []
    n = len(ring)
    for i in range(n):
        p0, p1 = ring[i], ring[(i + 1) % n]
        length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
        facades.append(
            Facade(
                azimuth_deg=edge_azimuth_deg(p0, p1),
                length_m=length,
                wall_area_m2=length * height_m,
            )
        )
    return facades


def distribute_with_cap(weights: list[float], total: float, caps: list[float]) -> list[float]:
    """Split total proportionally to weights, never exceeding per-slot caps.

    Capped slots freeze at their cap and the excess re-spreads over the rest.
    Raises when the caps cannot absorb the total.
    """
    if total > sum(caps) + 1e-9:
        raise ModelBuildError(
            f"cannot place {total:.3f} within caps totalling {sum(caps):.3f}"
        )
    values = [0.0] * len(weights)
    active = set(range(len(weights)))
    remaining = total
    while remaining > 1e-12 and active:
        weight_sum = sum(weights[i] for i in active)
        if weight_sum <= 0:
            raise ModelBuildError("no capacity left to absorb window area")
        overflow = 0.0
        newly_frozen = []
        for i in sorted(active):
            share = values[i] + remaining * weights[i] / weight_sum
            if share > caps[i]:
                overflow += share - caps[i]
                values[i] = caps[i]
                newly_frozen.append(i)
            else:
                values[i] = share
        remaining = overflow
        for i in newly_frozen:
            active.discard(i)
        if not newly_frozen and remaining > 1e-12:
            raise ModelBuildError("window redistribution failed to converge")
    return values


def place_windows(facades: list[Facade], plan_area_m2: float) -> None:
    """Assign glazing so the window-to-plan ratio is exactly one eighth."""
    target = plan_area_m2 * WINDOW_TO_PLAN_RATIO
    weights = [f.wall_area_m2 for f in facades]
    caps = [f.wall_area_m2 * MAX_WINDOW_WALL_FRACTION for f in facades]
    try:
        areas = distribute_with_cap(weights, target, caps)
    except ModelBuildError as exc:
        raise ModelBuildError(
            f"required window area {target:.2f} m2 does not fit on "
            f"{sum(weights):.2f} m2 of wall"
        ) from exc
    for facade, area in zip(facades, areas):
        facade.window_area_m2 = area


def floor_count(height_m: float) -> int:
    return max(1, math.floor(height_m / FLOOR_HEIGHT_M + 0.5))


def build_bare_model(
    parcel_id: str,
    footprint: Polygon,
    height_m: float,
    year: int | None,
    neighborhood_id: str,
) -> BuildingModel:
    plan_area = footprint.area()
    if plan_area <= 0:
        raise ModelBuildError(f"{parcel_id}: footprint has no area")
    facades = extrude(footprint, height_m)
    place_windows(facades, plan_area)
    floors = floor_count(height_m)
    cx, cy = footprint.centroid()
    return BuildingModel(
        parcel_id=parcel_id,
        period=assign_period(year),
        neighborhood_id=neighborhood_id,
        height_m=height_m,
        plan_area_m2=plan_area,
        perimeter_m=sum(f.length_m for f in facades),
        floors=floors,
        floor_area_m2=plan_area * floors,
        volume_m3=plan_area * height_m,
        centroid_x=cx,
        centroid_y=cy,
        eq_radius_m=footprint.equivalent_radius(),
        facades=facades,
    )


def collect_neighbors(
    models: list[BuildingModel], radius_m: float
) -> dict[str, list[ShadingPrism]]:
    """Shading prisms per building: every other building whose centroid is in range."""
    from scipy.spatial import cKDTree

    if radius_m <= 0:
        raise ModelBuildError("shading radius must be positive")
    out: dict[str, list[ShadingPrism]] = {m.parcel_id: [] for m in models}
    if len(models) < 2:
        return out
    centers = [(m.centroid_x, m.centroid_y) for m in models]
    tree = cKDTree(centers)
    pairs = tree.query_pairs(r=radius_m, output_type="ndarray")
    for i, j in sorted(map(tuple, pairs)):
        a, b = models[int(i)], models[int(j)]
        dx, dy = b.centroid_x - a.centroid_x, b.centroid_y - a.centroid_y
        dist = math.hypot(dx, dy)
        bearing_ab = math.degrees(math.atan2(dx, dy)) % 360.0
        bearing_ba = (bearing_ab + 180.0) % 360.0
        out[a.parcel_id].append(
            ShadingPrism(b.parcel_id, dist, bearing_ab, b.eq_radius_m, b.height_m)
        )
        out[b.parcel_id].append(
            ShadingPrism(a.parcel_id, dist, bearing_ba, a.eq_radius_m, a.height_m)
        )
    for prisms in out.values():
        prisms.sort(key=lambda p: p.parcel_id)
    return out


def build_horizon(model: BuildingModel, neighbors: list[ShadingPrism]) -> HorizonProfile:
    """Max obstruction elevation per sector seen from the facade mid-height."""
    angles = [0.0] * HORIZON_SECTORS
    mid_height = model.height_m / 2.0
    for prism in neighbors:
        rise = prism.height_m - mid_height
        if rise <= 0:
            continue
        gap = max(MIN_SHADING_GAP_M, prism.distance_m - model.eq_radius_m - prism.eq_radius_m)
        elevation = math.degrees(math.atan(rise / gap))
        half_width = math.degrees(math.atan(prism.eq_radius_m / gap))
        lo = prism.bearing_deg - half_width
        hi = prism.bearing_deg + half_width
        s_lo = math.floor(lo / SECTOR_WIDTH_DEG)
        s_hi = math.floor(hi / SECTOR_WIDTH_DEG)
        for s in range(s_lo, s_hi + 1):
            idx = s % HORIZON_SECTORS
            if elevation > angles[idx]:
                angles[idx] = elevation
    sky_view = sum(math.cos(math.radians(a)) ** 2 for a in angles) / HORIZON_SECTORS
    return HorizonProfile(angles_deg=tuple(angles), sky_view_factor=sky_view)


def build_models(
    records,
    heights_by_parcel: dict[str, float],
    shading_radius_m: float,
) -> list[BuildingModel]:
    """Bare geometry first, then horizons, since shading needs every height placed."""
    models = []
    for rec in records:
        if rec.parcel_id not in heights_by_parcel:
            raise ModelBuildError(f"no extracted height for parcel {rec.parcel_id}")
        models.append(
            build_bare_model(
                parcel_id=rec.parcel_id,
                footprint=rec.footprint,
                height_m=heights_by_parcel[rec.parcel_id],
                year=rec.year,
                neighborhood_id=rec.neighborhood_id,
            )
        )
    models.sort(key=lambda m: m.parcel_id)
    neighbor_map = collect_neighbors(models, shading_radius_m)
    for model in models:
        model.horizon = build_horizon(model, neighbor_map[model.parcel_id])
    return models


def model_to_dict(model: BuildingModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "parcel_id": model.parcel_id,
        "period": model.period.name,
        "neighborhood_id": model.neighborhood_id,
        "height_m": model.height_m,
        "plan_area_m2": model.plan_area_m2,
        "perimeter_m": model.perimeter_m,
        "floors": model.floors,
        "floor_area_m2": model.floor_area_m2,
        "volume_m3": model.volume_m3,
        "centroid_x": model.centroid_x,
        "centroid_y": model.centroid_y,
        "eq_radius_m": model.eq_radius_m,
        "facades": [
            {
                "azimuth_deg": f.azimuth_deg,
                "length_m": f.length_m,
                "wall_area_m2": f.wall_area_m2,
                "window_area_m2": f.window_area_m2,
            }
            for f in model.facades
        ],
        "horizon": {
            "angles_deg": list(model.horizon.angles_deg),
            "sky_view_factor": model.horizon.sky_view_factor,
        },
    }


def model_from_dict(obj: dict) -> BuildingModel:
    if obj.get("format") != MODEL_FORMAT:
        raise ModelBuildError(f"unsupported model format {obj.get('format')!r}")
    horizon = obj["horizon"]
    return BuildingModel(
        parcel_id=obj["parcel_id"],
        period=ArchetypePeriod[obj["period"]],
        neighborhood_id=obj["neighborhood_id"],
        height_m=obj["height_m"],
        plan_area_m2=obj["plan_area_m2"],
        perimeter_m=obj["perimeter_m"],
        floors=obj["floors"],
        floor_area_m2=obj["floor_area_m2"],
        volume_m3=obj["volume_m3"],
        centroid_x=obj["centroid_x"],
        centroid_y=obj["centroid_y"],
        eq_radius_m=obj["eq_radius_m"],
        facades=[
            Facade(
                azimuth_deg=f["azimuth_deg"],
                length_m=f["length_m"],
                wall_area_m2=f["wall_area_m2"],
                window_area_m2=f["window_area_m2"],
            )
            for f in obj["facades"]
        ],
        horizon=HorizonProfile(
            angles_deg=tuple(horizon["angles_deg"]),
            sky_view_factor=horizon["sky_view_factor"],
        ),
    )


def write_model(model: BuildingModel, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_model(path: str | Path) -> BuildingModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def write_models(models: list[BuildingModel], path: str | Path) -> None:
    """Whole stock as one model object per line, ordered by parcel id."""
    ordered = sorted(models, key=lambda m: m.parcel_id)
    with open(path, "w", newline="\n") as fh:
        for model in ordered:
            fh.write(json.dumps(model_to_dict(model), sort_keys=True))
            fh.write("\n")


def read_models(path: str | Path) -> list[BuildingModel]:
    models = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                models.append(model_from_dict(json.loads(line)))
    return models
