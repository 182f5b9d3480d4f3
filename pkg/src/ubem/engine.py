"""Single-zone thermal simulation: an hourly dynamic engine and a monthly check.

Each building is one thermal zone: a lumped capacitance C behind an aggregate
conductance. Exterior conductance (walls, roof, windows, infiltration) sees the
outdoor air; the ground-coupled floor sees the monthly mean outdoor temperature.
Within an hour the forcing is constant, so the zone temperature follows the
exact exponential solution of

    C dT/dt = UA_env (T_out - T) + UA_floor (T_g - T) + Q_gain + Q_hvac

and ideal HVAC holds the zone inside the 20 to 26 C comfort band by solving the
same update for the power that lands exactly on the violated setpoint. The
monthly quasi-steady method balances losses against utilization-weighted gains
and serves as an independent cross-check on the hourly engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .archetypes import EnvelopeSpec
from .lod1 import BuildingModel
from .weather import HOURS_PER_YEAR, MONTH_OF_HOUR, WeatherSeries, solar_angles

HEAT_SETPOINT_C = 20.0
COOL_SETPOINT_C = 26.0
INTERNAL_GAIN_W_M2 = 4.0
INFILTRATION_WH_M3K = 0.34  # volumetric heat capacity of air per air change
DIFFUSE_VERTICAL_FACTOR = 0.5  # a vertical face sees half the sky dome

UTILIZATION_A0 = 1.0
UTILIZATION_TAU0_H = 15.0

WH_PER_KWH = 1000.0

_MONTH_LIST = MONTH_OF_HOUR.tolist()


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class ZoneParams:
    """Lumped thermal description of one building."""

    ua_env_w_k: float
    ua_floor_w_k: float
    capacitance_j_k: float
    internal_gain_w: float

    @property
    def ua_total_w_k(self) -> float:
        return self.ua_env_w_k + self.ua_floor_w_k

    def validate(self) -> None:
        if self.ua_env_w_k <= 0 or self.ua_floor_w_k < 0:
            raise EngineError("conductances must be positive")
        if self.capacitance_j_k <= 0:
            raise EngineError("capacitance must be positive")
        if self.internal_gain_w < 0:
            raise EngineError("internal gains cannot be negative")


@dataclass
class ZoneForcing:
    """Hourly boundary conditions already reduced to zone level."""

    t_out_c: np.ndarray
    q_gain_w: np.ndarray
    t_ground_monthly_c: np.ndarray

    def validate(self) -> None:
        for name, size in (("t_out_c", HOURS_PER_YEAR), ("q_gain_w", HOURS_PER_YEAR),
                           ("t_ground_monthly_c", 12)):
            arr = getattr(self, name)
            if np.asarray(arr).shape != (size,):
                raise EngineError(f"{name} must have shape ({size},)")
            finite = np.isfinite(arr)
            if not finite.all():
                bad = int(np.flatnonzero(~finite)[0])
                raise EngineError(f"{name} is not finite at hour index {bad}")


@dataclass(frozen=True)
class SimResult:
    heating_kwh_monthly: tuple[float, ...]
    cooling_kwh_monthly: tuple[float, ...]

    @property
    def heating_kwh(self) -> float:
        return sum(self.heating_kwh_monthly)

    @property
    def cooling_kwh(self) -> float:
        return sum(self.cooling_kwh_monthly)

    @property
    def total_kwh(self) -> float:
        return self.heating_kwh + self.cooling_kwh


@dataclass(frozen=True)
class FreeFloatSummary:
    t_min_c: float
    t_max_c: float
    t_mean_c: float


def zone_params_from_model(model: BuildingModel, spec: EnvelopeSpec) -> ZoneParams:
    """Aggregate envelope areas and archetype properties into zone conductances."""
    ua_env = (
        spec.u_wall * model.opaque_wall_area_m2()
        + spec.u_roof * model.roof_area_m2
        + spec.u_window * model.window_area_m2
        + INFILTRATION_WH_M3K * spec.infiltration_ach * model.volume_m3
    )
    return ZoneParams(
        ua_env_w_k=ua_env,
        ua_floor_w_k=spec.u_floor * model.slab_area_m2,
        capacitance_j_k=spec.capacitance_j_m2k * model.floor_area_m2,
        internal_gain_w=INTERNAL_GAIN_W_M2 * model.floor_area_m2,
    )


@dataclass
class SolarContext:
    """Per-weather precomputation shared by every building in a run."""

    alt_deg: np.ndarray
    az_deg: np.ndarray
    cos_alt: np.ndarray
    az_rad: np.ndarray
    sector_idx: np.ndarray
    dni: np.ndarray
    dhi: np.ndarray
    t_out: np.ndarray
    t_ground_monthly: np.ndarray


def make_solar_context(series: WeatherSeries) -> SolarContext:
    alt, az = solar_angles(series)
    return SolarContext(
        alt_deg=alt,
        az_deg=az,
        cos_alt=np.cos(np.radians(alt)),
        az_rad=np.radians(az),
        sector_idx=(az // 10.0).astype(np.int64) % 36,
        dni=series.dni_wm2,
        dhi=series.dhi_wm2,
        t_out=series.drybulb_c,
        t_ground_monthly=series.monthly_mean_drybulb(),
    )


def facade_irradiance_w_m2(
    altitude_deg: float,
    azimuth_deg: float,
    dni_w_m2: float,
    dhi_w_m2: float,
    facade_azimuth_deg: float,
    horizon,
) -> float:
    """Irradiance on one vertical facade for one sun position."""
    direct = 0.0
    if altitude_deg > 0 and not horizon.beam_blocked(altitude_deg, azimuth_deg):
        cos_inc = math.cos(math.radians(altitude_deg)) * math.cos(
            math.radians(azimuth_deg - facade_azimuth_deg)
        )
        direct = dni_w_m2 * max(0.0, cos_inc)
    diffuse = dhi_w_m2 * DIFFUSE_VERTICAL_FACTOR * horizon.sky_view_factor
    return direct + diffuse


def solar_gain_series_w(model: BuildingModel, spec: EnvelopeSpec, ctx: SolarContext) -> np.ndarray:
    """Hourly solar heat entering through all windows, in watts."""
    angles = np.asarray(model.horizon.angles_deg)
    day = ctx.alt_deg > 0.0
    beam_open = day & (ctx.alt_deg >= angles[ctx.sector_idx])
    beam = np.where(beam_open, ctx.dni, 0.0)
    sky = ctx.dhi * (DIFFUSE_VERTICAL_FACTOR * model.horizon.sky_view_factor)
    gains = np.zeros(HOURS_PER_YEAR)
    for facade in model.facades:
        if facade.window_area_m2 <= 0.0:
            continue
        cos_inc = ctx.cos_alt * np.cos(ctx.az_rad - math.radians(facade.azimuth_deg))
        np.maximum(cos_inc, 0.0, out=cos_inc)
        gains += (beam * cos_inc + sky) * (facade.window_area_m2 * spec.shgc)
    return gains


def make_forcing(model: BuildingModel, spec: EnvelopeSpec, ctx: SolarContext) -> ZoneForcing:
    params_gain = solar_gain_series_w(model, spec, ctx)
    return ZoneForcing(
        t_out_c=ctx.t_out,
        q_gain_w=params_gain,
        t_ground_monthly_c=ctx.t_ground_monthly,
    )


def _drive_series(params: ZoneParams, forcing: ZoneForcing) -> np.ndarray:
    """Equilibrium temperature the zone drifts toward each hour, HVAC off."""
    ua = params.ua_total_w_k
    tg_hourly = forcing.t_ground_monthly_c[MONTH_OF_HOUR]
    gains = forcing.q_gain_w + params.internal_gain_w
    return (params.ua_env_w_k * forcing.t_out_c + params.ua_floor_w_k * tg_hourly + gains) / ua


def simulate_dynamic(params: ZoneParams, forcing: ZoneForcing) -> SimResult:
    """Hour-by-hour exponential update with ideal setpoint clamping.

    The zone starts the year at the heating setpoint. For each hour the
    free-float endpoint decides the branch: below 20 C the heater delivers
    exactly the power that ends the hour at 20, above 26 C the chiller mirrors
    that, otherwise the zone floats.
    """
    params.validate()
    forcing.validate()
    ua = params.ua_total_w_k
    x = ua * 3600.0 / params.capacitance_j_k
    k = math.exp(-x)
    one_minus_k = -math.expm1(-x)
    heat_wh = [0.0] * 12
    cool_wh = [0.0] * 12
    t_drive = _drive_series(params, forcing).tolist()
    months = _MONTH_LIST
    t_in = HEAT_SETPOINT_C
    th, tc = HEAT_SETPOINT_C, COOL_SETPOINT_C
    for h in range(HOURS_PER_YEAR):
        drive = t_drive[h]
        t_free = drive + (t_in - drive) * k
        if t_free < th:
            t_eq = (th - k * t_in) / one_minus_k
            heat_wh[months[h]] += ua * (t_eq - drive)
            t_in = th
        elif t_free > tc:
            t_eq = (tc - k * t_in) / one_minus_k
            cool_wh[months[h]] += ua * (drive - t_eq)
            t_in = tc
        else:
            t_in = t_free
    if not all(map(math.isfinite, heat_wh + cool_wh)):
        raise EngineError("simulation produced non-finite monthly totals")
    return SimResult(
        heating_kwh_monthly=tuple(v / WH_PER_KWH for v in heat_wh),
        cooling_kwh_monthly=tuple(v / WH_PER_KWH for v in cool_wh),
    )


def simulate_free_float(params: ZoneParams, forcing: ZoneForcing) -> FreeFloatSummary:
    """Same zone with HVAC disabled; returns the temperature envelope."""
    params.validate()
    forcing.validate()
    k = math.exp(-params.ua_total_w_k * 3600.0 / params.capacitance_j_k)
    t_drive = _drive_series(params, forcing).tolist()
    t_in = HEAT_SETPOINT_C
    t_min = t_max = t_in
    total = 0.0
    for drive in t_drive:
        t_in = drive + (t_in - drive) * k
        if t_in < t_min:
            t_min = t_in
        elif t_in > t_max:
            t_max = t_in
        total += t_in
    return FreeFloatSummary(t_min, t_max, total / HOURS_PER_YEAR)


def utilization_factor(gamma: float, a: float) -> float:
    """Fraction of gains that usefully offset losses in the monthly balance."""
    if gamma <= 0.0:
        return 1.0
    if math.isinf(gamma):
        return 0.0
    if gamma > 1e12:
        return 1.0 / gamma
    if abs(gamma - 1.0) < 1e-9:
        return a / (a + 1.0)
    return (1.0 - gamma**a) / (1.0 - gamma ** (a + 1.0))


def simulate_quasi_steady(params: ZoneParams, forcing: ZoneForcing) -> SimResult:
    """Monthly balance of setpoint losses against utilization-weighted gains.

    Losses are clipped hour by hour: only hours colder than the heating
    setpoint contribute heating losses, and warm-hour transmission moves to
    the gain side of the cooling balance. The clipping is deliberately
    conservative, which is why this method tends to sit above the hourly
    engine on heating.
    """
    params.validate()
    forcing.validate()
    ua_env, ua_floor = params.ua_env_w_k, params.ua_floor_w_k
    tau_h = params.capacitance_j_k / params.ua_total_w_k / 3600.0
    a = UTILIZATION_A0 + tau_h / UTILIZATION_TAU0_H
    gains_w = np.asarray(forcing.q_gain_w) + params.internal_gain_w
    t_out = np.asarray(forcing.t_out_c)
    heat = []
    cool = []
    for m in range(12):
        mask = MONTH_OF_HOUR == m
        hours = int(mask.sum())
        tg = float(forcing.t_ground_monthly_c[m])
        gain_wh = float(gains_w[mask].sum())
        cold = np.maximum(0.0, HEAT_SETPOINT_C - t_out[mask])
        loss_heat_wh = float(
            ua_env * cold.sum() + ua_floor * max(0.0, HEAT_SETPOINT_C - tg) * hours
        )
        if loss_heat_wh <= 0.0:
            q_heat = 0.0
        else:
            eta = utilization_factor(gain_wh / loss_heat_wh, a)
            q_heat = max(0.0, loss_heat_wh - eta * gain_wh)
        hot = np.maximum(0.0, t_out[mask] - COOL_SETPOINT_C)
        cool_gain_wh = gain_wh + float(
            ua_env * hot.sum() + ua_floor * max(0.0, tg - COOL_SETPOINT_C) * hours
        )
        mild = np.maximum(0.0, COOL_SETPOINT_C - t_out[mask])
        loss_cool_wh = float(
            ua_env * mild.sum() + ua_floor * max(0.0, COOL_SETPOINT_C - tg) * hours
        )
        if cool_gain_wh <= 0.0:
            q_cool = 0.0
        else:
            eta_loss = utilization_factor(loss_cool_wh / cool_gain_wh, a)
            q_cool = max(0.0, cool_gain_wh - eta_loss * loss_cool_wh)
        heat.append(q_heat / WH_PER_KWH)
        cool.append(q_cool / WH_PER_KWH)
    return SimResult(heating_kwh_monthly=tuple(heat), cooling_kwh_monthly=tuple(cool))
