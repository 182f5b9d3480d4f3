"""Weather file handling and solar geometry.

Only the subset of the EPW format the thermal model consumes is read: site
metadata from the LOCATION header plus dry-bulb temperature, direct normal
irradiance and diffuse horizontal irradiance from each of the 8760 hourly rows.
Solar position uses the familiar declination/hour-angle model, good to a degree
or two, which is plenty for facade gain estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HOURS_PER_YEAR = 8760

_EPW_HEADER_LINES = 8
_COL_DRYBULB = 6
_COL_DNI = 14
_COL_DHI = 15
_SENTINEL_DRYBULB = 99.9
_SENTINEL_RAD = 9999.0

_DAYS_PER_MONTH = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)

HOURS_PER_MONTH = tuple(d * 24 for d in _DAYS_PER_MONTH)


def _month_of_hour() -> np.ndarray:
    out = np.empty(HOURS_PER_YEAR, dtype=np.int64)
    pos = 0
    for m, hours in enumerate(HOURS_PER_MONTH):
        out[pos : pos + hours] = m
        pos += hours
    return out


MONTH_OF_HOUR = _month_of_hour()


class WeatherFormatError(ValueError):
    pass


@dataclass
class WeatherSeries:
    """One year of hourly weather at a site."""

    latitude_deg: float
    longitude_deg: float
    tz_offset_h: float
    elevation_m: float
    drybulb_c: np.ndarray
    dni_wm2: np.ndarray
    dhi_wm2: np.ndarray

    def monthly_mean_drybulb(self) -> np.ndarray:
        means = np.empty(12)
        for m in range(12):
            means[m] = self.drybulb_c[MONTH_OF_HOUR == m].mean()
        return means

    def validate(self) -> None:
        for name in ("drybulb_c", "dni_wm2", "dhi_wm2"):
            arr = getattr(self, name)
            if arr.shape != (HOURS_PER_YEAR,):
                raise WeatherFormatError(f"{name} must have {HOURS_PER_YEAR} hours")
            if not np.all(np.isfinite(arr)):
                raise WeatherFormatError(f"{name} contains non-finite values")


def _fill_sentinels(values: np.ndarray, sentinel: float) -> np.ndarray:
    """Replace sentinel entries with the previous valid hour (next valid for a leading run)."""
    bad = values == sentinel
    if not bad.any():
        return values
    if bad.all():
        raise WeatherFormatError("weather column holds only sentinel values")
    out = values.copy()
    first_good = int(np.flatnonzero(~bad)[0])
    out[:first_good] = out[first_good]
    for idx in np.flatnonzero(bad):
        if idx >= first_good:
            out[idx] = out[idx - 1]
    return out


def parse_epw(path: str | Path) -> WeatherSeries:
    path = Path(path)
    with path.open() as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(lines) < _EPW_HEADER_LINES + 1:
        raise WeatherFormatError(f"{path}: truncated file")
    loc = lines[0].split(",")
    if loc[0].upper() != "LOCATION" or len(loc) < 10:
        raise WeatherFormatError(f"{path}: first line must be a LOCATION header")
    try:
        latitude = float(loc[6])
        longitude = float(loc[7])
        tz_offset = float(loc[8])
        elevation = float(loc[9])
    except ValueError as exc:
        raise WeatherFormatError(f"{path}: bad LOCATION numeric fields") from exc
    rows = lines[_EPW_HEADER_LINES:]
    if len(rows) != HOURS_PER_YEAR:
        raise WeatherFormatError(
            f"{path}: expected {HOURS_PER_YEAR} data rows, found {len(rows)}"
        )
    drybulb = np.empty(HOURS_PER_YEAR)
    dni = np.empty(HOURS_PER_YEAR)
    dhi = np.empty(HOURS_PER_YEAR)
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) <= _COL_DHI:
            raise WeatherFormatError(f"{path}: data row {i + 1} too short")
        try:
            drybulb[i] = float(parts[_COL_DRYBULB])
            dni[i] = float(parts[_COL_DNI])
            dhi[i] = float(parts[_COL_DHI])
        except ValueError as exc:
            raise WeatherFormatError(f"{path}: data row {i + 1} not numeric") from exc
    series = WeatherSeries(
        latitude_deg=latitude,
        longitude_deg=longitude,
        tz_offset_h=tz_offset,
        elevation_m=elevation,
        drybulb_c=_fill_sentinels(drybulb, _SENTINEL_DRYBULB),
        dni_wm2=_fill_sentinels(dni, _SENTINEL_RAD),
        dhi_wm2=_fill_sentinels(dhi, _SENTINEL_RAD),
    )
    series.validate()
    return series


def write_epw(series: WeatherSeries, path: str | Path, city: str = "Synthetic") -> None:
    """Emit a minimal EPW: real LOCATION and data columns, placeholder headers."""
    series.validate()
    path = Path(path)
    day_of_month = []
    month_num = []
    for m, days in enumerate(_DAYS_PER_MONTH):
        for d in range(days):
            for _ in range(24):
                month_num.append(m + 1)
                day_of_month.append(d + 1)
    with path.open("w", newline="\n") as fh:
        fh.write(
            f"LOCATION,{city},-,-,generated,000000,"
            f"{series.latitude_deg:.4f},{series.longitude_deg:.4f},"
            f"{series.tz_offset_h:.1f},{series.elevation_m:.1f}\n"
        )
        fh.write("DESIGN CONDITIONS,0\n")
        fh.write("TYPICAL/EXTREME PERIODS,0\n")
        fh.write("GROUND TEMPERATURES,0\n")
        fh.write("HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0\n")
        fh.write("COMMENTS 1,synthetic weather for pipeline runs\n")
        fh.write("COMMENTS 2,\n")
        fh.write("DATA PERIODS,1,1,Data,Sunday, 1/ 1,12/31\n")
        for h in range(HOURS_PER_YEAR):
            cols = ["9999"] * 35
            cols[0] = "2021"
            cols[1] = str(month_num[h])
            cols[2] = str(day_of_month[h])
            cols[3] = str(h % 24 + 1)
            cols[4] = "60"
            cols[5] = "_"
            cols[_COL_DRYBULB] = f"{series.drybulb_c[h]:.1f}"
            cols[7] = f"{series.drybulb_c[h] - 2.0:.1f}"
            cols[_COL_DNI] = f"{series.dni_wm2[h]:.1f}"
            cols[_COL_DHI] = f"{series.dhi_wm2[h]:.1f}"
            fh.write(",".join(cols))
            fh.write("\n")


def day_of_year_for_hour() -> np.ndarray:
    return np.arange(HOURS_PER_YEAR) // 24 + 1


def solar_declination_deg(day_of_year: np.ndarray) -> np.ndarray:
    """Seasonal tilt of the sun, peaking at +/- 23.45 degrees at the solstices."""
    return 23.45 * np.sin(2.0 * np.pi * (284.0 + day_of_year) / 365.0)


def _alt_az(lat_rad: float, decl_rad, omega_rad):
    sin_alt = (
        math.sin(lat_rad) * np.sin(decl_rad)
        + math.cos(lat_rad) * np.cos(decl_rad) * np.cos(omega_rad)
    )
    alt = np.degrees(np.arcsin(np.clip(sin_alt, -1.0, 1.0)))
    east = -np.cos(decl_rad) * np.sin(omega_rad)
    north = (
        math.cos(lat_rad) * np.sin(decl_rad)
        - math.sin(lat_rad) * np.cos(decl_rad) * np.cos(omega_rad)
    )
    az = np.degrees(np.arctan2(east, north)) % 360.0
    return alt, az


@dataclass(frozen=True)
class SolarPosition:
    altitude_deg: float
    azimuth_deg: float


def solar_position(
    latitude_deg: float,
    longitude_deg: float,
    tz_offset_h: float,
    day_of_year: int,
    clock_hour: float,
) -> SolarPosition:
    """Sun position at one instant of local standard time."""
    decl = math.radians(float(solar_declination_deg(np.asarray(day_of_year))))
    solar_time = clock_hour + (longitude_deg / 15.0 - tz_offset_h)
    omega = math.radians(15.0 * (solar_time - 12.0))
    alt, az = _alt_az(math.radians(latitude_deg), decl, omega)
    return SolarPosition(float(alt), float(az))


def solar_angles(series: WeatherSeries) -> tuple[np.ndarray, np.ndarray]:
    """Hourly sun altitude and azimuth in degrees, azimuth clockwise from north.

    Rows are hour-ending integrated records, so the sun is evaluated at the
    midpoint of each hour in local standard time.
    """
    n = day_of_year_for_hour()
    decl = np.radians(solar_declination_deg(n))
    clock_mid = np.arange(HOURS_PER_YEAR) % 24 + 0.5
    solar_time = clock_mid + (series.longitude_deg / 15.0 - series.tz_offset_h)
    omega = np.radians(15.0 * (solar_time - 12.0))
    return _alt_az(math.radians(series.latitude_deg), decl, omega)
