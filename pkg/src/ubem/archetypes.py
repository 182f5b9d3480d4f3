"""Construction-period archetypes and their envelope parameter table.

Every building maps to one of eight construction periods; each period carries a
baseline envelope and a standard retrofit variant. The table is a plain CSV so
alternative stock assumptions can be swapped in without touching code.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


class ArchetypePeriod(enum.Enum):
    """Construction periods, oldest first. Enum order fixes scenario bit positions."""

    PRE1900 = 0
    Y1901_1920 = 1
    Y1921_1945 = 2
    Y1946_1960 = 3
    Y1961_1975 = 4
    Y1976_1990 = 5
    Y1991_2005 = 6
    POST2005 = 7

    @property
    def bit(self) -> int:
        return self.value

    @property
    def label(self) -> str:
        if self is ArchetypePeriod.PRE1900:
            return "<1900"
        if self is ArchetypePeriod.POST2005:
            return ">2005"
        a, b = self.name[1:].split("_")
        return f"{a}-{b}"


PERIODS = tuple(ArchetypePeriod)
DEFAULT_PERIOD = ArchetypePeriod.Y1946_1960

_PERIOD_UPPER_BOUND = (
    (1900, ArchetypePeriod.PRE1900),
    (1920, ArchetypePeriod.Y1901_1920),
    (1945, ArchetypePeriod.Y1921_1945),
    (1960, ArchetypePeriod.Y1946_1960),
    (1975, ArchetypePeriod.Y1961_1975),
    (1990, ArchetypePeriod.Y1976_1990),
    (2005, ArchetypePeriod.Y1991_2005),
)


def assign_period(year: int | None) -> ArchetypePeriod:
    """Map a construction year to its period; missing years fall back to mid-century."""
    if year is None:
        return DEFAULT_PERIOD
    year = int(year)
    for bound, period in _PERIOD_UPPER_BOUND:
        if year <= bound:
            return period
    return ArchetypePeriod.POST2005


VARIANT_BASELINE = "baseline"
VARIANT_RETROFIT = "standard_retrofit"
VARIANTS = (VARIANT_BASELINE, VARIANT_RETROFIT)


class ArchetypeTableError(ValueError):
    pass


@dataclass(frozen=True)
class EnvelopeSpec:
    """Thermal envelope parameters for one period and variant.

    U-values in W/(m2 K); infiltration in air changes per hour; capacitance is
    effective areal heat capacity in J/(m2 K) of conditioned floor area.
    """

    period: ArchetypePeriod
    variant: str
    u_wall: float
    u_roof: float
    u_floor: float
    u_window: float
    shgc: float
    infiltration_ach: float
    capacitance_j_m2k: float

    def validate(self) -> None:
        for name in ("u_wall", "u_roof", "u_floor", "u_window"):
            v = getattr(self, name)
            if not 0.0 < v < 10.0:
                raise ArchetypeTableError(
                    f"{self.period.name}/{self.variant}: {name}={v} outside (0, 10)"
                )
        if not 0.0 < self.shgc <= 1.0:
            raise ArchetypeTableError(
                f"{self.period.name}/{self.variant}: shgc={self.shgc} outside (0, 1]"
            )
        if not 0.0 < self.infiltration_ach < 5.0:
            raise ArchetypeTableError(
                f"{self.period.name}/{self.variant}: infiltration_ach={self.infiltration_ach}"
            )
        if self.capacitance_j_m2k <= 0:
            raise ArchetypeTableError(
                f"{self.period.name}/{self.variant}: capacitance must be positive"
            )


_CSV_FIELDS = (
    "period", "variant", "u_wall", "u_roof", "u_floor", "u_window",
    "shgc", "infiltration_ach", "capacitance_j_m2k",
)


class ArchetypeTable:
    """Complete period/variant lookup, validated on construction."""

    def __init__(self, specs: list[EnvelopeSpec]):
        self._by_key: dict[tuple[ArchetypePeriod, str], EnvelopeSpec] = {}
        for spec in specs:
            key = (spec.period, spec.variant)
            if key in self._by_key:
                raise ArchetypeTableError(f"duplicate row {spec.period.name}/{spec.variant}")
            spec.validate()
            self._by_key[key] = spec
        self._check_complete()
        self._check_retrofit_dominance()

    def _check_complete(self) -> None:
        for period in PERIODS:
            for variant in VARIANTS:
                if (period, variant) not in self._by_key:
                    raise ArchetypeTableError(f"missing row {period.name}/{variant}")

    def _check_retrofit_dominance(self) -> None:
        """A retrofit may never be thermally worse than its baseline."""
        for period in PERIODS:
            base = self._by_key[(period, VARIANT_BASELINE)]
            retro = self._by_key[(period, VARIANT_RETROFIT)]
            for name in ("u_wall", "u_roof", "u_floor", "u_window", "infiltration_ach"):
                if getattr(retro, name) > getattr(base, name):
                    raise ArchetypeTableError(
                        f"{period.name}: retrofit {name}={getattr(retro, name)} exceeds "
                        f"baseline {getattr(base, name)}"
                    )

    def get(self, period: ArchetypePeriod, variant: str = VARIANT_BASELINE) -> EnvelopeSpec:
        try:
            return self._by_key[(period, variant)]
        except KeyError:
            raise ArchetypeTableError(f"no row for {period.name}/{variant}") from None

    def __len__(self) -> int:
        return len(self._by_key)


def load_archetype_table(path: str | Path) -> ArchetypeTable:
    specs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ArchetypeTableError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                period = ArchetypePeriod[row["period"].strip()]
            except KeyError:
                raise ArchetypeTableError(
                    f"{path}: unknown period {row['period']!r}"
                ) from None
            variant = row["variant"].strip()
            if variant not in VARIANTS:
                raise ArchetypeTableError(f"{path}: unknown variant {variant!r}")
            specs.append(
                EnvelopeSpec(
                    period=period,
                    variant=variant,
                    u_wall=float(row["u_wall"]),
                    u_roof=float(row["u_roof"]),
                    u_floor=float(row["u_floor"]),
                    u_window=float(row["u_window"]),
                    shgc=float(row["shgc"]),
                    infiltration_ach=float(row["infiltration_ach"]),
                    capacitance_j_m2k=float(row["capacitance_j_m2k"]),
                )
            )
    return ArchetypeTable(specs)


def bundled_table_path() -> Path:
    return Path(str(resources.files("ubem").joinpath("data/archetypes.csv")))


def bundled_table() -> ArchetypeTable:
    """Stock envelope assumptions shipped with the package."""
    return load_archetype_table(bundled_table_path())
