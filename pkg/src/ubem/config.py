"""Pipeline configuration.

One flat INI-style text file drives every subcommand. Sections group the
knobs per stage; every key is optional and falls back to a default, but
unknown sections or keys abort rather than being silently ignored, so typos
surface immediately. Paths given under [paths] are resolved relative to the
config file; the output directory is resolved relative to the working
directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analytics import DEFAULT_EMISSION_FACTOR_T_PER_TJ
from .synthcity import SynthConfig


class ConfigError(ValueError):
    pass


INPUT_KEYS = (
    "footprints",
    "volumetrics",
    "civics",
    "neighborhoods",
    "dsm",
    "dtm",
    "epw",
    "archetype_table",
)

_SYNTH_KEYS = {
    "seed": int,
    "n_buildings": int,
    "grid_spacing_m": float,
    "footprint_min_m": float,
    "footprint_max_m": float,
    "height_min_m": float,
    "height_max_m": float,
    "year_weights": "floats",
    "n_neighborhoods": int,
    "cellsize_m": float,
    "dtm_slope": float,
    "dtm_base_m": float,
    "volumetric_fraction": float,
}

_SECTION_KEYS = {
    "run": {"outdir"},
    "paths": set(INPUT_KEYS),
    "synth": set(_SYNTH_KEYS),
    "genmodels": {"radius_m"},
    "simulate": {"workers", "retries"},
    "bench": {"nodes", "radii", "cores_per_node"},
    "sensitivity": {"radii"},
    "report": {"emission_factor_t_per_tj"},
}


@dataclass
class PipelineConfig:
    """Resolved settings for a pipeline run."""

    outdir: Path = Path("runs/town")
    inputs: dict = field(default_factory=dict)
    radius_m: float = 60.0
    workers: int = 1
    retries: int = 2
    bench_nodes: tuple = (1, 2, 4, 6, 8, 10)
    bench_radii: tuple = (10.0, 30.0, 60.0, 100.0)
    cores_per_node: int = 112
    sensitivity_radii: tuple = (10.0, 20.0, 40.0, 60.0, 80.0, 100.0)
    emission_factor_t_per_tj: float = DEFAULT_EMISSION_FACTOR_T_PER_TJ
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        if self.radius_m < 0:
            raise ConfigError("radius_m must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.cores_per_node < 1:
            raise ConfigError("cores_per_node must be >= 1")
        if not self.bench_nodes or any(n < 1 for n in self.bench_nodes):
            raise ConfigError("bench nodes must be positive integers")
        if not self.bench_radii or any(r < 0 for r in self.bench_radii):
            raise ConfigError("bench radii must be non-negative")
        if not self.sensitivity_radii or any(r < 0 for r in self.sensitivity_radii):
            raise ConfigError("sensitivity radii must be non-negative")
        if self.emission_factor_t_per_tj <= 0:
            raise ConfigError("emission_factor_t_per_tj must be positive")
        try:
            self.synth.validate()
        except ValueError as exc:
            raise ConfigError(f"synth: {exc}") from exc

    def as_dict(self) -> dict:
        """Everything resolved, JSON-ready; embedded in stage outputs."""
        return {
            "outdir": str(self.outdir),
            "paths": {k: (str(v) if v else None) for k, v in sorted(self.inputs.items())},
            "radius_m": self.radius_m,
            "workers": self.workers,
            "retries": self.retries,
            "bench_nodes": list(self.bench_nodes),
            "bench_radii": list(self.bench_radii),
            "cores_per_node": self.cores_per_node,
            "sensitivity_radii": list(self.sensitivity_radii),
            "emission_factor_t_per_tj": self.emission_factor_t_per_tj,
            "synth": {
                "seed": self.synth.seed,
                "n_buildings": self.synth.n_buildings,
                "grid_spacing_m": self.synth.grid_spacing_m,
                "footprint_min_m": self.synth.footprint_min_m,
                "footprint_max_m": self.synth.footprint_max_m,
                "height_min_m": self.synth.height_min_m,
                "height_max_m": self.synth.height_max_m,
                "year_weights": list(self.synth.year_weights),
                "n_neighborhoods": self.synth.n_neighborhoods,
                "cellsize_m": self.synth.cellsize_m,
                "dtm_slope": self.synth.dtm_slope,
                "dtm_base_m": self.synth.dtm_base_m,
                "volumetric_fraction": self.synth.volumetric_fraction,
            },
        }


def _parse_floats(raw: str, where: str) -> tuple:
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{where}: expected a list of numbers, got {raw!r}") from exc


def _parse_ints(raw: str, where: str) -> tuple:
    try:
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{where}: expected a list of integers, got {raw!r}") from exc


def _scalar(raw: str, kind, where: str):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc


def bundled_config_path() -> Path:
    return Path(__file__).parent / "data" / "pipeline.ini"


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a pipeline config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

    cfg = PipelineConfig()
    base = path.parent

    if parser.has_option("run", "outdir"):
        cfg.outdir = Path(parser.get("run", "outdir"))

    inputs: dict = {}
    if parser.has_section("paths"):
        for key in INPUT_KEYS:
            if parser.has_option("paths", key):
                raw = parser.get("paths", key)
                inputs[key] = (base / raw).resolve() if raw else None
    cfg.inputs = inputs

    if parser.has_option("genmodels", "radius_m"):
        cfg.radius_m = _scalar(parser.get("genmodels", "radius_m"), float, "genmodels.radius_m")
    if parser.has_option("simulate", "workers"):
        cfg.workers = _scalar(parser.get("simulate", "workers"), int, "simulate.workers")
    if parser.has_option("simulate", "retries"):
        cfg.retries = _scalar(parser.get("simulate", "retries"), int, "simulate.retries")
    if parser.has_option("bench", "nodes"):
        cfg.bench_nodes = _parse_ints(parser.get("bench", "nodes"), "bench.nodes")
    if parser.has_option("bench", "radii"):
        cfg.bench_radii = _parse_floats(parser.get("bench", "radii"), "bench.radii")
    if parser.has_option("bench", "cores_per_node"):
        cfg.cores_per_node = _scalar(
            parser.get("bench", "cores_per_node"), int, "bench.cores_per_node"
        )
    if parser.has_option("sensitivity", "radii"):
        cfg.sensitivity_radii = _parse_floats(
            parser.get("sensitivity", "radii"), "sensitivity.radii"
        )
    if parser.has_option("report", "emission_factor_t_per_tj"):
        cfg.emission_factor_t_per_tj = _scalar(
            parser.get("report", "emission_factor_t_per_tj"),
            float,
            "report.emission_factor_t_per_tj",
        )

    if parser.has_section("synth"):
        kwargs = {}
        for key, kind in _SYNTH_KEYS.items():
            if not parser.has_option("synth", key):
                continue
            raw = parser.get("synth", key)
            where = f"synth.{key}"
            if kind == "floats":
                kwargs[key] = _parse_floats(raw, where)
            else:
                kwargs[key] = _scalar(raw, kind, where)
        cfg.synth = replace(SynthConfig(), **kwargs)

    cfg.validate()
    return cfg
