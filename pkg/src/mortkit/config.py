"""Declarative run configuration: schema, parsing and validation.

A run config is one YAML file declaring the country of interest, the
common pool, the calibration window, an explicit per-(country, year,
quantity) source matrix, the method grid, the simulation spec and the
output directory.  Every (country, year, quantity) cell must be covered
by exactly one source; overlap and gaps are refused up front.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .data import AgeRange, YearRange, INDIVIDUAL_SHAPES, WEEKLY_SHAPES
from .errors import ConfigError
from .project import MAX_AGE
from .ungroup import DEATH_ALLOCATION_RATE

QUANTITIES = ("deaths", "exposures")

WEIGHTED_LIKELIHOOD = "WEIGHTED_LIKELIHOOD"
ADJUSTED_LEE_MILLER = "ADJUSTED_LEE_MILLER"
METHOD_KINDS = (WEIGHTED_LIKELIHOOD, ADJUSTED_LEE_MILLER)


@dataclass(frozen=True)
class SourceDecl:
    """One source file and the (country, years, quantities) it supplies.

    `paths` usually holds one file; several files mark UK-style
    constituents that are aggregated cell-wise before use (weekly only).
    """

    paths: tuple
    shape: str
    country: str
    years: YearRange
    quantities: tuple

    @property
    def weekly(self) -> bool:
        return self.shape in WEEKLY_SHAPES

    @property
    def path(self) -> Path:
        return self.paths[0]


@dataclass(frozen=True)
class RunConfig:
    country_of_interest: str
    common_pool: tuple
    ages: AgeRange
    years: YearRange
    individual_sources: tuple
    weekly_sources: tuple
    aux_start_year: dict
    aux_pool: tuple
    death_allocation_rate: dict
    reference_year: dict
    method_kind: str
    method_grid: tuple
    n_paths: int
    horizon: int
    seed: int
    report_ages: tuple
    cohort_ages: tuple
    output_dir: Path

    def with_overrides(self, seed=None, output_dir=None) -> "RunConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if output_dir is not None:
            out = replace(out, output_dir=Path(output_dir))
        return out

    @property
    def countries(self) -> tuple:
        extra = () if self.country_of_interest in self.common_pool \
            else (self.country_of_interest,)
        return self.common_pool + extra


def _need(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return mapping[key]


def _year_range(node, where) -> YearRange:
    try:
        return YearRange(int(_need(node, "first", where)), int(_need(node, "last", where)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad year range in {where}: {exc}") from exc


def _parse_source(node, base: Path, index: int) -> SourceDecl:
    where = f"sources[{index}]"
    shape = str(_need(node, "shape", where))
    if shape not in INDIVIDUAL_SHAPES + WEEKLY_SHAPES:
        raise ConfigError(f"{where}: unknown shape {shape!r}")
    raw_paths = node.get("paths", node.get("path"))
    if raw_paths is None:
        raise ConfigError(f"{where}: missing path(s)")
    if isinstance(raw_paths, (str, Path)):
        raw_paths = [raw_paths]
    paths = tuple(base / p for p in raw_paths)
    if len(paths) > 1 and shape not in WEEKLY_SHAPES:
        raise ConfigError(f"{where}: constituent lists are weekly-only")
    country = str(_need(node, "country", where))
    if "year" in node:
        years = YearRange(int(node["year"]), int(node["year"]))
    else:
        years = _year_range(_need(node, "years", where), where)
    quantities = tuple(node.get("quantities", QUANTITIES))
    bad = set(quantities) - set(QUANTITIES)
    if bad or not quantities:
        raise ConfigError(f"{where}: quantities must be a nonempty subset of {QUANTITIES}")
    if shape == "EUROW" and "exposures" in quantities:
        raise ConfigError(f"{where}: EUROW files carry no exposures")
    weekly = shape in WEEKLY_SHAPES
    if weekly and len(years) != 1:
        raise ConfigError(f"{where}: weekly sources cover one year each")
    return SourceDecl(paths=paths, shape=shape, country=country,
                      years=years, quantities=quantities)


def _check_coverage(config: RunConfig):
    """Every (country, year, quantity) covered by exactly one declaration."""
    decls = config.individual_sources + config.weekly_sources
    for country in config.countries:
        for year in config.years.values():
            for quantity in QUANTITIES:
                hits = [
                    d for d in decls
                    if d.country == country and quantity in d.quantities
                    and d.years.first <= year <= d.years.last
                ]
                if len(hits) != 1:
                    what = "no source" if not hits else f"{len(hits)} overlapping sources"
                    raise ConfigError(
                        f"{what} for ({country}, {int(year)}, {quantity}); "
                        "declare exactly one"
                    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open() as handle:
            doc = yaml.safe_load(handle)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.parent
    return build_run_config(doc, base)


def build_run_config(doc: dict, base: Path) -> RunConfig:
    country = str(_need(doc, "country_of_interest", "config"))
    pool = tuple(str(c) for c in _need(doc, "common_pool", "config"))
    if not pool:
        raise ConfigError("common_pool must not be empty")

    ages_node = _need(doc, "ages", "config")
    ages = AgeRange(int(_need(ages_node, "min", "ages")),
                    int(_need(ages_node, "max", "ages")))
    years = _year_range(_need(doc, "years", "config"), "years")
    if len(years) < 3:
        raise ConfigError("calibration window must span at least three years")

    sources_node = _need(doc, "sources", "config")
    individual = []
    weekly = []
    all_nodes = list(sources_node.get("individual", ())) \
        + list(sources_node.get("weekly", ()))
    for i, node in enumerate(all_nodes):
        decl = _parse_source(node, base, i)
        (weekly if decl.weekly else individual).append(decl)
    if weekly and not (ages.min_age == 0 and ages.max_age == 90):
        raise ConfigError("ungrouping protocols require the 0..90 age range")

    ung = doc.get("ungrouping", {}) or {}
    raw_start = ung.get("aux_start_year", years.first)
    if isinstance(raw_start, dict):
        aux_start = {str(k): int(v) for k, v in raw_start.items()}
        aux_start.setdefault("default", years.first)
    else:
        aux_start = {"default": int(raw_start)}
    aux_pool = tuple(str(c) for c in ung.get("aux_pool", pool))
    rates = dict(DEATH_ALLOCATION_RATE)
    rates.update({str(k): float(v)
                  for k, v in (ung.get("death_allocation_rate", {}) or {}).items()})
    for gender, rate in rates.items():
        if not 0.0 < rate <= 1.0:
            raise ConfigError(f"death allocation rate for {gender} outside (0, 1]")
    reference_year = {str(k): int(v)
                      for k, v in (ung.get("reference_year", {}) or {}).items()}

    method_node = _need(doc, "method", "config")
    kind = str(_need(method_node, "kind", "method")).upper()
    if kind not in METHOD_KINDS:
        raise ConfigError(f"method kind must be one of {METHOD_KINDS}, got {kind!r}")
    grid = tuple(float(v) for v in _need(method_node, "grid", "method"))
    if not grid:
        raise ConfigError("method grid must not be empty")
    if any(not 0.0 <= v <= 1.0 for v in grid):
        raise ConfigError("method grid values must lie in [0, 1]")
    if len(set(grid)) != len(grid):
        raise ConfigError("method grid values must be distinct")

    sim = _need(doc, "simulation", "config")
    n_paths = int(_need(sim, "n_paths", "simulation"))
    horizon = int(_need(sim, "horizon", "simulation"))
    seed = int(_need(sim, "seed", "simulation"))
    if horizon <= years.last:
        raise ConfigError(f"horizon {horizon} must exceed the calibration end {years.last}")
    if n_paths < 1:
        raise ConfigError("n_paths must be >= 1")

    report = doc.get("report", {}) or {}
    report_ages = tuple(int(a) for a in report.get("ages", (0, 65)))
    cohort_ages = tuple(int(a) for a in report.get("cohort_ages", ()))
    for age in report_ages + cohort_ages:
        if not ages.min_age <= age <= ages.max_age:
            raise ConfigError(f"report age {age} outside the model ages {ages}")
    for age in cohort_ages:
        needed = years.last + (MAX_AGE - age)
        if horizon < needed:
            raise ConfigError(
                f"cohort life expectancy at age {age} needs horizon >= {needed}, "
                f"got {horizon}; extend the simulation"
            )

    out_dir = base / str(doc.get("output_dir", "out"))

    config = RunConfig(
        country_of_interest=country, common_pool=pool, ages=ages, years=years,
        individual_sources=tuple(individual), weekly_sources=tuple(weekly),
        aux_start_year=aux_start, aux_pool=aux_pool,
        death_allocation_rate=rates, reference_year=reference_year,
        method_kind=kind, method_grid=grid, n_paths=n_paths, horizon=horizon,
        seed=seed, report_ages=report_ages, cohort_ages=cohort_ages,
        output_dir=out_dir,
    )
    for c in config.aux_pool:
        if c not in config.countries:
            raise ConfigError(f"aux_pool country {c} has no declared sources")
    _check_coverage(config)
    return config


def aux_start_for(config: RunConfig, country: str) -> int:
    return config.aux_start_year.get(country, config.aux_start_year["default"])
