"""End-to-end scenario pipeline: ingest, ungroup, calibrate, simulate, report.

Data assembly builds complete per-(country, gender) surfaces from the
declared sources, ungrouping weekly-bucketed years into VIRTUAL cells.
Each method-grid value then becomes one scenario (a weight on the final
year, or a blend weight of the adjusted variant) producing parameter,
time-series-fit and fan-chart CSVs.  Scenarios are isolated: one failing
scenario is reported as failed without aborting the others.  Reruns of
the same config are byte-identical; wall-clock timings therefore go to a
sidecar file outside the hashed outputs.
"""
from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dynamics, lilee, project
from .config import (ADJUSTED_LEE_MILLER, RunConfig, WEIGHTED_LIKELIHOOD,
                     aux_start_for)
from .data import (GENDERS, MortalitySurface, MultiPopulationDataset,
                   SurfaceFragment, UK_CODE, YearRange, aggregate_uk,
                   annualize_weekly_deaths, annualize_weekly_exposure,
                   check_eurostat_stmf_consistency, load_individual_age_csv,
                   load_weekly_csv)
from .errors import ConfigError, MortkitError, ValidationError
from .ungroup import fit_auxiliary_projection_model, ungroup_deaths, ungroup_exposures

_QUANTITY_FIELD = {"deaths": "deaths", "exposures": "exposure"}

#: Fixed fan-chart row ordering.
_QUANTITY_ORDER = ("K", "kappa", "q", "e_per", "e_coh")
_PROBE_LABELS = {0.005: "0.005", 0.5: "0.5", 0.995: "0.995"}


# ---------------------------------------------------------------------------
# Data assembly
# ---------------------------------------------------------------------------

@dataclass
class AssembledData:
    dataset: MultiPopulationDataset
    consistency: list
    exposure_origins: dict
    virtual_cells: dict


def _load_weekly_decl(decl):
    """Load one weekly declaration per gender, aggregating constituents."""
    out = {}
    for gender in GENDERS:
        series = [
            load_weekly_csv(p, decl.shape, year=decl.years.first, gender=gender)
            for p in decl.paths
        ]
        if len(series) > 1:
            if decl.country != UK_CODE:
                raise ConfigError(
                    f"constituent aggregation produces country {UK_CODE}, "
                    f"declaration says {decl.country}"
                )
            out[gender] = aggregate_uk(series)
        else:
            if series[0].country != decl.country:
                raise ConfigError(
                    f"{decl.path}: file country {series[0].country} does not "
                    f"match declared {decl.country}"
                )
            out[gender] = series[0]
    return out


class _Assembler:
    def __init__(self, config: RunConfig):
        self.config = config
        self.ages = config.ages
        self.years = config.years
        nx, nt = len(config.ages), len(config.years)
        self.deaths = {}
        self.exposures = {}
        self.dprov = {}
        self.eprov = {}
        for country in config.countries:
            for gender in GENDERS:
                key = (country, gender)
                self.deaths[key] = np.full((nx, nt), np.nan)
                self.exposures[key] = np.full((nx, nt), np.nan)
                self.dprov[key] = np.full((nx, nt), "", dtype="<U8")
                self.eprov[key] = np.full((nx, nt), "", dtype="<U8")
        self.observed = SurfaceFragment()
        self.weekly = {}
        self.consistency = []
        self.exposure_origins = {}
        self._aux_cache = {}

    # -- ingestion ---------------------------------------------------------

    def load_sources(self):
        for decl in self.config.individual_sources:
            frag = load_individual_age_csv(decl.path, decl.shape)
            fields = {_QUANTITY_FIELD[q] for q in decl.quantities}
            years = set(range(decl.years.first, decl.years.last + 1))
            self.observed.update(
                frag.restrict(countries={decl.country}, years=years,
                              quantities=fields)
            )
        for decl in self.config.weekly_sources:
            series = _load_weekly_decl(decl)
            slot = self.weekly.setdefault((decl.country, decl.years.first), {})
            if decl.shape in slot:
                raise ConfigError(
                    f"duplicate weekly {decl.shape} declaration for "
                    f"{decl.country}/{decl.years.first}"
                )
            slot[decl.shape] = {"decl": decl, "series": series}
        self._fill_observed()
        self._cross_check()

    def _fill_observed(self):
        for (country, gender, age, year), cell in self.observed.cells.items():
            key = (country, gender)
            if key not in self.deaths:
                continue
            if not (self.ages.min_age <= age <= self.ages.max_age):
                continue
            if not (self.years.first <= year <= self.years.last):
                continue
            i = age - self.ages.min_age
            j = year - self.years.first
            if "deaths" in cell:
                self.deaths[key][i, j], self.dprov[key][i, j] = cell["deaths"]
            if "exposure" in cell:
                self.exposures[key][i, j], self.eprov[key][i, j] = cell["exposure"]

    def _cross_check(self):
        for (country, year), slot in sorted(self.weekly.items()):
            if "STMF" not in slot or "EUROW" not in slot:
                continue
            for gender in GENDERS:
                report = check_eurostat_stmf_consistency(
                    slot["EUROW"]["series"][gender], slot["STMF"]["series"][gender]
                )
                self.consistency.append({
                    "country": country, "year": year, "gender": gender,
                    "comparable": report.comparable,
                    "consistent": report.consistent,
                    "mismatches": len(report.mismatches),
                    "detail": report.detail,
                })
                if not report.consistent:
                    warnings.warn(
                        f"EUROW/STMF weekly deaths disagree for {country}/{year}/"
                        f"{gender} ({report.detail or len(report.mismatches)})",
                        RuntimeWarning, stacklevel=2,
                    )

    # -- observed-year bookkeeping ------------------------------------------

    def _observed_years(self, country, quantity) -> set:
        """Years whose full model-age column is observed for both genders."""
        grids = self.deaths if quantity == "deaths" else self.exposures
        provs = self.dprov if quantity == "deaths" else self.eprov
        out = set()
        for j, year in enumerate(self.years.values()):
            ok = all(
                not np.any(np.isnan(grids[(country, g)][:, j]))
                and not np.any(provs[(country, g)][:, j] == "VIRTUAL")
                for g in GENDERS
            )
            if ok:
                out.add(int(year))
        return out

    def last_fully_observed(self, country) -> int:
        years = self._observed_years(country, "deaths") \
            & self._observed_years(country, "exposures")
        if not years:
            raise ValidationError(f"{country}: no fully observed years")
        return max(years)

    # -- ungrouping ----------------------------------------------------------

    def _aux_model(self, country):
        if country in self._aux_cache:
            return self._aux_cache[country]
        pool = tuple(self.config.aux_pool)
        members = pool if country in pool else pool + (country,)
        end = min(self.last_fully_observed(c) for c in members)
        start = aux_start_for(self.config, country)
        window = YearRange(max(start, self.years.first), end)
        if len(window) < 8:
            raise ValidationError(
                f"auxiliary window {window} too short; time dynamics need >= 8 years"
            )
        j0 = self.years.index(window.first)
        j1 = self.years.index(window.last) + 1
        surfaces = {}
        for c in members:
            for g in GENDERS:
                key = (c, g)
                d = self.deaths[key][:, j0:j1]
                e = self.exposures[key][:, j0:j1]
                if np.any(np.isnan(d)) or np.any(np.isnan(e)):
                    raise ValidationError(
                        f"{c}/{g}: observed window {window} has gaps"
                    )
                surfaces[key] = MortalitySurface(
                    c, g, self.ages, window, d.copy(), e.copy(),
                    np.where(self.dprov[key][:, j0:j1] == "", "HMD",
                             self.dprov[key][:, j0:j1]),
                    np.where(self.eprov[key][:, j0:j1] == "", "HMD",
                             self.eprov[key][:, j0:j1]),
                )
        dataset = MultiPopulationDataset(surfaces=surfaces, common_pool=pool)
        aux = fit_auxiliary_projection_model(dataset, country)
        self._aux_cache[country] = aux
        return aux

    def _prev_open_total(self, country, gender, prev_year, open_lower, prev_col):
        """Last year's open-bucket exposure total: observed tail (which may
        extend past the model top age) when available, else the
        within-range sum of the previous curve."""
        cells = [
            value for (c, g, age, y), cell in self.observed.cells.items()
            if c == country and g == gender and y == prev_year and age >= open_lower
            for field, (value, _) in cell.items() if field == "exposure"
        ]
        span = self.ages.max_age - open_lower + 1
        if len(cells) >= span:
            return float(np.sum(cells))
        return float(prev_col[open_lower - self.ages.min_age:].sum())

    def ungroup_all(self):
        # Exposures first (they chain on each other), then deaths (they
        # need the target year's virtual exposures plus the aux model).
        for (country, year), slot in sorted(self.weekly.items()):
            for shape in ("STMF",):
                if shape not in slot:
                    continue
                decl = slot[shape]["decl"]
                if "exposures" not in decl.quantities:
                    continue
                self._ungroup_exposure_year(country, year, slot[shape])
        for (country, year), slot in sorted(self.weekly.items()):
            for shape in ("EUROW", "STMF"):
                if shape not in slot:
                    continue
                decl = slot[shape]["decl"]
                if "deaths" not in decl.quantities:
                    continue
                self._ungroup_death_year(country, year, slot[shape])

    def _ungroup_exposure_year(self, country, year, entry):
        j = self.years.index(year)
        if j == 0:
            raise ValidationError(
                f"{country}/{year}: cannot ungroup exposures without a previous year"
            )
        for gender in GENDERS:
            series = entry["series"][gender]
            self.exposure_origins[f"{country}/{year}/{gender}"] = series.exposure_origin
            annual = annualize_weekly_exposure(series)
            key = (country, gender)
            prev_col = self.exposures[key][:, j - 1]
            if np.any(np.isnan(prev_col)):
                raise ValidationError(
                    f"{country}/{gender}: exposures for {year - 1} incomplete; "
                    "ungroup in chronological order"
                )
            open_lower = next(b.lower for b in annual.exposures if b.is_open)
            total_prev = self._prev_open_total(country, gender, year - 1,
                                               open_lower, prev_col)
            result = ungroup_exposures(prev_col, annual, self.ages,
                                       prev_open_total=total_prev)
            self.exposures[key][:, j] = result.values
            self.eprov[key][:, j] = "VIRTUAL"

    def _reference_tail(self, country, gender, ref_year):
        try:
            return self.observed.deaths_tail(country, gender, ref_year,
                                             self.ages.max_age)
        except ValidationError as exc:
            raise ValidationError(
                f"{country}/{gender}: reference year {ref_year} has no observed "
                f"deaths at ages >= {self.ages.max_age}"
            ) from exc

    def _ungroup_death_year(self, country, year, entry):
        j = self.years.index(year)
        aux = self._aux_model(country)
        ref_year = self.config.reference_year.get(
            country, max(self._observed_years(country, "deaths"), default=None)
        )
        for gender in GENDERS:
            series = entry["series"][gender]
            annual = annualize_weekly_deaths(series)
            key = (country, gender)
            exp_col = self.exposures[key][:, j]
            if np.any(np.isnan(exp_col)):
                raise ValidationError(
                    f"{country}/{gender}: exposures for {year} incomplete; "
                    "declare an exposure source for that year"
                )
            open_lower = next(b.lower for b in annual.deaths if b.is_open)
            tail = None
            if open_lower == self.ages.max_age:
                if ref_year is None:
                    raise ValidationError(
                        f"{country}: no observed reference year for the 90+ rule"
                    )
                tail = self._reference_tail(country, gender, ref_year)
            result = ungroup_deaths(
                aux, gender, year, exp_col, annual, self.ages,
                reference_tail=tail,
                allocation_rate=self.config.death_allocation_rate[gender],
            )
            self.deaths[key][:, j] = result.values
            self.dprov[key][:, j] = "VIRTUAL"

    # -- final assembly -------------------------------------------------------

    def build(self) -> AssembledData:
        surfaces = {}
        virtual = {}
        for country in self.config.countries:
            v = {"deaths": 0, "exposures": 0}
            for gender in GENDERS:
                key = (country, gender)
                frag_prov_d = np.where(self.dprov[key] == "", "HMD", self.dprov[key])
                frag_prov_e = np.where(self.eprov[key] == "", "HMD", self.eprov[key])
                d, e = self.deaths[key], self.exposures[key]
                for name, arr in (("deaths", d), ("exposures", e)):
                    holes = np.argwhere(np.isnan(arr))
                    if holes.size:
                        x, t = holes[0]
                        raise ValidationError(
                            f"{country}/{gender}: no source produced {name} for "
                            f"age {self.ages.min_age + x}, year "
                            f"{self.years.first + t} (and {len(holes) - 1} more cells)"
                        )
                surfaces[key] = MortalitySurface(
                    country, gender, self.ages, self.years,
                    d.copy(), e.copy(), frag_prov_d, frag_prov_e,
                )
                counts = surfaces[key].virtual_cell_count()
                v["deaths"] += counts["deaths"]
                v["exposures"] += counts["exposures"]
            virtual[country] = v
        dataset = MultiPopulationDataset(surfaces=surfaces,
                                         common_pool=self.config.common_pool)
        return AssembledData(dataset=dataset, consistency=self.consistency,
                             exposure_origins=self.exposure_origins,
                             virtual_cells=virtual)


def assemble_dataset(config: RunConfig) -> AssembledData:
    """Run ingestion, cross-checks and ungrouping; returns complete surfaces."""
    assembler = _Assembler(config)
    assembler.load_sources()
    assembler.ungroup_all()
    return assembler.build()


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def _probe_label(p) -> str:
    return _PROBE_LABELS.get(p, format(p, "g"))


def _calibrate_li_lee(config, dataset):
    params = {}
    for gender in GENDERS:
        d_T, E_T = dataset.aggregate(gender)
        surf = dataset.surface(config.country_of_interest, gender)
        p, _ = lilee.calibrate(d_T, E_T, surf.deaths, surf.exposures,
                               config.ages, config.years)
        params[gender] = p
    return params


def _calibrate_alm(config, dataset, blend):
    params = {}
    for gender in GENDERS:
        d_T, E_T = dataset.aggregate(gender)
        surf = dataset.surface(config.country_of_interest, gender)
        p, _ = lilee.fit_adjusted_lee_miller(
            d_T, E_T, surf.deaths, surf.exposures, config.ages, config.years,
            blend,
        )
        params[gender] = p
    return params


def _fit_dynamics(config, params, weight_last):
    series = dynamics.PeriodEffectSeries(
        years=config.years,
        K={g: params[g].K for g in GENDERS},
        kappa={g: params[g].kappa for g in GENDERS},
    )
    rows = dynamics.build_design(series)
    weights = np.ones(len(rows))
    if weight_last is not None:
        weights[-1] = weight_last
    fit = dynamics.fit_weighted_mle(rows, weights)
    return fit, rows


def _fanchart_rows(config, params, fit):
    """All fan-chart records for one scenario, deterministically ordered."""
    spec = project.ScenarioSpec(
        jump_off_year=config.years.last, horizon=config.horizon,
        n_paths=config.n_paths, seed=config.seed,
        jump_off=(float(params["M"].K[-1]), float(params["M"].kappa[-1]),
                  float(params["F"].K[-1]), float(params["F"].kappa[-1])),
    )
    paths = project.simulate_period_effects(fit, spec)
    central = project.central_period_effects(fit, spec)
    probes = project.DEFAULT_PROBES
    records = []

    def emit(quantity, gender, age, year, samples, best):
        table = project.quantile_summary(samples, probes, best_estimate=best)
        for p in probes:
            records.append((quantity, gender, age, int(year), _probe_label(p),
                            float(table[p])))
        records.append((quantity, gender, age, int(year), "best",
                        float(table["best"])))

    for gender in GENDERS:
        for j, year in enumerate(paths.years):
            emit("K", gender, None, year, paths.K[gender][:, j],
                 central.K[gender][0, j])
            emit("kappa", gender, None, year, paths.kappa[gender][:, j],
                 central.kappa[gender][0, j])

    span = {a: project.MAX_AGE - a + 1 for a in config.cohort_ages}
    a0 = config.ages.min_age   # closed curves cover ages a0..120
    for gender in GENDERS:
        diag = {a: np.empty((config.n_paths, span[a])) for a in config.cohort_ages}
        diag_c = {a: np.empty((1, span[a])) for a in config.cohort_ages}
        for j, year in enumerate(paths.years):
            mu = project.force_paths(params[gender], paths, gender, int(year))
            mu_c = project.force_paths(params[gender], central, gender, int(year))
            q = -np.expm1(-mu)
            q_c = -np.expm1(-mu_c)
            closed = project.kannisto_close(q, a0)
            closed_c = project.kannisto_close(q_c, a0)
            mu_cl = -np.log1p(-closed)
            mu_cl_c = -np.log1p(-closed_c)
            for age in config.report_ages:
                i = config.ages.index(age)
                emit("q", gender, age, year, q[:, i], q_c[0, i])
                emit("e_per", gender, age, year,
                     project.period_life_expectancy(mu_cl[:, age - a0:], age),
                     float(project.period_life_expectancy(
                         mu_cl_c[:, age - a0:], age)[0]))
            for age, width in span.items():
                if j < width:
                    diag[age][:, j] = mu_cl[:, age + j - a0]
                    diag_c[age][:, j] = mu_cl_c[:, age + j - a0]
        for age in config.cohort_ages:
            # Cohort expectancy: the period kernel applied on the diagonal.
            e_coh = project.period_life_expectancy(diag[age], age)
            e_coh_c = project.period_life_expectancy(diag_c[age], age)
            emit("e_coh", gender, age, paths.years[0], e_coh, float(e_coh_c[0]))

    order = {q: i for i, q in enumerate(_QUANTITY_ORDER)}
    probe_rank = {"0.005": 0, "0.5": 1, "0.995": 2, "best": 3}
    records.sort(key=lambda r: (order[r[0]], r[1], -1 if r[2] is None else r[2],
                                r[3], probe_rank.get(r[4], 99)))
    return records


def _write_fanchart(path, records):
    with Path(path).open("w", newline="") as handle:
        handle.write("quantity,gender,age,year,probe,value\n")
        for quantity, gender, age, year, probe, value in records:
            age_text = "" if age is None else str(age)
            handle.write(f"{quantity},{gender},{age_text},{year},{probe},"
                         f"{format(value, '.17g')}\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ScenarioResult:
    label: str
    value: float
    status: str
    error: str | None
    ts_params: dict | None
    stationary: dict | None
    ridged: bool | None
    loglik: float | None
    files: dict
    hashes: dict
    elapsed: float

    def to_json(self) -> dict:
        out = {
            "label": self.label, "value": self.value, "status": self.status,
            "files": self.files, "hashes": self.hashes,
        }
        if self.status == "ok":
            out.update(ts_params=self.ts_params, stationary=self.stationary,
                       ridged=self.ridged, loglik=self.loglik)
        else:
            out["error"] = self.error
        return out


@dataclass
class RunReport:
    config_summary: dict
    virtual_cells: dict
    consistency: list
    exposure_origins: dict
    scenarios: list

    @property
    def all_ok(self) -> bool:
        return all(s.status == "ok" for s in self.scenarios)

    @property
    def any_ok(self) -> bool:
        return any(s.status == "ok" for s in self.scenarios)

    def to_json(self) -> dict:
        return {
            "config": self.config_summary,
            "virtual_cells": self.virtual_cells,
            "consistency": self.consistency,
            "weekly_exposure_origin": self.exposure_origins,
            "scenarios": [s.to_json() for s in self.scenarios],
        }


def run_scenario(config: RunConfig, dataset, value: float, shared_params,
                 out_dir: Path) -> ScenarioResult:
    """One grid value: calibrate (or reuse), fit dynamics, simulate, write."""
    start = time.perf_counter()
    if config.method_kind == WEIGHTED_LIKELIHOOD:
        label = f"w{value:g}"
        params = shared_params
        fit, _ = _fit_dynamics(config, params, weight_last=value)
    else:
        label = f"alm{value:g}"
        params = _calibrate_alm(config, dataset, value)
        fit, _ = _fit_dynamics(config, params, weight_last=None)

    files = {
        "params": f"params_{label}.csv",
        "tsfit": f"tsfit_{label}.csv",
        "fanchart": f"fanchart_{label}.csv",
    }
    lilee.export_params_csv(out_dir / files["params"], params)
    dynamics.export_fit_csv(out_dir / files["tsfit"], fit)
    _write_fanchart(out_dir / files["fanchart"],
                    _fanchart_rows(config, params, fit))
    hashes = {name: _sha256(out_dir / name) for name in files.values()}
    return ScenarioResult(
        label=label, value=value, status="ok", error=None,
        ts_params={name: float(v) for name, v in zip(dynamics.PSI_NAMES, fit.psi)},
        stationary=fit.stationary, ridged=fit.ridged, loglik=float(fit.loglik),
        files=files, hashes=hashes, elapsed=time.perf_counter() - start,
    )


def run_pipeline(config: RunConfig, jobs: int | None = None) -> RunReport:
    """Execute every scenario in the method grid and write all outputs."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}

    t0 = time.perf_counter()
    assembled = assemble_dataset(config)
    timings["assemble"] = time.perf_counter() - t0

    shared_params = None
    shared_error = None
    if config.method_kind == WEIGHTED_LIKELIHOOD:
        t0 = time.perf_counter()
        try:
            shared_params = _calibrate_li_lee(config, assembled.dataset)
        except MortkitError as exc:
            shared_error = f"{type(exc).__name__}: {exc}"
        timings["calibrate"] = time.perf_counter() - t0

    def run_one(value):
        if shared_error is not None:
            return ScenarioResult(
                label=f"w{value:g}", value=value, status="failed",
                error=shared_error, ts_params=None, stationary=None,
                ridged=None, loglik=None, files={}, hashes={}, elapsed=0.0,
            )
        try:
            return run_scenario(config, assembled.dataset, value,
                                shared_params, out_dir)
        except MortkitError as exc:
            prefix = "w" if config.method_kind == WEIGHTED_LIKELIHOOD else "alm"
            return ScenarioResult(
                label=f"{prefix}{value:g}", value=value, status="failed",
                error=f"{type(exc).__name__}: {exc}", ts_params=None,
                stationary=None, ridged=None, loglik=None, files={},
                hashes={}, elapsed=0.0,
            )

    workers = jobs if jobs else len(config.method_grid)
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run_one, config.method_grid))
    timings["scenarios"] = time.perf_counter() - t0

    report = RunReport(
        config_summary={
            "country_of_interest": config.country_of_interest,
            "common_pool": list(config.common_pool),
            "years": [config.years.first, config.years.last],
            "ages": [config.ages.min_age, config.ages.max_age],
            "method": config.method_kind,
            "grid": list(config.method_grid),
            "n_paths": config.n_paths,
            "horizon": config.horizon,
            "seed": config.seed,
        },
        virtual_cells=assembled.virtual_cells,
        consistency=assembled.consistency,
        exposure_origins=assembled.exposure_origins,
        scenarios=results,
    )
    with (out_dir / "report.json").open("w") as handle:
        json.dump(report.to_json(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    timings["scenario_seconds"] = {s.label: s.elapsed for s in results}
    with (out_dir / "timings.json").open("w") as handle:
        json.dump(timings, handle, indent=2)
        handle.write("\n")
    return report


# ---------------------------------------------------------------------------
# Report diffing
# ---------------------------------------------------------------------------

def diff_reports(report_a: dict, report_b: dict) -> dict:
    """Structured parameter deltas (a minus b) between two run reports.

    Scenarios are paired by position; both reports must carry the same
    quantity schema.  Antisymmetric: diff(a, b) == -diff(b, a) value-wise.
    """
    scen_a = report_a.get("scenarios", [])
    scen_b = report_b.get("scenarios", [])
    pairs = []
    for a, b in zip(scen_a, scen_b):
        entry = {"label_a": a.get("label"), "label_b": b.get("label")}
        pa, pb = a.get("ts_params"), b.get("ts_params")
        if pa and pb:
            if set(pa) != set(pb):
                raise ValidationError("scenario parameter schemas differ")
            entry["ts_params"] = {k: pa[k] - pb[k] for k in sorted(pa)}
            entry["loglik"] = a.get("loglik", 0.0) - b.get("loglik", 0.0)
        else:
            entry["incomparable"] = True
        pairs.append(entry)
    return {
        "scenario_count": [len(scen_a), len(scen_b)],
        "scenarios": pairs,
    }
