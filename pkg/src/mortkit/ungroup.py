"""Ungrouping of bucketed annual totals into individual ages.

Exposures: last year's individual-age curve is shifted one age upward
(age 0 extrapolated linearly), scaled per closed bucket to conserve the
bucket totals, and the open bucket is filled by shifting last year's
values uniformly by the bucket's year-on-year change spread over ages up
to 110.  Deaths: an auxiliary multi-population model calibrated on
observed years supplies a central-projected force; expected deaths on
virtual exposures give the within-bucket profile, scaled per closed
bucket, with dedicated open-bucket rules for 90+ (reference-year tail
plus a gender-specific share of the excess) and 85+ (model tail beyond
age 90 estimated via Kannisto closure and removed before scaling).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import (AgeBucket, AgeRange, BucketedAnnualSeries, GENDERS,
                   MultiPopulationDataset, YearRange)
from .dynamics import (InstabilityWarning, PeriodEffectSeries, TimeSeriesFit,
                       build_design, fit_weighted_mle)
from .errors import ValidationError
from .lilee import LiLeeParams, calibrate
from .project import OPEN_BUCKET_TOP, kannisto_close

#: Default gender-specific share of open-bucket excess allocated to age 90.
DEATH_ALLOCATION_RATE = {"M": 0.20, "F": 0.145}


# ---------------------------------------------------------------------------
# Exposure protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BucketScaleFactors:
    """Per-bucket multiplicative factors applied by a scaling step."""

    factors: dict

    def __getitem__(self, bucket: AgeBucket) -> float:
        return self.factors[bucket]


def shift_exposure_curve(prev_curve: np.ndarray) -> np.ndarray:
    """Advance last year's exposures one age: the age-x cohort becomes the
    age-(x+1) cohort.  Age 0 is extrapolated linearly from ages 0 and 1 of
    the source year; a nonpositive extrapolation is refused, not clamped.
    """
    prev = np.asarray(prev_curve, dtype=float)
    if prev.ndim != 1 or prev.size < 2:
        raise ValidationError("need a 1-d curve with at least two ages")
    shifted = np.empty_like(prev)
    shifted[1:] = prev[:-1]
    shifted[0] = 2.0 * prev[0] - prev[1]
    if shifted[0] <= 0:
        raise ValidationError(
            f"extrapolated age-0 exposure {shifted[0]:g} is nonpositive"
        )
    return shifted


def scale_curve_to_buckets(curve: np.ndarray, bucket_totals: dict,
                           first_age: int = 0
                           ) -> tuple[np.ndarray, BucketScaleFactors]:
    """Rescale a curve so each closed bucket's sum matches its total.

    Ages outside the given buckets are copied through unchanged.  A bucket
    whose curve mass is zero against a positive total cannot be scaled.
    """
    curve = np.asarray(curve, dtype=float)
    out = curve.copy()
    factors = {}
    for bucket in sorted(bucket_totals):
        if bucket.is_open:
            raise ValidationError(f"bucket {bucket.label} is open; scale only closed ones")
        lo = bucket.lower - first_age
        hi = bucket.upper - first_age
        if lo < 0 or hi >= curve.size:
            raise ValidationError(f"bucket {bucket.label} outside the curve's ages")
        mass = float(curve[lo:hi + 1].sum())
        total = float(bucket_totals[bucket])
        if mass <= 0:
            if total > 0:
                raise ValidationError(
                    f"bucket {bucket.label}: zero curve mass against total {total:g}"
                )
            factors[bucket] = 1.0
            continue
        b = total / mass
        out[lo:hi + 1] = curve[lo:hi + 1] * b
        factors[bucket] = b
    return out, BucketScaleFactors(factors)


def apply_open_bucket_exposure(prev_values: np.ndarray, open_total: float,
                               prev_open_total: float,
                               open_lower: int) -> tuple[np.ndarray, float]:
    """Uniform-shift rule for the open exposure bucket.

    The bucket's year-on-year change is spread evenly over all its ages up
    to 110; last year's values at the retained ages move by that constant.
    Nonpositive results are refused.
    """
    prev = np.asarray(prev_values, dtype=float)
    width = OPEN_BUCKET_TOP - open_lower + 1
    shift = (open_total - prev_open_total) / width
    adjusted = prev + shift
    if np.any(adjusted <= 0):
        age = open_lower + int(np.argmax(adjusted <= 0))
        raise ValidationError(
            f"open-bucket exposure at age {age} becomes nonpositive "
            f"(shift {shift:g})"
        )
    return adjusted, shift


@dataclass(frozen=True)
class UngroupedExposures:
    """Virtual individual-age exposures plus protocol diagnostics."""

    ages: AgeRange
    values: np.ndarray
    scale_factors: BucketScaleFactors
    open_shift: float


def _split_buckets(series_table: dict) -> tuple[dict, AgeBucket]:
    closed = {b: v for b, v in series_table.items() if not b.is_open}
    open_buckets = [b for b in series_table if b.is_open]
    if len(open_buckets) != 1:
        raise ValidationError("bucket structure must contain exactly one open bucket")
    return closed, open_buckets[0]


def _check_partition(closed: dict, open_bucket: AgeBucket, top_age: int):
    covered = sorted(age for b in closed for age in b.ages())
    expected = list(range(0, open_bucket.lower))
    if covered != expected:
        raise ValidationError(
            f"closed buckets must tile ages 0..{open_bucket.lower - 1}"
        )
    if open_bucket.lower > top_age:
        raise ValidationError(
            f"open bucket {open_bucket.label} starts above the model top age {top_age}"
        )


def ungroup_exposures(prev_curve: np.ndarray, buckets: BucketedAnnualSeries,
                      ages: AgeRange, *, prev_open_total: float | None = None
                      ) -> UngroupedExposures:
    """Turn one year's bucketed exposures into individual ages 0..top.

    `prev_curve` is the previous year's individual-age exposures over the
    model ages (observed or already-virtual for chained years).
    `prev_open_total` is last year's total exposure in the open bucket;
    when the source data end at the model top age, the within-range sum is
    used.
    """
    if buckets.exposures is None:
        raise ValidationError("annual series carries no exposures")
    prev = np.asarray(prev_curve, dtype=float)
    if prev.shape != (len(ages),):
        raise ValidationError("previous-year curve must cover the model ages")
    closed, open_bucket = _split_buckets(buckets.exposures)
    _check_partition(closed, open_bucket, ages.max_age)

    shifted = shift_exposure_curve(prev)
    scaled, factors = scale_curve_to_buckets(shifted, closed, ages.min_age)

    open_lo = open_bucket.lower - ages.min_age
    if prev_open_total is None:
        prev_open_total = float(prev[open_lo:].sum())
    adjusted, shift = apply_open_bucket_exposure(
        prev[open_lo:], buckets.exposures[open_bucket], prev_open_total,
        open_bucket.lower,
    )
    out = scaled.copy()
    out[open_lo:] = adjusted
    return UngroupedExposures(ages=ages, values=out, scale_factors=factors,
                              open_shift=float(shift))


# ---------------------------------------------------------------------------
# Auxiliary projection model for the death protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuxiliaryModel:
    """Multi-population fit on observed years used to profile deaths."""

    country: str
    params: dict            # gender -> LiLeeParams
    ts_fit: TimeSeriesFit
    years: YearRange

    def central_force(self, gender: str, year: int) -> np.ndarray:
        """Fitted force for calibration years, zero-noise projection after."""
        p = self.params[gender]
        if year <= self.years.last:
            j = self.years.index(year)
            return np.exp(p.log_mu()[:, j])
        K = float(p.K[-1])
        kappa = float(p.kappa[-1])
        theta = self.ts_fit.drift(gender)
        c = self.ts_fit.ar_intercept(gender)
        phi = self.ts_fit.ar_coefficient(gender)
        for _ in range(year - self.years.last):
            K = K + theta
            kappa = c + phi * kappa
        return np.exp(p.A + p.B * K + p.alpha + p.beta * kappa)


def fit_auxiliary_projection_model(dataset: MultiPopulationDataset,
                                   country: str, *,
                                   start_year: int | None = None
                                   ) -> AuxiliaryModel:
    """Calibrate the auxiliary model on individual-age (observed) years.

    The dataset must already be restricted to observed years; start_year
    trims its beginning.  Time dynamics are fitted with unit weights.  An
    AR(1) coefficient at or beyond the unit circle warns (projection would
    be unstable) but is kept.
    """
    years = dataset.years
    if start_year is not None and start_year > years.first:
        years = YearRange(start_year, years.last)
    j0 = dataset.years.index(years.first)
    ages = dataset.ages

    params = {}
    for gender in GENDERS:
        d_T, E_T = dataset.aggregate(gender)
        surf = dataset.surface(country, gender)
        p, _ = calibrate(d_T[:, j0:], E_T[:, j0:],
                         surf.deaths[:, j0:], surf.exposures[:, j0:],
                         ages, years)
        params[gender] = p
    series = PeriodEffectSeries(
        years=years,
        K={g: params[g].K for g in GENDERS},
        kappa={g: params[g].kappa for g in GENDERS},
    )
    fit = fit_weighted_mle(build_design(series))
    for gender in GENDERS:
        phi = fit.ar_coefficient(gender)
        if abs(phi) >= 1.0:
            warnings.warn(
                f"auxiliary AR(1) coefficient for {gender} is {phi:.4f}; "
                "central projection is unstable",
                InstabilityWarning, stacklevel=2,
            )
    return AuxiliaryModel(country=country, params=params, ts_fit=fit, years=years)


def expected_deaths(force: np.ndarray, exposures: np.ndarray) -> np.ndarray:
    """Cell-wise expected deaths mu * E on virtual exposures."""
    force = np.asarray(force, dtype=float)
    exposures = np.asarray(exposures, dtype=float)
    if force.shape != exposures.shape:
        raise ValidationError("force and exposures must align")
    if np.any(force < 0) or np.any(exposures <= 0):
        raise ValidationError("force must be >= 0 and exposures > 0")
    return force * exposures


def apply_open_bucket_deaths(reference_tail: np.ndarray, open_total: float,
                             allocation_rate: float) -> float:
    """Deaths at age 90 when the open bucket is 90+.

    reference_tail holds the reference year's deaths at ages 90, 91, ...
    The excess of this year's open-bucket total over the reference tail
    total is allocated to age 90 at the gender-specific rate; a negative
    result floors at zero with a warning.
    """
    tail = np.asarray(reference_tail, dtype=float)
    if tail.ndim != 1 or tail.size < 1:
        raise ValidationError("reference tail must hold at least age 90")
    if not 0.0 < allocation_rate <= 1.0:
        raise ValidationError(f"allocation rate {allocation_rate} outside (0, 1]")
    value = float(tail[0] + allocation_rate * (open_total - tail.sum()))
    if value < 0:
        warnings.warn(
            f"open-bucket death allocation is negative ({value:g}); floored at 0",
            RuntimeWarning, stacklevel=2,
        )
        value = 0.0
    return value


@dataclass(frozen=True)
class UngroupedDeaths:
    """Virtual individual-age deaths plus protocol diagnostics."""

    ages: AgeRange
    values: np.ndarray
    scale_factors: BucketScaleFactors
    open_rule: str            # "reference-tail" or "model-tail"
    tail_estimate: float      # estimated deaths beyond the model top age


def _model_tail_share(force: np.ndarray, exposures: np.ndarray,
                      open_lower: int, ages: AgeRange) -> float:
    """Share of the open bucket expected beyond the model top age.

    The expected-death curve is extended past age 90 by Kannisto closure
    of the force, with exposures depleted cohort-wise by exp(-mu), up to
    age 110.
    """
    q = -np.expm1(-np.asarray(force, dtype=float))
    q_closed = kannisto_close(q, ages.min_age)
    mu_closed = -np.log1p(-q_closed)
    top = ages.max_age
    tail_mu = mu_closed[top - ages.min_age + 1: OPEN_BUCKET_TOP - ages.min_age + 1]
    e = float(exposures[top - ages.min_age])
    mu_prev = float(mu_closed[top - ages.min_age])
    tail_expected = 0.0
    within = float(np.sum(force[open_lower - ages.min_age:]
                          * exposures[open_lower - ages.min_age:]))
    for mu_x in tail_mu:
        e = e * np.exp(-mu_prev)
        tail_expected += float(mu_x) * e
        mu_prev = float(mu_x)
    total = within + tail_expected
    return tail_expected / total if total > 0 else 0.0


def ungroup_deaths(aux: AuxiliaryModel, gender: str, year: int,
                   exposures: np.ndarray, buckets: BucketedAnnualSeries,
                   ages: AgeRange, *, reference_tail: np.ndarray | None = None,
                   allocation_rate: float | None = None) -> UngroupedDeaths:
    """Turn one year's bucketed deaths into individual ages.

    `exposures` are the (virtual) individual-age exposures of the target
    year.  An open 90+ bucket needs `reference_tail` (reference-year
    deaths at ages >= 90) and an allocation rate; an open 85+ bucket uses
    the model-tail estimate instead.
    """
    if buckets.deaths is None:
        raise ValidationError("annual series carries no deaths")
    exposures = np.asarray(exposures, dtype=float)
    if exposures.shape != (len(ages),):
        raise ValidationError("exposures must cover the model ages")
    closed, open_bucket = _split_buckets(buckets.deaths)
    _check_partition(closed, open_bucket, ages.max_age)

    force = aux.central_force(gender, year)
    profile = expected_deaths(force, exposures)
    scaled, factors = scale_curve_to_buckets(profile, closed, ages.min_age)

    out = scaled.copy()
    open_lo_idx = open_bucket.lower - ages.min_age
    open_total = float(buckets.deaths[open_bucket])

    if open_bucket.lower == ages.max_age:
        # 90+ against a model ending at 90: reference-year tail rule.
        if reference_tail is None:
            raise ValidationError("90+ bucket needs reference-year tail deaths")
        rate = DEATH_ALLOCATION_RATE[gender] if allocation_rate is None else allocation_rate
        out[open_lo_idx] = apply_open_bucket_deaths(reference_tail, open_total, rate)
        tail_estimate = float(np.asarray(reference_tail)[1:].sum())
        rule = "reference-tail"
    else:
        # 85+ style: estimate the share beyond the top age from the model
        # curve, remove it, scale the retained ages against the remainder.
        share = _model_tail_share(force, exposures, open_bucket.lower, ages)
        tail_estimate = open_total * share
        remainder = open_total - tail_estimate
        mass = float(profile[open_lo_idx:].sum())
        if mass <= 0 and remainder > 0:
            raise ValidationError(
                f"open bucket {open_bucket.label}: zero expected mass"
            )
        b = remainder / mass if mass > 0 else 1.0
        out[open_lo_idx:] = profile[open_lo_idx:] * b
        factors = BucketScaleFactors({**factors.factors, open_bucket: b})
        rule = "model-tail"
    if np.any(out < 0):
        raise ValidationError("ungrouped deaths became negative")
    return UngroupedDeaths(ages=ages, values=out, scale_factors=factors,
                           open_rule=rule, tail_estimate=float(tail_estimate))
