"""Stochastic projection of period effects and derived mortality summaries.

Paths start at the calibrated jump-off values and evolve by the fitted
random-walk/AR(1) recursion, drawing one joint 4-dimensional Gaussian
innovation per (path, year).  Each path gets its own counter-based RNG
stream keyed by (seed, path index), so results are independent of
execution order or thread count.  Simulated forces are turned into
one-year death probabilities, closed to age 120 with a Kannisto logistic
fitted on ages 80..90, and summarized as period/cohort life expectancies
and empirical quantiles.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import TimeSeriesFit
from .errors import ValidationError
from .lilee import LiLeeParams

#: Oldest age after closure; also the life-expectancy truncation age.
MAX_AGE = 120

#: Open-ended buckets conceptually end here (used by ungrouping tails).
OPEN_BUCKET_TOP = 110

#: Ages whose logit-forces the Kannisto regression is fitted on.
KANNISTO_FIT_LO = 80
KANNISTO_FIT_HI = 90

#: Force clamp just below 1 so the logit stays defined.
FORCE_CLAMP = 1.0 - 1e-12

#: Default fan-chart probes.
DEFAULT_PROBES = (0.005, 0.5, 0.995)

GENDERS = ("M", "F")


@dataclass(frozen=True)
class ScenarioSpec:
    """What to simulate: horizon, path count, seed and jump-off state.

    `jump_off` is (K^M, kappa^M, K^F, kappa^F) in `jump_off_year`, the
    final calibration year.
    """

    jump_off_year: int
    horizon: int
    n_paths: int
    seed: int
    jump_off: tuple

    def __post_init__(self):
        if self.horizon <= self.jump_off_year:
            raise ValidationError(
                f"horizon {self.horizon} must exceed jump-off year {self.jump_off_year}"
            )
        if self.n_paths < 1:
            raise ValidationError("need at least one path")
        if len(self.jump_off) != 4:
            raise ValidationError("jump_off must be (K_M, kappa_M, K_F, kappa_F)")

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.jump_off_year, self.horizon + 1)


@dataclass(frozen=True)
class SimulationPaths:
    """Simulated period effects; arrays are (n_paths, n_years) with the
    jump-off year in column 0."""

    years: np.ndarray
    K: dict
    kappa: dict
    central: bool = False

    @property
    def n_paths(self) -> int:
        return self.K["M"].shape[0]

    def year_index(self, year: int) -> int:
        if not self.years[0] <= year <= self.years[-1]:
            raise ValidationError(f"year {year} outside simulated range")
        return int(year - self.years[0])


def _innovation_factor(C) -> np.ndarray:
    """Symmetric PSD factor L with L L' = C; tolerates the exactly
    semidefinite covariances produced by degenerate test inputs."""
    C = np.asarray(C, dtype=float)
    if C.shape != (4, 4) or not np.allclose(C, C.T, atol=1e-10):
        raise ValidationError("covariance must be symmetric 4x4")
    eigval, eigvec = np.linalg.eigh(C)
    floor = -1e-10 * max(eigval.max(), 1.0)
    if eigval.min() < floor:
        raise ValidationError("covariance is not positive semidefinite")
    return eigvec * np.sqrt(np.clip(eigval, 0.0, None))


def _recur(spec: ScenarioSpec, fit: TimeSeriesFit, eps: np.ndarray) -> SimulationPaths:
    """Run the drift/AR recursion given innovations eps (n, H, 4)."""
    n, H, _ = eps.shape
    years = spec.years
    K = {g: np.empty((n, H + 1)) for g in GENDERS}
    kap = {g: np.empty((n, H + 1)) for g in GENDERS}
    K["M"][:, 0], kap["M"][:, 0], K["F"][:, 0], kap["F"][:, 0] = spec.jump_off
    cols = {"M": (0, 1), "F": (2, 3)}
    for g in GENDERS:
        theta = fit.drift(g)
        c = fit.ar_intercept(g)
        phi = fit.ar_coefficient(g)
        ki, di = cols[g]
        for h in range(H):
            K[g][:, h + 1] = K[g][:, h] + theta + eps[:, h, ki]
            kap[g][:, h + 1] = c + phi * kap[g][:, h] + eps[:, h, di]
    for table in (K, kap):
        for arr in table.values():
            arr.flags.writeable = False
    return SimulationPaths(years=years, K=K, kappa=kap)


def simulate_period_effects(fit: TimeSeriesFit, spec: ScenarioSpec) -> SimulationPaths:
    """Simulate n paths of (K, kappa) for both genders.

    One 4-dim draw per (path, year) via a Philox stream keyed by
    (seed, path index): reruns with the same seed are bit-identical and
    path i's stream never depends on how many paths run or in what order.
    """
    L = _innovation_factor(fit.C)
    H = spec.horizon - spec.jump_off_year
    eps = np.empty((spec.n_paths, H, 4))
    for i in range(spec.n_paths):
        rng = np.random.Generator(
            np.random.Philox(key=np.array([spec.seed, i], dtype=np.uint64))
        )
        eps[i] = rng.standard_normal((H, 4)) @ L.T
    return _recur(spec, fit, eps)


def central_period_effects(fit: TimeSeriesFit, spec: ScenarioSpec) -> SimulationPaths:
    """The noise-free central path (all innovations zero); one path."""
    one = ScenarioSpec(spec.jump_off_year, spec.horizon, 1, spec.seed, spec.jump_off)
    H = spec.horizon - spec.jump_off_year
    paths = _recur(one, fit, np.zeros((1, H, 4)))
    return SimulationPaths(years=paths.years, K=paths.K, kappa=paths.kappa,
                           central=True)


# ---------------------------------------------------------------------------
# Link to mortality
# ---------------------------------------------------------------------------

def force_paths(params: LiLeeParams, paths: SimulationPaths, gender: str,
                year: int) -> np.ndarray:
    """mu over the model ages for one year; shape (n_paths, n_ages)."""
    j = paths.year_index(year)
    K = paths.K[gender][:, j]
    kappa = paths.kappa[gender][:, j]
    log_mu = (params.A + params.alpha)[None, :] \
        + K[:, None] * params.B[None, :] + kappa[:, None] * params.beta[None, :]
    return np.exp(log_mu)


def paths_to_mortality(params: LiLeeParams, paths: SimulationPaths,
                       gender: str, year: int | None = None) -> np.ndarray:
    """One-year death probabilities q = 1 - exp(-mu) under a
    piecewise-constant force.

    With `year` given the result is (n_paths, n_ages); otherwise all
    simulated years are materialized as (n_paths, n_years, n_ages), which
    for large path counts is sizable - prefer per-year slices.
    """
    if year is not None:
        return -np.expm1(-force_paths(params, paths, gender, year))
    out = np.stack(
        [-np.expm1(-force_paths(params, paths, gender, int(y)))
         for y in paths.years], axis=1,
    )
    return out


# ---------------------------------------------------------------------------
# Kannisto closure
# ---------------------------------------------------------------------------

def kannisto_close(q: np.ndarray, ages_lo: int = 0) -> np.ndarray:
    """Extend death probabilities over ages `ages_lo`..90 up to age 120.

    The forces mu = -log(1-q) on ages 80..90 are fitted with the logistic
    mu_x = c e^(phi x) / (1 + c e^(phi x)) by least squares on
    logit(mu_x), then evaluated on 91..120.  Ages up to 90 pass through
    unchanged.  A non-increasing fit (phi <= 0) warns but is applied;
    forces at or above 1 are clamped just below 1 before the logit, with a
    warning.  Input may carry leading path/year axes.
    """
    q = np.asarray(q, dtype=float)
    n_in = q.shape[-1]
    top_in = ages_lo + n_in - 1
    if top_in < KANNISTO_FIT_HI:
        raise ValidationError(
            f"closure needs ages up to {KANNISTO_FIT_HI}, input ends at {top_in}"
        )
    if np.any(q <= 0) or np.any(q >= 1):
        raise ValidationError("death probabilities must lie in (0, 1)")
    lo = KANNISTO_FIT_LO - ages_lo
    hi = KANNISTO_FIT_HI - ages_lo
    mu_fit = -np.log1p(-q[..., lo:hi + 1])
    if np.any(mu_fit >= 1.0):
        warnings.warn("force >= 1 clamped below 1 for the logit fit",
                      RuntimeWarning, stacklevel=2)
        mu_fit = np.minimum(mu_fit, FORCE_CLAMP)
    x = np.arange(KANNISTO_FIT_LO, KANNISTO_FIT_HI + 1, dtype=float)
    y = np.log(mu_fit) - np.log1p(-mu_fit)   # logit
    xbar = x.mean()
    slope = ((x - xbar) * y).sum(axis=-1) / np.sum((x - xbar) ** 2)
    intercept = y.mean(axis=-1) - slope * xbar
    # An exactly flat tail regresses to a slope of +-1e-19 float noise, so
    # the degeneracy test needs a hair of slack above zero.
    if np.any(slope <= 1e-12):
        warnings.warn("fitted logistic is non-increasing in age (phi <= 0)",
                      RuntimeWarning, stacklevel=2)
    ext_ages = np.arange(top_in + 1, MAX_AGE + 1, dtype=float)
    logit_mu = intercept[..., None] + slope[..., None] * ext_ages
    mu_ext = 1.0 / (1.0 + np.exp(-logit_mu))
    q_ext = -np.expm1(-mu_ext)
    return np.concatenate([q, q_ext], axis=-1)


# ---------------------------------------------------------------------------
# Life expectancy
# ---------------------------------------------------------------------------

def _year_fraction(mu: np.ndarray) -> np.ndarray:
    """(1 - e^-mu)/mu with the mu -> 0 limit of 1."""
    out = np.ones_like(mu)
    nz = mu != 0
    out[nz] = -np.expm1(-mu[nz]) / mu[nz]
    return out


def _expectancy_kernel(mu: np.ndarray) -> np.ndarray:
    """Expected years lived over a force sequence (trailing axis = ages)."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValidationError("forces must be nonnegative")
    cum = np.cumsum(mu, axis=-1)
    survival = np.ones_like(mu)
    survival[..., 1:] = np.exp(-cum[..., :-1])
    return np.sum(survival * _year_fraction(mu), axis=-1)


def period_life_expectancy(mu: np.ndarray, age: int) -> np.ndarray:
    """Period life expectancy at `age` from one year's forces.

    `mu` covers ages `age`..120 on the trailing axis (leading axes may be
    paths); the sum truncates at age 120.
    """
    mu = np.asarray(mu, dtype=float)
    expected = MAX_AGE - age + 1
    if mu.shape[-1] != expected:
        raise ValidationError(
            f"need forces for ages {age}..{MAX_AGE} ({expected} values), "
            f"got {mu.shape[-1]}"
        )
    return _expectancy_kernel(mu)


def cohort_life_expectancy(mu_surface: np.ndarray, age: int) -> np.ndarray:
    """Cohort life expectancy at `age` in the surface's first year.

    `mu_surface` has shape (..., n_years, 121) with ages 0..120 on the
    trailing axis; the cohort follows the diagonal (age+k, first_year+k).
    Errors if the horizon cannot reach age 120.
    """
    mu_surface = np.asarray(mu_surface, dtype=float)
    if mu_surface.shape[-1] != MAX_AGE + 1:
        raise ValidationError(f"surface must cover ages 0..{MAX_AGE}")
    span = MAX_AGE - age + 1
    if mu_surface.shape[-2] < span:
        raise ValidationError(
            f"cohort at age {age} needs {span} projection years, surface has "
            f"{mu_surface.shape[-2]}; extend the simulation horizon"
        )
    steps = np.arange(span)
    diag = mu_surface[..., steps, age + steps]
    return _expectancy_kernel(diag)


# ---------------------------------------------------------------------------
# Quantile summaries
# ---------------------------------------------------------------------------

def quantile_summary(samples: np.ndarray, probes=DEFAULT_PROBES,
                     best_estimate=None) -> dict:
    """Empirical quantiles over the path axis (axis 0), linear
    interpolation of order statistics.

    Returns {probe: value(s)} plus a "best" entry when the zero-noise
    central-path value is supplied; the median stays alongside it.
    """
    samples = np.asarray(samples, dtype=float)
    probes = tuple(probes)
    if any(not 0.0 <= p <= 1.0 for p in probes):
        raise ValidationError("probes must lie in [0, 1]")
    levels = np.quantile(samples, probes, axis=0, method="linear")
    out = {p: levels[i] for i, p in enumerate(probes)}
    if best_estimate is not None:
        out["best"] = np.asarray(best_estimate, dtype=float)
    return out
