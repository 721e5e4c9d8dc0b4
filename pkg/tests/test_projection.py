"""Stochastic projection, Kannisto closure and life-expectancy summaries."""
import math

import numpy as np
import pytest

from mortkit.data import AgeRange, YearRange
from mortkit.dynamics import TimeSeriesFit
from mortkit.errors import ValidationError
from mortkit.lilee import LiLeeParams
from mortkit.project import (MAX_AGE, ScenarioSpec, SimulationPaths,
                             central_period_effects, cohort_life_expectancy,
                             force_paths, kannisto_close,
                             paths_to_mortality, period_life_expectancy,
                             quantile_summary, simulate_period_effects)

PSI = np.array([-0.20, -0.016, 0.95, -0.17, -0.030, 0.90])

COV = np.array([
    [0.0225, 0.0060, 0.0090, 0.0015],
    [0.0060, 0.0097, 0.0042, 0.0051],
    [0.0090, 0.0042, 0.0240, 0.0060],
    [0.0015, 0.0051, 0.0060, 0.0135],
])

JUMP_OFF = (1.5, 0.3, -0.8, 0.1)


def make_fit(psi=PSI, C=COV):
    return TimeSeriesFit(psi=np.asarray(psi, dtype=float),
                         C=np.asarray(C, dtype=float),
                         weights=np.ones(10), loglik=0.0, iterations=1)


def make_spec(horizon=2030, n_paths=4, seed=911, jump_off=JUMP_OFF):
    return ScenarioSpec(jump_off_year=2020, horizon=horizon, n_paths=n_paths,
                        seed=seed, jump_off=jump_off)


def ar_mean(c, phi, kappa0, h):
    return c * (1.0 - phi ** h) / (1.0 - phi) + phi ** h * kappa0


def le_oracle(mu):
    """Direct survival-weighted sum, one term per age."""
    total, survival = 0.0, 1.0
    for m in mu:
        fraction = 1.0 if m == 0 else (1.0 - math.exp(-m)) / m
        total += survival * fraction
        survival *= math.exp(-m)
    return total


class TestScenarioSpec:
    def test_horizon_must_exceed_jump_off(self):
        with pytest.raises(ValidationError, match="exceed"):
            make_spec(horizon=2020)

    def test_needs_a_path(self):
        with pytest.raises(ValidationError, match="at least one"):
            make_spec(n_paths=0)

    def test_jump_off_arity(self):
        with pytest.raises(ValidationError, match="jump_off"):
            make_spec(jump_off=(1.0, 2.0))

    def test_years_cover_jump_off_through_horizon(self):
        spec = make_spec(horizon=2023)
        np.testing.assert_array_equal(spec.years, [2020, 2021, 2022, 2023])


class TestSimulation:
    def test_zero_covariance_is_deterministic_drift(self):
        fit = make_fit(C=np.zeros((4, 4)))
        paths = simulate_period_effects(fit, make_spec(n_paths=3))
        K0_m, kap0_m, K0_f, kap0_f = JUMP_OFF
        for h in range(11):
            for i in range(3):
                assert paths.K["M"][i, h] == pytest.approx(
                    K0_m + h * fit.drift("M"), rel=1e-12)
                assert paths.K["F"][i, h] == pytest.approx(
                    K0_f + h * fit.drift("F"), rel=1e-12)
                assert paths.kappa["M"][i, h] == pytest.approx(
                    ar_mean(fit.ar_intercept("M"), fit.ar_coefficient("M"),
                            kap0_m, h), rel=1e-12)
                assert paths.kappa["F"][i, h] == pytest.approx(
                    ar_mean(fit.ar_intercept("F"), fit.ar_coefficient("F"),
                            kap0_f, h), rel=1e-12)

    def test_monte_carlo_moments_match_closed_forms(self):
        fit = make_fit()
        n = 20_000
        paths = simulate_period_effects(fit, make_spec(n_paths=n))
        for h in (1, 5, 10):
            mean_K = paths.K["M"][:, h].mean()
            target_K = JUMP_OFF[0] + h * fit.drift("M")
            se_K = math.sqrt(h * COV[0, 0] / n)
            assert abs(mean_K - target_K) < 4 * se_K

            phi = fit.ar_coefficient("F")
            mean_kap = paths.kappa["F"][:, h].mean()
            target_kap = ar_mean(fit.ar_intercept("F"), phi, JUMP_OFF[3], h)
            var_kap = COV[3, 3] * (1.0 - phi ** (2 * h)) / (1.0 - phi ** 2)
            assert abs(mean_kap - target_kap) < 4 * math.sqrt(var_kap / n)

    def test_seeded_reruns_are_bit_identical(self):
        fit = make_fit()
        first = simulate_period_effects(fit, make_spec(seed=7, n_paths=6))
        second = simulate_period_effects(fit, make_spec(seed=7, n_paths=6))
        for g in ("M", "F"):
            assert np.array_equal(first.K[g], second.K[g])
            assert np.array_equal(first.kappa[g], second.kappa[g])

    def test_paths_do_not_depend_on_path_count(self):
        fit = make_fit()
        small = simulate_period_effects(fit, make_spec(seed=7, n_paths=3))
        large = simulate_period_effects(fit, make_spec(seed=7, n_paths=8))
        for g in ("M", "F"):
            assert np.array_equal(large.K[g][:3], small.K[g])
            assert np.array_equal(large.kappa[g][:3], small.kappa[g])

    def test_every_path_starts_at_the_jump_off(self):
        paths = simulate_period_effects(make_fit(), make_spec(n_paths=5))
        assert np.all(paths.K["M"][:, 0] == JUMP_OFF[0])
        assert np.all(paths.kappa["M"][:, 0] == JUMP_OFF[1])
        assert np.all(paths.K["F"][:, 0] == JUMP_OFF[2])
        assert np.all(paths.kappa["F"][:, 0] == JUMP_OFF[3])

    def test_central_path_is_the_zero_noise_recursion(self):
        fit = make_fit()
        central = central_period_effects(fit, make_spec(n_paths=500))
        assert central.central
        assert central.n_paths == 1
        drift_only = simulate_period_effects(
            make_fit(C=np.zeros((4, 4))), make_spec(n_paths=1))
        for g in ("M", "F"):
            np.testing.assert_allclose(central.K[g], drift_only.K[g],
                                       rtol=0, atol=1e-12)
            np.testing.assert_allclose(central.kappa[g], drift_only.kappa[g],
                                       rtol=0, atol=1e-12)

    def test_rejects_asymmetric_covariance(self):
        bad = np.eye(4)
        bad[0, 1] = 0.5
        with pytest.raises(ValidationError, match="symmetric"):
            simulate_period_effects(make_fit(C=bad), make_spec())

    def test_rejects_indefinite_covariance(self):
        bad = np.diag([1.0, 1.0, 1.0, -0.5])
        with pytest.raises(ValidationError, match="semidefinite"):
            simulate_period_effects(make_fit(C=bad), make_spec())

    def test_paths_are_immutable(self):
        paths = simulate_period_effects(make_fit(), make_spec())
        with pytest.raises(ValueError):
            paths.K["M"][0, 0] = 99.0

    def test_year_index_bounds(self):
        paths = simulate_period_effects(make_fit(), make_spec(horizon=2025))
        assert paths.year_index(2020) == 0
        assert paths.year_index(2025) == 5
        with pytest.raises(ValidationError, match="outside"):
            paths.year_index(2026)


def tiny_params(A):
    ages = AgeRange(60, 61)
    years = YearRange(2018, 2020)
    return LiLeeParams(
        ages=ages, years=years,
        A=np.asarray(A, dtype=float), B=np.array([0.6, 0.8]),
        K=np.array([0.4, -0.1, -0.3]),
        alpha=np.array([0.10, -0.10]), beta=np.array([0.8, -0.6]),
        kappa=np.array([-0.2, 0.1, 0.1]),
    )


def one_path(K_m, kap_m):
    years = np.arange(2020, 2022)
    full = {
        "M": np.array([[K_m, K_m]]),
        "F": np.array([[0.0, 0.0]]),
    }
    kap = {
        "M": np.array([[kap_m, kap_m]]),
        "F": np.array([[0.0, 0.0]]),
    }
    return SimulationPaths(years=years, K=full, kappa=kap)


class TestMortalityLink:
    def test_force_combines_level_trend_and_deviation(self):
        params = tiny_params([-4.0, -3.0])
        mu = force_paths(params, one_path(K_m=0.5, kap_m=-0.25), "M", 2020)
        np.testing.assert_allclose(mu[0], [
            math.exp(-4.0 + 0.10 + 0.6 * 0.5 + 0.8 * -0.25),
            math.exp(-3.0 - 0.10 + 0.8 * 0.5 + -0.6 * -0.25),
        ], rtol=1e-15)

    def test_vanishing_force_gives_zero_probability(self):
        params = tiny_params([-np.inf, -3.0])
        q = paths_to_mortality(params, one_path(0.0, 0.0), "M", 2020)
        assert q[0, 0] == 0.0

    def test_log_two_force_gives_one_half(self):
        params = tiny_params([math.log(math.log(2.0)) - 0.10, -3.0])
        q = paths_to_mortality(params, one_path(0.0, 0.0), "M", 2020)
        assert q[0, 0] == pytest.approx(0.5, rel=1e-15)

    def test_probabilities_stay_in_unit_interval(self):
        params = tiny_params([-1.0, 2.0])
        q = paths_to_mortality(params, one_path(1.0, 1.0), "M", 2020)
        assert np.all((q > 0) & (q < 1))

    def test_probability_increases_with_force(self):
        lower = tiny_params([-4.0, -3.0])
        higher = tiny_params([-3.5, -2.5])
        path = one_path(0.3, -0.2)
        q_lo = paths_to_mortality(lower, path, "M", 2020)
        q_hi = paths_to_mortality(higher, path, "M", 2020)
        assert np.all(q_hi > q_lo)

    def test_all_years_stack_matches_per_year_slices(self):
        params = tiny_params([-4.0, -3.0])
        paths = simulate_period_effects(make_fit(), make_spec(horizon=2024))
        stacked = paths_to_mortality(params, paths, "F")
        for j, year in enumerate(paths.years):
            np.testing.assert_array_equal(
                stacked[:, j], paths_to_mortality(params, paths, "F", int(year)))


def logistic_mu(ages, level=0.1, slope=0.1):
    z = level * np.exp(slope * (np.asarray(ages, dtype=float) - 80.0))
    return z / (1.0 + z)


class TestKannistoClosure:
    def test_recovers_exact_logistic(self):
        ages = np.arange(0, 91)
        mu = np.full(91, 0.01)
        mu[80:] = logistic_mu(ages[80:])
        closed = kannisto_close(-np.expm1(-mu))
        mu_ext = -np.log1p(-closed[91:])
        np.testing.assert_allclose(mu_ext, logistic_mu(np.arange(91, 121)),
                                   rtol=0, atol=1e-8)

    def test_input_ages_pass_through_unchanged(self):
        q = np.linspace(0.001, 0.4, 91)
        closed = kannisto_close(q)
        assert closed.shape == (121,)
        np.testing.assert_array_equal(closed[:91], q)

    def test_extension_force_stays_below_one(self):
        q = -np.expm1(-logistic_mu(np.arange(0, 91), level=0.4, slope=0.2))
        closed = kannisto_close(q)
        assert np.all(-np.log1p(-closed) < 1.0)

    def test_constant_tail_warns_and_extends_flat(self):
        q = np.full(91, 0.05)
        with pytest.warns(RuntimeWarning, match="non-increasing"):
            closed = kannisto_close(q)
        np.testing.assert_allclose(closed[91:], 0.05, rtol=1e-12)

    def test_declining_tail_warns_but_still_applies(self):
        q = np.concatenate([np.full(80, 0.02),
                            np.linspace(0.10, 0.05, 11)])
        with pytest.warns(RuntimeWarning, match="non-increasing"):
            closed = kannisto_close(q)
        assert closed.shape == (121,)
        assert np.all(np.diff(closed[90:]) < 0)

    def test_extreme_force_clamped_with_warning(self):
        q = np.linspace(0.01, 0.2, 91)
        q[85] = 1.0 - 1e-13
        with pytest.warns(RuntimeWarning, match="clamped"):
            closed = kannisto_close(q)
        assert np.all(closed < 1.0)

    def test_requires_ages_up_to_90(self):
        with pytest.raises(ValidationError, match="ends at 85"):
            kannisto_close(np.full(86, 0.01))

    def test_rejects_probabilities_outside_unit_interval(self):
        q = np.full(91, 0.01)
        q[0] = 0.0
        with pytest.raises(ValidationError, match=r"\(0, 1\)"):
            kannisto_close(q)

    def test_batched_curves_match_per_curve_closure(self, rng):
        base = -np.expm1(-logistic_mu(np.arange(0, 91), level=0.15))
        batch = base * rng.uniform(0.8, 1.2, size=(3, 2, 1))
        closed = kannisto_close(batch)
        assert closed.shape == (3, 2, 121)
        for i in range(3):
            for j in range(2):
                np.testing.assert_array_equal(closed[i, j],
                                              kannisto_close(batch[i, j]))


class TestLifeExpectancy:
    def test_constant_force_closed_form(self):
        for mu0 in (1e-4, 1e-3, 1e-2, 1e-1, 1.0):
            for age in (0, 65, 100):
                n = MAX_AGE - age + 1
                value = period_life_expectancy(np.full(n, mu0), age)
                assert value == pytest.approx(
                    (1.0 - math.exp(-n * mu0)) / mu0, rel=1e-12)

    def test_zero_force_counts_every_year(self):
        assert period_life_expectancy(np.zeros(56), 65) == 56.0

    def test_enormous_force_drives_expectancy_to_zero(self):
        value = period_life_expectancy(np.full(56, 1e6), 65)
        assert 0.0 < value < 1e-5

    def test_matches_direct_oracle_on_random_curves(self, rng):
        for _ in range(100):
            age = int(rng.integers(0, 100))
            n = MAX_AGE - age + 1
            mu = np.exp(rng.uniform(np.log(1e-4), np.log(0.8), size=n))
            value = float(period_life_expectancy(mu, age))
            assert value == pytest.approx(le_oracle(mu), rel=1e-12)
            assert 0.0 < value <= n

    def test_leading_axes_vectorize(self, rng):
        mu = np.exp(rng.uniform(-6, -1, size=(4, 56)))
        values = period_life_expectancy(mu, 65)
        for i in range(4):
            assert values[i] == pytest.approx(le_oracle(mu[i]), rel=1e-12)

    def test_rejects_truncated_curve(self):
        with pytest.raises(ValidationError, match="56 values"):
            period_life_expectancy(np.full(40, 0.01), 65)

    def test_rejects_negative_force(self):
        mu = np.full(56, 0.01)
        mu[3] = -0.01
        with pytest.raises(ValidationError, match="nonnegative"):
            period_life_expectancy(mu, 65)

    def test_cohort_equals_period_on_constant_surface(self, rng):
        curve = np.exp(rng.uniform(-7, -0.5, size=MAX_AGE + 1))
        surface = np.tile(curve, (56, 1))
        cohort = cohort_life_expectancy(surface, 65)
        period = period_life_expectancy(curve[65:], 65)
        assert cohort == pytest.approx(period, rel=1e-14)

    def test_cohort_follows_the_diagonal(self, rng):
        surface = np.exp(rng.uniform(-7, -0.5, size=(56, MAX_AGE + 1)))
        diagonal = np.array([surface[k, 65 + k] for k in range(56)])
        value = cohort_life_expectancy(surface, 65)
        assert value == pytest.approx(le_oracle(diagonal), rel=1e-12)

    def test_improving_mortality_favors_the_cohort(self):
        base = 1e-3 * np.exp(0.08 * np.arange(MAX_AGE + 1))
        base = np.minimum(base, 0.9)
        years = np.arange(56)
        surface = base[None, :] * np.exp(-0.02 * years)[:, None]
        cohort = cohort_life_expectancy(surface, 65)
        period = period_life_expectancy(surface[0, 65:], 65)
        assert cohort >= period

    def test_short_horizon_demands_longer_simulation(self):
        surface = np.full((30, MAX_AGE + 1), 0.01)
        with pytest.raises(ValidationError, match="extend the simulation"):
            cohort_life_expectancy(surface, 65)

    def test_surface_must_reach_top_age(self):
        with pytest.raises(ValidationError, match="0..120"):
            cohort_life_expectancy(np.full((56, 91), 0.01), 65)


class TestQuantileSummary:
    def test_identical_paths_collapse(self):
        samples = np.full((50, 3), 2.5)
        summary = quantile_summary(samples)
        for probe in (0.005, 0.5, 0.995):
            np.testing.assert_array_equal(summary[probe], [2.5, 2.5, 2.5])

    def test_median_of_standard_normal(self, rng):
        summary = quantile_summary(rng.standard_normal(10_000))
        assert abs(summary[0.5]) < 0.05

    def test_quantiles_monotone_in_probe(self, rng):
        summary = quantile_summary(rng.standard_normal((500, 4)))
        assert np.all(summary[0.005] <= summary[0.5])
        assert np.all(summary[0.5] <= summary[0.995])

    def test_best_estimate_reported_alongside_median(self, rng):
        samples = rng.standard_normal((100, 2))
        summary = quantile_summary(samples, best_estimate=[0.1, 0.2])
        np.testing.assert_array_equal(summary["best"], [0.1, 0.2])
        assert 0.5 in summary

    def test_rejects_probe_outside_unit_interval(self, rng):
        with pytest.raises(ValidationError, match="probes"):
            quantile_summary(rng.standard_normal(10), probes=(0.5, 1.5))
