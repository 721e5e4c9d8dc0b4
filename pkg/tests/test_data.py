"""Data model, weekly ingestion and annualization rules."""
import numpy as np
import pytest

from conftest import flat_surface, weekly_eurow, weekly_stmf
from mortkit.data import (AgeBucket, AgeRange, EUROW_BUCKETS, GENDERS,
                          MortalitySurface, MultiPopulationDataset,
                          STMF_BUCKETS, SurfaceFragment, YearRange,
                          aggregate_uk, annualize_weekly_deaths,
                          annualize_weekly_exposure, build_surface,
                          check_eurostat_stmf_consistency,
                          load_individual_age_csv, load_weekly_csv,
                          write_individual_age_csv, write_weekly_csv)
from mortkit.errors import ParseError, ValidationError


class TestBuckets:
    def test_label_roundtrip(self):
        for label in ("0-14", "15-64", "85+", "5-9", "90+"):
            assert AgeBucket.parse(label).label == label

    def test_parse_rejects_garbage(self):
        with pytest.raises((ParseError, ValidationError, ValueError)):
            AgeBucket.parse("85")

    def test_bucket_sets(self):
        assert len(STMF_BUCKETS) == 5
        assert len(EUROW_BUCKETS) == 19
        assert STMF_BUCKETS[-1].is_open and STMF_BUCKETS[-1].lower == 85
        assert EUROW_BUCKETS[-1].is_open and EUROW_BUCKETS[-1].lower == 90
        covered = sorted(
            a for b in EUROW_BUCKETS if not b.is_open for a in b.ages()
        )
        assert covered == list(range(0, 90))

    def test_open_bucket_has_no_age_list(self):
        with pytest.raises(ValidationError):
            AgeBucket(90, None).ages()


class TestAnnualization:
    def test_deaths_52_week_sum(self):
        series = weekly_stmf(deaths_per_week={b: 10.0 for b in STMF_BUCKETS})
        annual = annualize_weekly_deaths(series)
        for bucket in STMF_BUCKETS:
            assert annual.deaths[bucket] == pytest.approx(520.0, rel=1e-12)

    def test_deaths_53_week_rescale(self):
        # 53 deaths/week over 53 weeks: 53*53 * 52/53 = 2756 exactly
        series = weekly_stmf(weeks=53,
                             deaths_per_week={b: 53.0 for b in STMF_BUCKETS})
        annual = annualize_weekly_deaths(series)
        for bucket in STMF_BUCKETS:
            assert annual.deaths[bucket] == pytest.approx(2756.0, rel=1e-9)

    def test_week_count_must_be_52_or_53(self):
        with pytest.raises(ValidationError):
            weekly_stmf(weeks=50)

    def test_missing_week_refused_with_location(self):
        series = weekly_stmf()
        series.deaths[STMF_BUCKETS[0]].flags.writeable = True
        series.deaths[STMF_BUCKETS[0]][6] = np.nan
        with pytest.raises(ValidationError, match=r"0-14.*week\(s\) 7"):
            annualize_weekly_deaths(series)

    def test_exposure_52_weeks_constant(self):
        series = weekly_stmf(
            weekly_exposure={b: 19013.71 for b in STMF_BUCKETS})
        annual = annualize_weekly_exposure(series)
        for bucket in STMF_BUCKETS:
            assert annual.exposures[bucket] == pytest.approx(988712.92, rel=1e-9)

    def test_exposure_53_weeks_still_scaled_by_52(self):
        # Annual exposure ignores the extra ISO week: 52 * weekly value.
        series = weekly_stmf(weeks=53,
                             weekly_exposure={b: 19013.71 for b in STMF_BUCKETS})
        annual = annualize_weekly_exposure(series)
        for bucket in STMF_BUCKETS:
            assert annual.exposures[bucket] == pytest.approx(988712.92, rel=1e-9)

    def test_exposure_wobble_refused(self):
        series = weekly_stmf()
        series.exposures[STMF_BUCKETS[1]].flags.writeable = True
        series.exposures[STMF_BUCKETS[1]][10] *= 1.0 + 1e-4
        with pytest.raises(ValidationError, match="not constant"):
            annualize_weekly_exposure(series)

    def test_exposure_requires_exposures(self):
        series = weekly_eurow()
        with pytest.raises(ValidationError, match="no exposures"):
            annualize_weekly_exposure(series)


class TestWeeklyCsv:
    def test_stmf_roundtrip_with_exposure_column(self, tmp_path):
        series = weekly_stmf(deaths_per_week={b: 7.25 for b in STMF_BUCKETS})
        path = tmp_path / "stmf.csv"
        write_weekly_csv(path, series, "STMF")
        loaded = load_weekly_csv(path, "STMF")
        assert loaded.exposure_origin == "column"
        assert loaded.week_count == 52
        for bucket in STMF_BUCKETS:
            np.testing.assert_allclose(loaded.deaths[bucket],
                                       series.deaths[bucket], rtol=0)
            np.testing.assert_allclose(loaded.exposures[bucket],
                                       series.exposures[bucket], rtol=0)

    def test_stmf_derived_exposure(self, tmp_path):
        series = weekly_stmf(with_exposures=False)
        path = tmp_path / "stmf.csv"
        write_weekly_csv(path, series, "STMF")
        loaded = load_weekly_csv(path, "STMF")
        assert loaded.exposure_origin == "derived"
        for bucket in STMF_BUCKETS:
            # d / (d/E) recovers E exactly where the rate is positive
            np.testing.assert_allclose(loaded.exposures[bucket], 5000.0,
                                       rtol=1e-12)

    def test_eurow_roundtrip(self, tmp_path):
        series = weekly_eurow()
        path = tmp_path / "eurow.csv"
        write_weekly_csv(path, series, "EUROW")
        loaded = load_weekly_csv(path, "EUROW")
        assert loaded.exposures is None
        assert set(loaded.deaths) == set(EUROW_BUCKETS)

    def test_multiple_series_need_filters(self, tmp_path):
        path = tmp_path / "two.csv"
        write_weekly_csv(path, weekly_stmf(gender="M"), "STMF")
        write_weekly_csv(path, weekly_stmf(gender="F"), "STMF", append=True)
        with pytest.raises(ParseError, match="multiple series"):
            load_weekly_csv(path, "STMF")
        loaded = load_weekly_csv(path, "STMF", gender="F")
        assert loaded.gender == "F"

    def test_duplicate_cell_refused(self, tmp_path):
        path = tmp_path / "dup.csv"
        write_weekly_csv(path, weekly_stmf(), "STMF")
        with path.open("a") as handle:
            handle.write("BEL,2020,1,M,0-14,10,0.002,5000\n")
        with pytest.raises(ParseError, match="duplicate row"):
            load_weekly_csv(path, "STMF")

    def test_foreign_bucket_refused(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_weekly_csv(path, weekly_stmf(), "STMF")
        with path.open("a") as handle:
            handle.write("BEL,2020,1,M,5-9,10,0.002,5000\n")
        with pytest.raises(ParseError, match="not valid for STMF"):
            load_weekly_csv(path, "STMF")


class TestUkAggregation:
    def test_cellwise_sum(self):
        a = weekly_stmf(country="GBRTENW",
                        deaths_per_week={b: 3.0 for b in STMF_BUCKETS},
                        weekly_exposure={b: 100.0 for b in STMF_BUCKETS})
        b = weekly_stmf(country="GBR_SCO",
                        deaths_per_week={b: 4.0 for b in STMF_BUCKETS},
                        weekly_exposure={b: 200.0 for b in STMF_BUCKETS})
        uk = aggregate_uk([a, b])
        assert uk.country == "UNK"
        for bucket in STMF_BUCKETS:
            np.testing.assert_allclose(uk.deaths[bucket], 7.0)
            np.testing.assert_allclose(uk.exposures[bucket], 300.0)
            np.testing.assert_allclose(uk.death_rates[bucket], 7.0 / 300.0)

    def test_needs_two_constituents(self):
        with pytest.raises(ValidationError, match="at least two"):
            aggregate_uk([weekly_stmf()])

    def test_week_count_mismatch(self):
        with pytest.raises(ValidationError, match="disagree"):
            aggregate_uk([weekly_stmf(weeks=52), weekly_stmf(weeks=53)])


class TestConsistency:
    @staticmethod
    def _pair(perturb=None, drop=None, stmf_weeks=52):
        euro_deaths = {b: 2.0 for b in EUROW_BUCKETS}
        if drop is not None:
            euro_deaths.pop(drop)
        euro = weekly_eurow(deaths_per_week=euro_deaths)
        cover_count = {  # EUROW buckets per STMF bucket
            AgeBucket(0, 14): 3, AgeBucket(15, 64): 10, AgeBucket(65, 74): 2,
            AgeBucket(75, 84): 2, AgeBucket(85, None): 2,
        }
        stmf = weekly_stmf(
            weeks=stmf_weeks,
            deaths_per_week={b: 2.0 * n for b, n in cover_count.items()})
        if perturb is not None:
            bucket, week, delta = perturb
            stmf.deaths[bucket].flags.writeable = True
            stmf.deaths[bucket][week - 1] += delta
        return euro, stmf

    def test_consistent(self):
        euro, stmf = self._pair()
        report = check_eurostat_stmf_consistency(euro, stmf)
        assert report.comparable and report.consistent
        assert report.mismatches == ()

    def test_small_rounding_tolerated(self):
        euro, stmf = self._pair(perturb=(AgeBucket(15, 64), 3, 0.9))
        report = check_eurostat_stmf_consistency(euro, stmf)
        assert report.consistent

    def test_mismatch_detected_with_location(self):
        euro, stmf = self._pair(perturb=(AgeBucket(85, None), 7, 2.5))
        report = check_eurostat_stmf_consistency(euro, stmf)
        assert report.comparable and not report.consistent
        labels = {(m[0], m[1]) for m in report.mismatches}
        assert ("85+", 7) in labels

    def test_missing_refinement_not_comparable(self):
        euro, stmf = self._pair(drop=AgeBucket(5, 9))
        report = check_eurostat_stmf_consistency(euro, stmf)
        assert not report.comparable and not report.consistent
        assert "0-14" in report.detail

    def test_week_count_mismatch_not_comparable(self):
        euro, stmf = self._pair(stmf_weeks=53)
        report = check_eurostat_stmf_consistency(euro, stmf)
        assert not report.comparable
        assert "week counts" in report.detail


class TestIndividualCsv:
    def test_roundtrip_with_provenance(self, tmp_path):
        records = [
            ("AAA", 2001, "M", 0, 12.5, 1000.0, "HMD"),
            ("AAA", 2001, "M", 1, 3.25, 990.5, "VIRTUAL"),
            ("AAA", 2001, "F", 0, 9.0, None, "EUROW"),
        ]
        path = tmp_path / "ind.csv"
        write_individual_age_csv(path, records)
        frag = load_individual_age_csv(path, "HMD")
        assert frag.cells[("AAA", "M", 0, 2001)]["deaths"] == (12.5, "HMD")
        assert frag.cells[("AAA", "M", 1, 2001)]["exposure"] == (990.5, "VIRTUAL")
        assert "exposure" not in frag.cells[("AAA", "F", 0, 2001)]

    def test_default_provenance_is_source_shape(self, tmp_path):
        path = tmp_path / "ind.csv"
        path.write_text("country,year,gender,age,deaths,exposure\n"
                        "BEL,2005,F,40,11,8000\n")
        frag = load_individual_age_csv(path, "STATBEL")
        assert frag.cells[("BEL", "F", 40, 2005)]["deaths"] == (11.0, "STATBEL")

    def test_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("country,year,gender,age,deaths,exposure\n"
                        "BEL,2005,M,40,11,8000\n"
                        "BEL,2005,X,41,11,8000\n")
        with pytest.raises(ParseError, match=r"bad\.csv:3"):
            load_individual_age_csv(path, "HMD")

    def test_age_above_110_refused(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("country,year,gender,age,deaths,exposure\n"
                        "BEL,2005,M,111,1,10\n")
        with pytest.raises(ParseError, match="outside 0..110"):
            load_individual_age_csv(path, "HMD")

    def test_negative_deaths_refused(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("country,year,gender,age,deaths,exposure\n"
                        "BEL,2005,M,40,-1,10\n")
        with pytest.raises(ValidationError, match="negative deaths"):
            load_individual_age_csv(path, "HMD")

    def test_duplicate_cell_refused(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("country,year,gender,age,deaths,exposure\n"
                        "BEL,2005,M,40,1,10\n"
                        "BEL,2005,M,40,2,10\n")
        with pytest.raises(ParseError, match="duplicate deaths"):
            load_individual_age_csv(path, "HMD")


class TestSurfaces:
    def test_rate_sanity_bound(self):
        ages, years = AgeRange(0, 1), YearRange(2000, 2000)
        prov = np.full((2, 1), "HMD", dtype="<U8")
        with pytest.raises(ValidationError, match="sanity bound"):
            MortalitySurface("AAA", "M", ages, years,
                            np.array([[6.0], [1.0]]), np.ones((2, 1)),
                            prov, prov.copy())

    def test_build_surface_names_missing_cell(self):
        frag = SurfaceFragment()
        ages, years = AgeRange(0, 1), YearRange(2000, 2001)
        for age in (0, 1):
            for year in (2000, 2001):
                frag.set_value("AAA", "M", age, year, "exposure", 100.0, "HMD")
                if (age, year) != (1, 2001):
                    frag.set_value("AAA", "M", age, year, "deaths", 1.0, "HMD")
        with pytest.raises(ValidationError, match="age 1, year 2001"):
            build_surface(frag, "AAA", "M", ages, years)

    def test_virtual_cell_count(self):
        surface = flat_surface()
        prov = surface.deaths_provenance.copy()
        prov[:, -1] = "VIRTUAL"
        patched = MortalitySurface(
            surface.country, surface.gender, surface.ages, surface.years,
            surface.deaths, surface.exposures, prov,
            surface.exposures_provenance)
        assert patched.virtual_cell_count() == {
            "deaths": len(surface.ages), "exposures": 0}

    def test_death_rates(self):
        surface = flat_surface(rate=0.02)
        np.testing.assert_allclose(surface.death_rates, 0.02, rtol=1e-15)

    def test_fragment_duplicate_field_refused(self):
        frag = SurfaceFragment()
        frag.set_value("AAA", "M", 0, 2000, "deaths", 1.0, "HMD")
        with pytest.raises(ValidationError, match="duplicate"):
            frag.set_value("AAA", "M", 0, 2000, "deaths", 2.0, "HMD")

    def test_dataset_aggregate_sums_pool(self):
        surfaces = {}
        for country, rate in (("AAA", 0.01), ("BBB", 0.03)):
            for gender in GENDERS:
                surfaces[(country, gender)] = flat_surface(
                    country=country, gender=gender, rate=rate)
        dataset = MultiPopulationDataset(surfaces=surfaces,
                                         common_pool=("AAA", "BBB"))
        d, e = dataset.aggregate("M")
        np.testing.assert_allclose(e, 2000.0)
        np.testing.assert_allclose(d, 0.01 * 1000 + 0.03 * 1000)

    def test_dataset_requires_pool_surfaces(self):
        surfaces = {("AAA", g): flat_surface(gender=g) for g in GENDERS}
        with pytest.raises(ValidationError, match="BBB"):
            MultiPopulationDataset(surfaces=surfaces,
                                   common_pool=("AAA", "BBB"))
