import csv
import math
import statistics
from pathlib import Path

import numpy as np
import pytest

from bisample.budget import PrivacyBudget
from bisample.mechanisms import NULL
from bisample.population import (
    BehaviorMode,
    ConstantColumn,
    EmptyColumn,
    NonNumericValue,
    Population,
    UserRecord,
    apply_behavior,
    force_missing_rate,
    gen_exp,
    gen_gauss,
    gen_preferences,
    gen_uniform,
    ground_truth,
    load_numeric_column,
    load_population,
    prepare_values,
    save_population,
)
from bisample.rng import make_rng

DATA = Path(__file__).parent / "data"
EPS1 = PrivacyBudget(1.0)

# Normalized mean of the checked-in 200-row fixture's age column, frozen
# from direct arithmetic on the raw file.
ADULT_FIXTURE_AGE_MEAN = -0.00893939393939394


class TestGenerators:
    def test_gauss_mean_matches_reference(self):
        values = gen_gauss(100_000, seed=0)
        assert abs(values.mean() - 0.499) <= 0.002
        assert np.abs(values).max() <= 1.0

    def test_gauss_degenerate_sigma(self):
        values = gen_gauss(100, mu=2.0, sigma=1e-300, seed=1)
        assert (values == 1.0).all()  # clamp(mu)

    def test_exp_mean_matches_reference(self):
        values = gen_exp(100_000, seed=0)
        assert abs(values.mean() - (-0.831)) <= 0.02

    def test_exp_min_max_hit_endpoints_exactly(self):
        values = gen_exp(10_000, seed=2)
        assert values.min() == -1.0 and values.max() == 1.0

    def test_uniform_moments(self):
        values = gen_uniform(100_000, seed=0)
        assert abs(values.mean() - (-0.001)) <= 0.01
        assert values.var() == pytest.approx(1.0 / 3.0, abs=0.01)

    @pytest.mark.parametrize("gen", [gen_gauss, gen_exp, gen_uniform])
    def test_deterministic_under_seed(self, gen):
        np.testing.assert_array_equal(gen(1000, seed=42), gen(1000, seed=42))

    @pytest.mark.parametrize("gen", [gen_gauss, gen_exp, gen_uniform])
    def test_rejects_empty(self, gen):
        with pytest.raises(ValueError):
            gen(0, seed=0)


class TestLoadNumericColumn:
    def test_fixture_normalized_mean(self):
        values = load_numeric_column(DATA / "adult_sample.csv", "age")
        assert len(values) == 200
        assert values.min() == -1.0 and values.max() == 1.0
        assert values.mean() == pytest.approx(ADULT_FIXTURE_AGE_MEAN, abs=1e-12)

    def test_fixture_matches_direct_arithmetic(self):
        with (DATA / "adult_sample.csv").open(newline="") as fh:
            ages = [float(row["age"]) for row in csv.DictReader(fh)]
        lo, hi = min(ages), max(ages)
        expected = statistics.fmean(2.0 * (a - lo) / (hi - lo) - 1.0 for a in ages)
        values = load_numeric_column(DATA / "adult_sample.csv", "age")
        assert values.mean() == pytest.approx(expected, abs=1e-12)

    def test_two_row_column_maps_to_endpoints(self, tmp_path):
        p = tmp_path / "two.csv"
        p.write_text("x\n10\n30\n")
        np.testing.assert_array_equal(load_numeric_column(p, "x"), [-1.0, 1.0])

    def test_constant_column(self, tmp_path):
        p = tmp_path / "const.csv"
        p.write_text("x\n5\n5\n5\n")
        with pytest.raises(ConstantColumn):
            load_numeric_column(p, "x")

    def test_non_numeric_value_carries_row_index(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x\n1\n2\noops\n")
        with pytest.raises(NonNumericValue) as err:
            load_numeric_column(p, "x")
        assert err.value.row == 2

    def test_missing_column(self, tmp_path):
        p = tmp_path / "cols.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(EmptyColumn):
            load_numeric_column(p, "x")

    def test_empty_column(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("x\n")
        with pytest.raises(EmptyColumn):
            load_numeric_column(p, "x")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_numeric_column(tmp_path / "nope.csv", "x")

    def test_real_adult_dataset_if_present(self):
        # Download adult.data (UCI) and convert per README to enable this.
        path = DATA / "adult.csv"
        if not path.exists():
            pytest.skip("real ADULT dataset not downloaded")
        values = load_numeric_column(path, "age")
        assert len(values) == 32561
        assert abs(values.mean() - (-0.409)) <= 0.01


class TestPreferences:
    def test_median_split_at_mu(self):
        prefs = gen_preferences(100_000, seed=0)
        assert (prefs >= 5.0).mean() == pytest.approx(0.5, abs=0.01)

    def test_truth_rate_matches_gaussian_tail(self):
        prefs = gen_preferences(100_000, seed=1)
        dist = statistics.NormalDist(5.0, 1.5)
        assert (prefs >= 5.0).mean() == pytest.approx(1 - dist.cdf(5.0), abs=0.01)
        assert (prefs >= 8.0).mean() == pytest.approx(1 - dist.cdf(8.0), abs=0.005)

    def test_truth_rate_curve_is_monotone_non_increasing(self):
        prefs = gen_preferences(50_000, seed=2)
        rates = [(prefs >= e).mean() for e in np.linspace(0.1, 10.0, 25)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_tiny_sigma_gives_step_function(self):
        prefs = gen_preferences(1000, mu=5.0, sigma=1e-12, seed=3)
        assert (prefs >= 4.99).all() and (prefs <= 5.01).all()

    def test_floor_keeps_preferences_positive(self):
        prefs = gen_preferences(10_000, mu=-5.0, sigma=0.1, seed=4)
        assert (prefs > 0).all()


class TestApplyBehavior:
    def test_cooperative_branch_for_every_mode(self):
        for mode in BehaviorMode:
            out = apply_behavior(0.3, 6.0, EPS1, mode, make_rng(0))
            assert out == 0.3

    def test_top_substitutes_one(self):
        out = apply_behavior(0.3, 0.5, EPS1, BehaviorMode.TOP, make_rng(0))
        assert out == 1.0

    def test_null_mode_withholds(self):
        out = apply_behavior(0.3, 0.5, EPS1, BehaviorMode.NULL_VALUE, make_rng(0))
        assert math.isnan(out)

    def test_rnd_substitutions_average_to_zero(self):
        values = np.full(100_000, 0.3)
        prefs = np.full(100_000, 0.5)
        out = apply_behavior(values, prefs, EPS1, BehaviorMode.RND, make_rng(5))
        assert abs(out.mean()) < 0.01

    def test_null_mode_equals_prepare_values(self):
        rng = make_rng(6)
        values = rng.uniform(-1, 1, 5000)
        prefs = gen_preferences(5000, seed=7)
        via_behavior = apply_behavior(values, prefs, EPS1, BehaviorMode.NULL_VALUE, make_rng(8))
        via_gate = prepare_values(values, prefs, EPS1)
        np.testing.assert_array_equal(via_behavior, via_gate)

    def test_parse(self):
        assert BehaviorMode.parse("TOP") is BehaviorMode.TOP
        with pytest.raises(ValueError):
            BehaviorMode.parse("nope")


class TestForceMissingRate:
    @pytest.mark.parametrize("rate", [0.0, 0.3, 1.0])
    def test_exact_rate(self, rate):
        pop = Population(gen_uniform(10_000, seed=9), np.full(10_000, 2.0))
        forced = force_missing_rate(pop, rate, EPS1, seed=10)
        truth = ground_truth(forced, EPS1)
        assert truth.missing_rate == math.floor(rate * 10_000) / 10_000

    def test_values_unchanged(self):
        pop = Population(gen_uniform(1000, seed=11), np.full(1000, 2.0))
        forced = force_missing_rate(pop, 0.5, EPS1, seed=12)
        np.testing.assert_array_equal(forced.values, pop.values)

    def test_rejects_bad_rate(self):
        pop = Population([0.0], [1.0])
        with pytest.raises(ValueError):
            force_missing_rate(pop, 1.5, EPS1, seed=0)


class TestGroundTruth:
    def test_all_cooperative(self):
        pop = Population([0.2, 0.4], [9.0, 9.0])
        truth = ground_truth(pop, EPS1)
        assert truth.missing_rate == 0.0
        assert truth.responder_mean == truth.overall_mean == pytest.approx(0.3)

    def test_mixed_population(self):
        pop = Population([0.5, -0.5], [2.0, 0.1])
        truth = ground_truth(pop, EPS1)
        assert truth.missing_rate == 0.5
        assert truth.responder_mean == 0.5
        assert truth.overall_mean == 0.0

    def test_boundary_preference_cooperates(self):
        pop = Population([0.5], [1.0])
        assert ground_truth(pop, EPS1).missing_rate == 0.0

    def test_all_null_has_undefined_responder_mean(self):
        pop = Population([0.5, 0.1], [0.2, 0.2])
        truth = ground_truth(pop, EPS1)
        assert truth.missing_rate == 1.0
        assert truth.responder_mean is None


class TestPopulationContainer:
    def test_validation(self):
        with pytest.raises(ValueError):
            Population([], [])
        with pytest.raises(ValueError):
            Population([2.0], [1.0])
        with pytest.raises(ValueError):
            Population([0.5], [0.0])
        with pytest.raises(ValueError):
            Population([0.5, 0.5], [1.0])

    def test_user_records(self):
        pop = Population([0.1, 0.2], [1.0, 2.0])
        assert len(pop) == 2
        assert pop[1] == UserRecord(0.2, 2.0)
        assert [u.value for u in pop] == [0.1, 0.2]

    def test_user_record_validation(self):
        with pytest.raises(ValueError):
            UserRecord(1.5, 1.0)
        with pytest.raises(ValueError):
            UserRecord(0.5, 0.0)

    def test_save_load_round_trip(self, tmp_path):
        pop = Population(gen_uniform(500, seed=13), gen_preferences(500, seed=14))
        path = tmp_path / "pop.csv"
        save_population(pop, path)
        loaded = load_population(path)
        np.testing.assert_array_equal(loaded.values, pop.values)
        np.testing.assert_array_equal(loaded.preferences, pop.preferences)

    def test_values_immutable(self):
        pop = Population([0.1], [1.0])
        with pytest.raises(ValueError):
            pop.values[0] = 0.5
