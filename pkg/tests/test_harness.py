import csv
import math
from pathlib import Path

import numpy as np
import pytest

from bisample.harness import (
    ConfigError,
    DatasetSpec,
    ExperimentConfig,
    MetricRow,
    PreferenceSpec,
    SweepSpec,
    TrialResult,
    canonical_mechanism,
    population_for_trial,
    run_experiment,
    run_reproduce,
    run_trial,
    truth_rate_curve,
    write_results,
)
from bisample.population import BehaviorMode

DATA = Path(__file__).parent / "data"


def small_config(**overrides):
    base = dict(
        dataset=DatasetSpec("gauss"),
        mechanisms=("bisample",),
        sweep=SweepSpec("epsilon", (1.0,)),
        n=2000,
        trials=5,
        seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_canonical_mechanism_aliases(self):
        assert canonical_mechanism("BiSampleMD") == "bisample_md"
        assert canonical_mechanism("piecewise") == "pm"
        with pytest.raises(ConfigError):
            canonical_mechanism("laplace")

    def test_forced_input_mechanism_rejects_null_behavior_with_noncooperative_users(self):
        with pytest.raises(ConfigError):
            small_config(
                mechanisms=("harmony",),
                preferences=PreferenceSpec("gaussian"),
                behavior=BehaviorMode.NULL_VALUE,
            )

    def test_forced_input_mechanism_allows_null_behavior_when_cooperative(self):
        small_config(mechanisms=("harmony",))  # no error

    def test_missing_rate_sweep_requires_forced_preferences(self):
        with pytest.raises(ConfigError):
            small_config(
                mechanisms=("bisample_md",),
                sweep=SweepSpec("missing_rate", (0.2,)),
            )

    def test_n_sweep_incompatible_with_file_dataset(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x\n1\n2\n3\n")
        with pytest.raises(ConfigError):
            small_config(
                dataset=DatasetSpec("file", path=str(p), column="x"),
                sweep=SweepSpec("n", (2,)),
            )

    def test_from_dict_round_trip(self):
        raw = {
            "dataset": {"kind": "gauss", "mu": 0.5, "sigma": 0.1},
            "mechanisms": ["BiSampleMD", "PrivKVM"],
            "preferences": {"kind": "forced", "rate": 0.3},
            "sweep": {"kind": "missing_rate", "values": [0.1, 0.2]},
            "epsilon": 1.0,
            "n": 500,
            "trials": 2,
        }
        config = ExperimentConfig.from_dict(raw, seed=9)
        assert config.mechanisms == ("bisample_md", "privkvm")
        assert config.seed == 9

    def test_from_dict_reports_bad_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mechanisms": ["bisample"]})

    def test_sweep_validation(self):
        with pytest.raises(ConfigError):
            SweepSpec("epsilon", ())
        with pytest.raises(ConfigError):
            SweepSpec("zeta", (1.0,))


class TestRunTrial:
    def test_replay_is_byte_identical(self):
        config = small_config()
        a = run_trial(config, "bisample", 3)
        b = run_trial(config, "bisample", 3)
        assert a == b

    def test_precomputed_population_matches_internal_path(self):
        config = small_config()
        pop = population_for_trial(config, 2)
        assert run_trial(config, "bisample", 2, population=pop) == run_trial(config, "bisample", 2)

    def test_null_aware_targets_responder_mean(self):
        config = small_config(
            mechanisms=("bisample_md",),
            preferences=PreferenceSpec("forced", rate=0.4),
            sweep=SweepSpec("missing_rate", (0.4,)),
        )
        result = run_trial(config.at_point(0.4), "bisample_md", 0)
        pop = population_for_trial(config.at_point(0.4), 0)
        from bisample.budget import PrivacyBudget
        from bisample.population import ground_truth

        truth = ground_truth(pop, PrivacyBudget(1.0))
        assert result.m_true == truth.responder_mean
        assert result.mr_true == truth.missing_rate
        assert result.mr_est is not None

    def test_forced_input_mechanism_targets_overall_mean_and_has_no_mr(self):
        config = small_config(
            mechanisms=("harmony",),
            behavior=BehaviorMode.TOP,
            preferences=PreferenceSpec("gaussian"),
        )
        result = run_trial(config, "harmony", 0)
        assert result.mechanism == "Harmony-TOP"
        assert result.mr_est is None

    def test_all_null_trial_becomes_failure_row(self):
        config = small_config(
            mechanisms=("bisample_md",),
            preferences=PreferenceSpec("forced", rate=1.0),
            sweep=SweepSpec("missing_rate", (1.0,)),
        )
        result = run_trial(config.at_point(1.0), "bisample_md", 0)
        assert result.status == "AllNullPopulation"
        assert result.m_est is None
        # The missing-rate estimand survives an all-null population.
        assert result.mr_est == pytest.approx(1.0, abs=0.1)


class TestRunExperiment:
    def test_metrics_match_definitions_exactly(self):
        config = small_config(trials=7)
        metrics, trials = run_experiment(config)
        row = metrics[0]
        errs = [abs(t.m_true - t.m_est) for t in trials]
        assert row.ae_m == pytest.approx(sum(errs) / len(errs), rel=1e-12)
        assert row.var_m == pytest.approx(sum(e * e for e in errs) / len(errs), rel=1e-12)
        assert row.trials == row.trials_ok == 7

    def test_parallel_equals_sequential(self):
        config = small_config(mechanisms=("bisample", "harmony"), trials=6)
        assert run_experiment(config) == run_experiment(config, workers=4)

    def test_failure_rows_surface_in_output(self):
        config = small_config(
            mechanisms=("bisample_md",),
            preferences=PreferenceSpec("forced"),
            sweep=SweepSpec("missing_rate", (0.5, 1.0)),
            trials=3,
        )
        metrics, trials = run_experiment(config)
        failed = [m for m in metrics if m.sweep_key == 1.0][0]
        assert failed.status == "AllNullPopulation"
        assert failed.trials_ok == 0 and failed.ae_m is None
        assert failed.ae_mr is not None  # missing rate is still estimable
        assert all(t.status == "AllNullPopulation" for t in trials if t.sweep_key == 1.0)
        ok = [m for m in metrics if m.sweep_key == 0.5][0]
        assert ok.status == "ok" and ok.ae_mr is not None

    def test_fresh_population_per_trial_unless_fixed(self):
        fresh = run_experiment(small_config(trials=3)).trials
        assert len({t.m_true for t in fresh}) == 3
        fixed = run_experiment(small_config(trials=3, fixed_population=True)).trials
        assert len({t.m_true for t in fixed}) == 1

    def test_epsilon_sweep_error_is_non_monotone_under_preferences(self):
        # Larger budgets scare users away, so error rises again at eps=8.
        config = small_config(
            mechanisms=("bisample_md",),
            preferences=PreferenceSpec("gaussian"),
            sweep=SweepSpec("epsilon", (2.0, 8.0)),
            n=20_000,
            trials=20,
            seed=0,
        )
        by_eps = {m.epsilon: m.ae_m for m in run_experiment(config, workers=4).metrics}
        assert by_eps[8.0] > by_eps[2.0]

    def test_harmony_top_bias_matches_expectation(self):
        # Per-trial substituted mean is r*m_responders + (1-r)*1; the
        # Harmony estimate is unbiased for it.
        config = small_config(
            mechanisms=("harmony",),
            behavior=BehaviorMode.TOP,
            preferences=PreferenceSpec("gaussian"),
            sweep=SweepSpec("epsilon", (8.0,)),
            n=20_000,
            trials=10,
            seed=4,
        )
        from bisample.budget import PrivacyBudget
        from bisample.population import ground_truth

        diffs = []
        for t in range(config.trials):
            pc = config.at_point(8.0)
            result = run_trial(pc, "harmony", t)
            truth = ground_truth(population_for_trial(pc, t), PrivacyBudget(8.0))
            r = 1.0 - truth.missing_rate
            expected = r * truth.responder_mean + (1.0 - r) * 1.0
            diffs.append(result.m_est - expected)
        assert abs(float(np.mean(diffs))) < 0.005

    def test_scaling_n_doubling(self):
        # Quadrupling n should halve the error (inverse square root law);
        # doubling shrinks it by a factor inside [1.2, 1.7].
        config = small_config(
            sweep=SweepSpec("n", (10_000, 20_000)),
            trials=100,
            seed=0,
        )
        by_n = {m.sweep_key: m.ae_m for m in run_experiment(config, workers=4).metrics}
        ratio = by_n[10_000.0] / by_n[20_000.0]
        assert 1.2 <= ratio <= 1.7


class TestWriteResults:
    def test_empty_rows_write_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_results([], path, kind="metrics")
        assert path.read_text() == (
            "mechanism,epsilon,sweep_kind,sweep_key,n,trials,trials_ok,status,"
            "ae_m,var_m,ae_mr,var_mr\n"
        )

    def test_kind_inferred_from_rows(self, tmp_path):
        _, trials = run_experiment(small_config(trials=2))
        path = tmp_path / "trials.csv"
        write_results(trials, path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["trial_index"] == "0"
        assert rows[0]["mr_est"] == ""  # plain mechanism has no mr estimate

    def test_reruns_are_byte_identical_and_seed_changes_only_data(self, tmp_path):
        config = small_config(trials=2)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results(run_experiment(config).metrics, a)
        write_results(run_experiment(config).metrics, b)
        assert a.read_bytes() == b.read_bytes()
        import dataclasses

        other = dataclasses.replace(config, seed=12)
        c = tmp_path / "c.csv"
        write_results(run_experiment(other).metrics, c)
        assert c.read_bytes() != a.read_bytes()
        assert c.read_text().splitlines()[0] == a.read_text().splitlines()[0]

    def test_golden_file(self, tmp_path):
        # Frozen output of the golden config; regenerate deliberately with
        # scripts/make_golden.py if the RNG contract ever changes.
        config = ExperimentConfig(
            dataset=DatasetSpec("gauss"),
            mechanisms=("bisample", "harmony"),
            sweep=SweepSpec("epsilon", (0.5, 1.0)),
            n=400,
            trials=3,
            seed=11,
        )
        path = tmp_path / "metrics.csv"
        write_results(run_experiment(config).metrics, path)
        assert path.read_bytes() == (DATA / "golden_metrics.csv").read_bytes()


class TestTruthRateCurve:
    def test_monotone_and_matches_analytic_tail(self):
        rows = truth_rate_curve([0.5, 1, 2, 4, 6, 8], n=50_000, seed=0)
        rates = [r["truth_rate"] for r in rows]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        for row in rows:
            assert row["truth_rate"] == pytest.approx(row["truth_rate_analytic"], abs=0.01)


class TestReproduce:
    def test_missing_rate_files_and_series(self, tmp_path):
        paths = run_reproduce("missing-rate", tmp_path, seed=0, n=1500, trials=2)
        assert sorted(p.name for p in paths) == [
            "missing_rate_exp_eps0.1.csv",
            "missing_rate_exp_eps1.csv",
            "missing_rate_gauss_eps0.1.csv",
            "missing_rate_gauss_eps1.csv",
        ]
        with paths[0].open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["mechanism"] for r in rows} == {"BiSampleMD", "PrivKVM"}
        assert len(rows) == 18  # 2 mechanisms x 9 rates

    def test_truth_rate_file(self, tmp_path):
        (path,) = run_reproduce("truth-rate", tmp_path, seed=0, n=2000)
        header = path.read_text().splitlines()[0]
        assert header == "epsilon,truth_rate,truth_rate_analytic"

    def test_behavior_files_have_all_series(self, tmp_path):
        paths = run_reproduce("behavior", tmp_path, seed=0, n=800, trials=2)
        assert sorted(p.name for p in paths) == [
            "behavior_exp.csv", "behavior_gauss.csv", "behavior_uniform.csv",
        ]
        with paths[0].open(newline="") as fh:
            series = {r["mechanism"] for r in csv.DictReader(fh)}
        assert series == {
            "Harmony-TOP", "PM-TOP", "BiSampleMD", "PrivKVM", "Harmony-RND", "PM-RND",
        }

    def test_data_size_file(self, tmp_path):
        (path,) = run_reproduce("data-size", tmp_path, seed=0, n=2000, trials=2)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["mechanism"] for r in rows} == {
            "Harmony-TOP", "PM-TOP", "BiSampleMD", "PrivKVM",
        }

    def test_unknown_name(self, tmp_path):
        with pytest.raises(ConfigError):
            run_reproduce("nope", tmp_path)
