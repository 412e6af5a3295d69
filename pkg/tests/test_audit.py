import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bisample.audit import (
    AuditReport,
    ChannelMatrix,
    UnsupportedInput,
    ZeroProbability,
    audit_epsilon,
    audit_pm_binned,
    channel_matrix,
    default_grid,
    monte_carlo_channel,
)
from bisample.budget import PrivacyBudget
from bisample.mechanisms import NULL

EPS_GRID = (0.1, 0.5, 1.0, 2.0, math.log(3.0))


class TestChannelMatrix:
    @pytest.mark.parametrize("mech", ["rr", "harmony", "bisample", "bisample_md", "privkvm"])
    @pytest.mark.parametrize("eps", EPS_GRID)
    def test_rows_sum_to_one(self, mech, eps):
        matrix = channel_matrix(mech, PrivacyBudget(eps))
        np.testing.assert_allclose(matrix.probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    @given(st.floats(min_value=0.01, max_value=20.0))
    def test_bisample_rows_sum_to_one_any_epsilon(self, eps):
        matrix = channel_matrix("bisample", PrivacyBudget(eps), default_grid(41))
        assert np.allclose(matrix.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_bisample_known_entry(self):
        # Input 1 on the positive direction: half of e/(e+1).
        matrix = channel_matrix("bisample", PrivacyBudget(1.0), [1.0])
        assert matrix.probs[0][3] == pytest.approx(0.5 * math.e / (math.e + 1.0), abs=1e-15)

    def test_bisample_md_null_row(self):
        matrix = channel_matrix("bisample_md", PrivacyBudget(1.0), [NULL])
        assert matrix.probs[0][0] == pytest.approx(0.5 * math.e / (math.e + 1.0), abs=1e-15)
        assert matrix.inputs == ("null",)

    def test_null_rejected_for_plain_mechanisms(self):
        for mech in ("bisample", "harmony"):
            with pytest.raises(UnsupportedInput):
                channel_matrix(mech, PrivacyBudget(1.0), [0.0, NULL])

    def test_pm_has_no_exact_matrix(self):
        with pytest.raises(UnsupportedInput):
            channel_matrix("pm", PrivacyBudget(1.0))

    def test_rr_rejects_non_bits(self):
        with pytest.raises(UnsupportedInput):
            channel_matrix("rr", PrivacyBudget(1.0), [0.5])

    def test_unknown_mechanism(self):
        with pytest.raises(ValueError):
            channel_matrix("nope", PrivacyBudget(1.0))

    def test_matrix_validation(self):
        with pytest.raises(ValueError):
            ChannelMatrix("x", 1.0, (0,), ("a", "b"), np.array([[0.6, 0.5]]))


class TestAuditEpsilon:
    @pytest.mark.parametrize("mech", ["rr", "harmony", "bisample", "bisample_md"])
    @pytest.mark.parametrize("eps", EPS_GRID)
    def test_observed_equals_claimed_exactly(self, mech, eps):
        budget = PrivacyBudget(eps)
        grid = None if mech == "rr" else default_grid(201, include_null=(mech == "bisample_md"))
        report = audit_epsilon(channel_matrix(mech, budget, grid))
        assert abs(report.epsilon_observed - eps) <= 1e-9

    def test_bisample_witness_is_the_extreme_pair(self):
        report = audit_epsilon(channel_matrix("bisample", PrivacyBudget(1.0), default_grid(201)))
        assert {report.witness_input_a, report.witness_input_b} == {-1.0, 1.0}

    def test_null_row_attains_the_bound(self):
        report = audit_epsilon(channel_matrix("bisample_md", PrivacyBudget(1.0), [NULL, -1.0, 0.0]))
        assert report.epsilon_observed == pytest.approx(1.0, abs=1e-9)

    def test_single_input_gives_zero(self):
        report = audit_epsilon(channel_matrix("bisample", PrivacyBudget(1.0), [0.25]))
        assert report.epsilon_observed == 0.0

    def test_zero_probability_is_reported(self):
        matrix = ChannelMatrix("toy", 1.0, (0, 1), ("a", "b"),
                               np.array([[1.0, 0.0], [0.5, 0.5]]))
        with pytest.raises(ZeroProbability):
            audit_epsilon(matrix)

    def test_report_serialization(self):
        report = audit_epsilon(channel_matrix("rr", PrivacyBudget(1.0)))
        text = report.to_text()
        assert "rr" in text and "within" in text
        record = report.to_record()
        assert record[0] == "rr" and float(record[2]) == pytest.approx(1.0)


class TestMonteCarloChannel:
    def test_deterministic_under_seed(self):
        budget = PrivacyBudget(1.0)
        _, a = monte_carlo_channel("bisample", budget, 0.5, 10_000, seed=3)
        _, b = monte_carlo_channel("bisample", budget, 0.5, 10_000, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_single_draw_is_point_mass(self):
        _, freqs = monte_carlo_channel("bisample", PrivacyBudget(1.0), 0.0, 1, seed=4)
        assert freqs.sum() == 1.0 and (freqs == 1.0).sum() == 1

    @pytest.mark.parametrize("mech,value", [
        ("rr", 1), ("harmony", 0.5), ("bisample", 0.5), ("bisample_md", NULL),
    ])
    def test_agrees_with_closed_form_within_binomial_noise(self, mech, value):
        budget = PrivacyBudget(1.0)
        draws = 200_000
        grid = [value]
        labels, freqs = monte_carlo_channel(mech, budget, value, draws, seed=5)
        row = channel_matrix(mech, budget, grid).probs[0]
        tol = 4.0 * np.sqrt(row * (1.0 - row) / draws)
        assert (np.abs(freqs - row) <= tol + 1e-12).all()

    def test_draws_validation(self):
        with pytest.raises(ValueError):
            monte_carlo_channel("rr", PrivacyBudget(1.0), 1, 0)


class TestPiecewiseAudit:
    def test_binned_ratio_within_slack(self):
        # The 1.05 slack assumes the default 1e6 draws; fewer draws leave
        # too much sampling noise on the boundary bins.
        budget = PrivacyBudget(1.0)
        report = audit_pm_binned(budget, draws=1_000_000, seed=6)
        assert report.epsilon_observed <= 1.0 + math.log(1.05)
        # Binning can only lower the ratio; sanity-check it stays near eps.
        assert report.epsilon_observed >= 0.6

    def test_zero_bin_raises(self):
        with pytest.raises(ZeroProbability):
            audit_pm_binned(PrivacyBudget(1.0), draws=50, bins=64, seed=7)
