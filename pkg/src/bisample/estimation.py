"""Aggregator side: mergeable report counting and unbiased estimators.

Counts are exact integers so partial aggregates merge without rounding;
frequencies and estimates are double precision. Raw estimates may leave
their natural ranges on finite samples, so each summary carries both the
raw value (for unbiasedness checks and error metrics) and a clamped value
(for consumers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .budget import PrivacyBudget
from .mechanisms import PerturbedReport, bisample_md_sample_prob
from .validation import check_unit_values


class EstimationError(Exception):
    """Base class for aggregator-side failures."""


class EmptyDirection(EstimationError):
    """A sampling direction received no reports; frequencies are undefined."""


class AllNullPopulation(EstimationError):
    """Estimated responder fraction is ~0; the mean is undefined."""


@dataclass
class DirectionCounts:
    """Mergeable per-direction report counts.

    Merging is field-wise addition: associative, commutative, identity all
    zeros, so any partition of the report stream may be counted
    independently and combined. Fields are ints when counting real reports
    and reals when produced by :func:`expected_counts_oracle`.
    """

    pos_total: float = 0
    pos_ones: float = 0
    neg_total: float = 0
    neg_ones: float = 0

    def __post_init__(self) -> None:
        if self.pos_ones > self.pos_total or self.neg_ones > self.neg_total:
            raise ValueError("ones-counters can not exceed direction totals")
        if min(self.pos_total, self.pos_ones, self.neg_total, self.neg_ones) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> float:
        """Total reports; structurally pos_total + neg_total."""
        return self.pos_total + self.neg_total

    def merge(self, other: "DirectionCounts") -> "DirectionCounts":
        return DirectionCounts(
            self.pos_total + other.pos_total,
            self.pos_ones + other.pos_ones,
            self.neg_total + other.neg_total,
            self.neg_ones + other.neg_ones,
        )

    __add__ = merge

    @classmethod
    def from_reports(cls, reports) -> "DirectionCounts":
        """Count a batch of reports: a PerturbedReport, (n, 2) array, or pair iterable."""
        if isinstance(reports, PerturbedReport):
            direction = np.atleast_1d(np.asarray(reports.direction))
            sample = np.atleast_1d(np.asarray(reports.sample))
        else:
            arr = np.asarray(list(reports) if not isinstance(reports, np.ndarray) else reports)
            arr = arr.reshape(-1, 2)
            direction, sample = arr[:, 0], arr[:, 1]
        cells = np.bincount(direction.astype(np.int64) * 2 + sample.astype(np.int64), minlength=4)
        return cls(
            pos_total=int(cells[2] + cells[3]),
            pos_ones=int(cells[3]),
            neg_total=int(cells[0] + cells[1]),
            neg_ones=int(cells[1]),
        )


def accumulate(counts: DirectionCounts, report: PerturbedReport) -> DirectionCounts:
    """Fold one report into the counts; pure, returns a new value."""
    return counts.merge(DirectionCounts.from_reports(report))


def frequencies(counts: DirectionCounts) -> tuple[float, float]:
    """Per-direction one-frequencies (f_pos, f_neg).

    Raises EmptyDirection when either direction is starved, which can
    happen at tiny n; an explicit error beats a silent NaN.
    """
    if counts.pos_total <= 0:
        raise EmptyDirection("no positive-direction reports")
    if counts.neg_total <= 0:
        raise EmptyDirection("no negative-direction reports")
    return counts.pos_ones / counts.pos_total, counts.neg_ones / counts.neg_total


def rr_frequency_adjust(f_r: float, budget: PrivacyBudget) -> float:
    """Invert randomized response on an observed frequency: (p-1+f_r)/(2p-1)."""
    if not 0.0 <= f_r <= 1.0:
        raise ValueError(f"observed frequency must lie in [0, 1], got {f_r}")
    return (f_r - (1.0 - budget.p)) / budget.bias


def mean_estimate_basic(counts: DirectionCounts, budget: PrivacyBudget) -> float:
    """Unbiased mean over a fully-responding population: (f_pos - f_neg)/(2p-1)."""
    f_pos, f_neg = frequencies(counts)
    return (f_pos - f_neg) / budget.bias


def theoretical_variance(budget: PrivacyBudget, m: float) -> float:
    """Per-report variance of the bidirectional mean estimator.

    ((e^eps+1)/(e^eps-1))^2 - m^2; divide by n for the estimator over n
    users. Worst case over m is at m = 0.
    """
    check_unit_values(m, name="m")
    return (1.0 / budget.bias) ** 2 - m * m


def sum_estimate(counts: DirectionCounts, budget: PrivacyBudget) -> float:
    """Unbiased estimate of the sum of non-null values: n*(f_pos - f_neg)/(2p-1)."""
    f_pos, f_neg = frequencies(counts)
    return counts.n * (f_pos - f_neg) / budget.bias


def missing_rate_estimate(counts: DirectionCounts, budget: PrivacyBudget) -> float:
    """Unbiased estimate of the null fraction: (1 - f_pos - f_neg)/(2p-1)."""
    f_pos, f_neg = frequencies(counts)
    return (1.0 - f_pos - f_neg) / budget.bias


def mean_estimate_md(
    counts: DirectionCounts, budget: PrivacyBudget, *, all_null_tol: float = 1e-9
) -> float:
    """Mean over responders in the presence of nulls.

    (f_pos - f_neg) / (f_pos + f_neg + 2p - 2), algebraically equal to
    sum_estimate / (n * (1 - missing_rate_estimate)). Raises
    AllNullPopulation when the denominator (the scaled responder fraction)
    is within ``all_null_tol`` of zero.
    """
    f_pos, f_neg = frequencies(counts)
    denom = f_pos + f_neg + budget.bias - 1.0
    if abs(denom) < all_null_tol:
        raise AllNullPopulation(f"estimated responder fraction ~ 0 (denominator {denom:g})")
    return (f_pos - f_neg) / denom


def expected_counts_oracle(prepared_values, budget: PrivacyBudget) -> DirectionCounts:
    """Exact expected counts for a prepared population; no sampling.

    Sums each user's closed-form channel probabilities, giving real-valued
    counts that let the estimators be checked against ground truth at
    machine precision.
    """
    arr, _ = check_unit_values(prepared_values, allow_null=True, name="prepared_values")
    arr = np.atleast_1d(arr)
    if arr.size == 0:
        raise ValueError("population must be nonempty")
    q_pos = bisample_md_sample_prob(arr, 1, budget)
    q_neg = bisample_md_sample_prob(arr, 0, budget)
    n = arr.size
    return DirectionCounts(
        pos_total=n / 2.0,
        pos_ones=float(q_pos.sum()) / 2.0,
        neg_total=n / 2.0,
        neg_ones=float(q_neg.sum()) / 2.0,
    )


@dataclass(frozen=True)
class EstimateSummary:
    """All aggregator outputs for one report batch, raw and clamped."""

    f_pos: float
    f_neg: float
    m_star_raw: float
    m_star_clamped: float
    s_star: float
    f_bot_raw: float
    f_bot_clamped: float
    n: int


def summarize(
    counts: DirectionCounts,
    budget: PrivacyBudget,
    *,
    null_aware: bool = True,
    all_null_tol: float = 1e-9,
) -> EstimateSummary:
    """Compute every estimator once and clamp the consumer-facing copies.

    ``null_aware`` selects the responder-mean estimator; otherwise the
    basic full-population mean is reported.
    """
    f_pos, f_neg = frequencies(counts)
    if null_aware:
        m_raw = mean_estimate_md(counts, budget, all_null_tol=all_null_tol)
    else:
        m_raw = mean_estimate_basic(counts, budget)
    f_bot_raw = missing_rate_estimate(counts, budget)
    return EstimateSummary(
        f_pos=f_pos,
        f_neg=f_neg,
        m_star_raw=m_raw,
        m_star_clamped=float(np.clip(m_raw, -1.0, 1.0)),
        s_star=sum_estimate(counts, budget),
        f_bot_raw=f_bot_raw,
        f_bot_clamped=float(np.clip(f_bot_raw, 0.0, 1.0)),
        n=int(counts.n),
    )


class BiSampleAggregator(BaseEstimator):
    """sklearn-style aggregator: fit on reports, read estimates off attributes.

    After ``fit(X)`` (X a PerturbedReport, an (n, 2) array, or an iterable
    of (direction, sample) pairs) the instance exposes ``counts_``,
    ``summary_``, ``mean_``, ``sum_`` and ``missing_rate_``.
    """

    def __init__(self, epsilon: float = 1.0, null_aware: bool = True, all_null_tol: float = 1e-9):
        self.epsilon = epsilon
        self.null_aware = null_aware
        self.all_null_tol = all_null_tol

    def fit(self, X, y=None):
        budget = PrivacyBudget(self.epsilon)
        self.counts_ = DirectionCounts.from_reports(X)
        self.summary_ = summarize(
            self.counts_, budget, null_aware=self.null_aware, all_null_tol=self.all_null_tol
        )
        self.mean_ = self.summary_.m_star_clamped
        self.mean_raw_ = self.summary_.m_star_raw
        self.sum_ = self.summary_.s_star
        self.missing_rate_ = self.summary_.f_bot_clamped
        self.missing_rate_raw_ = self.summary_.f_bot_raw
        return self
