"""Local perturbation primitives.

Every mechanism is a pure function of (input, budget, randomness source):
randomized response on bits, value discretization, the Harmony and
Piecewise baselines for numeric values, bidirectional sampling, the
prepare-value gate for personal privacy preferences, and its null-aware
extension. Scalar inputs yield scalar outputs; array inputs are perturbed
element-wise in one vectorized pass.

The closed-form channel probabilities used for sampling are exposed as
functions of their own (``*_sample_prob``) so the analytic audit and the
expected-counts oracle share the exact same arithmetic as the samplers.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .budget import PrivacyBudget
from .rng import make_rng
from .validation import NULL, check_bits, check_unit_values, is_null

__all__ = [
    "NULL",
    "is_null",
    "PerturbedReport",
    "rr_perturb",
    "discretize",
    "harmony_magnitude",
    "harmony_perturb",
    "pm_magnitude",
    "pm_perturb",
    "bisample_sample_prob",
    "bisample_perturb",
    "prepare_value",
    "bisample_md_sample_prob",
    "bisample_md_perturb",
    "RandomizedResponse",
    "Harmony",
    "PiecewiseMechanism",
    "BiSample",
    "BiSampleMD",
]


class PerturbedReport(NamedTuple):
    """A two-bit report: sampling direction (1 = positive) and sample bit.

    Fields are plain ints for scalar inputs and aligned arrays when a whole
    population was perturbed at once.
    """

    direction: int | np.ndarray
    sample: int | np.ndarray


def rr_perturb(answer, budget: PrivacyBudget, rng: np.random.Generator):
    """Randomized response: keep the bit with probability p, else flip it."""
    bits, scalar = check_bits(answer, name="answer")
    keep = rng.random(bits.shape) < budget.p
    out = np.where(keep, bits, 1 - bits)
    return int(out) if scalar else out.astype(np.int8)


def discretize(value, rng: np.random.Generator):
    """Round v in [-1, 1] to +1 with probability (1+v)/2, else -1.

    The output's expectation equals v.
    """
    arr, scalar = check_unit_values(value)
    out = np.where(rng.random(arr.shape) < (1.0 + arr) / 2.0, 1.0, -1.0)
    return float(out) if scalar else out


def harmony_magnitude(budget: PrivacyBudget) -> float:
    """Output magnitude (e^eps + 1)/(e^eps - 1) of the Harmony mechanism."""
    return 1.0 / budget.bias


def harmony_perturb(value, budget: PrivacyBudget, rng: np.random.Generator):
    """Harmony: discretize, randomized-response the sign, rescale to +-C.

    C = (e^eps + 1)/(e^eps - 1); the rescaling makes each report an
    unbiased estimate of the input.
    """
    arr, scalar = check_unit_values(value)
    disc = np.where(rng.random(arr.shape) < (1.0 + arr) / 2.0, 1.0, -1.0)
    keep = rng.random(arr.shape) < budget.p
    out = harmony_magnitude(budget) * np.where(keep, disc, -disc)
    return float(out) if scalar else out


def pm_magnitude(budget: PrivacyBudget) -> float:
    """Output bound C' = (e^(eps/2) + 1)/(e^(eps/2) - 1) of the piecewise mechanism."""
    return 1.0 / math.tanh(budget.epsilon / 4.0)


def pm_perturb(value, budget: PrivacyBudget, rng: np.random.Generator):
    """Piecewise mechanism: continuous unbiased output in [-C', C'].

    Construction from Wang et al. 2019 ("Collecting and Analyzing
    Multidimensional Data with Local Differential Privacy"): with
    probability e^(eps/2)/(e^(eps/2)+1) sample uniformly from the
    high-density window [l(v), r(v)] of width C'-1 centred on the input's
    image, otherwise uniformly from the remaining two tails. The density
    ratio between the window and the tails is e^eps exactly.
    """
    arr, scalar = check_unit_values(value)
    bound = pm_magnitude(budget)
    lo = ((bound + 1.0) / 2.0) * arr - (bound - 1.0) / 2.0
    hi = lo + bound - 1.0
    center_prob = 1.0 / (1.0 + math.exp(-budget.epsilon / 2.0))

    in_window = rng.random(arr.shape) < center_prob
    u = rng.random(arr.shape)
    window_draw = lo + u * (bound - 1.0)
    # Tails [-C', l] and [r, C'] have combined length C'+1 for every input.
    tail_pos = u * (bound + 1.0)
    left_len = lo + bound
    tail_draw = np.where(tail_pos < left_len, -bound + tail_pos, hi + (tail_pos - left_len))
    out = np.where(in_window, window_draw, tail_draw)
    return float(out) if scalar else out


def bisample_sample_prob(value, direction, budget: PrivacyBudget):
    """Pr[sample = 1] for the bidirectional sampler.

    Positive sampling (direction 1) leans toward +1:
        (e^eps - 1)/(e^eps + 1) * v/2 + 1/2,
    negative sampling (direction 0) mirrors it with opposite slope.
    """
    sign = 2.0 * np.asarray(direction, dtype=float) - 1.0
    return 0.5 * (1.0 + budget.bias * sign * np.asarray(value, dtype=float))


def bisample_perturb(value, budget: PrivacyBudget, rng: np.random.Generator) -> PerturbedReport:
    """Bidirectional sampling: uniform direction, then one Bernoulli sample.

    Satisfies eps-LDP; direction 1 estimates the frequency of +1 after
    discretization, direction 0 the frequency of -1.
    """
    arr, scalar = check_unit_values(value)
    direction = rng.integers(0, 2, size=arr.shape, dtype=np.int8)
    prob_one = bisample_sample_prob(arr, direction, budget)
    sample = (rng.random(arr.shape) < prob_one).astype(np.int8)
    if scalar:
        return PerturbedReport(int(direction), int(sample))
    return PerturbedReport(direction, sample)


def prepare_value(value, user_budget, system_budget: PrivacyBudget):
    """Gate a value on the user's privacy preference.

    Returns the value unchanged when the mechanism budget does not exceed
    the user's tolerance (eps <= eps_u, boundary inclusive), otherwise the
    null marker. Deterministic and total.
    """
    arr, scalar = check_unit_values(value)
    prefs = np.asarray(user_budget, dtype=float)
    if prefs.size and not (prefs[np.isfinite(prefs)] > 0).all():
        raise ValueError("user budgets must be positive")
    out = np.where(system_budget.epsilon <= prefs, arr, NULL)
    return float(out) if scalar else out


def bisample_md_sample_prob(prepared, direction, budget: PrivacyBudget):
    """Pr[sample = 1] for the null-aware bidirectional sampler.

    Real inputs use the plain bidirectional channel; null inputs sample 1
    with probability 1/(e^eps + 1) under both directions.
    """
    arr = np.asarray(prepared, dtype=float)
    nulls = np.isnan(arr)
    base = bisample_sample_prob(np.nan_to_num(arr, nan=0.0), direction, budget)
    return np.where(nulls, budget.null_sample_prob, base)


def bisample_md_perturb(prepared, budget: PrivacyBudget, rng: np.random.Generator) -> PerturbedReport:
    """Null-aware bidirectional sampling over [-1, 1] plus the null marker.

    On real inputs this is draw-for-draw identical to
    :func:`bisample_perturb`; nulls are indistinguishable from real values
    beyond the eps-LDP bound.
    """
    arr, scalar = check_unit_values(prepared, allow_null=True)
    direction = rng.integers(0, 2, size=arr.shape, dtype=np.int8)
    prob_one = bisample_md_sample_prob(arr, direction, budget)
    sample = (rng.random(arr.shape) < prob_one).astype(np.int8)
    if scalar:
        return PerturbedReport(int(direction), int(sample))
    return PerturbedReport(direction, sample)


class _MechanismTransformer(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: epsilon/random_state params, transform perturbs."""

    def __init__(self, epsilon: float = 1.0, random_state=None):
        self.epsilon = epsilon
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.budget_ = PrivacyBudget(self.epsilon)
        self.rng_ = make_rng(self.random_state)
        return self

    def _check_fitted(self):
        if not hasattr(self, "budget_"):
            raise RuntimeError(f"{type(self).__name__} must be fit before transform")


class RandomizedResponse(_MechanismTransformer):
    """Transformer form of :func:`rr_perturb` over a 1-d bit array."""

    def transform(self, X):
        self._check_fitted()
        return rr_perturb(np.asarray(X), self.budget_, self.rng_)


class Harmony(_MechanismTransformer):
    """Transformer form of :func:`harmony_perturb` over a 1-d value array."""

    def transform(self, X):
        self._check_fitted()
        return harmony_perturb(np.asarray(X, dtype=float), self.budget_, self.rng_)


class PiecewiseMechanism(_MechanismTransformer):
    """Transformer form of :func:`pm_perturb` over a 1-d value array."""

    def transform(self, X):
        self._check_fitted()
        return pm_perturb(np.asarray(X, dtype=float), self.budget_, self.rng_)


class BiSample(_MechanismTransformer):
    """Transformer form of :func:`bisample_perturb`.

    ``transform`` returns an (n, 2) int array of [direction, sample] rows.
    """

    def transform(self, X):
        self._check_fitted()
        report = bisample_perturb(np.asarray(X, dtype=float), self.budget_, self.rng_)
        return np.column_stack([report.direction, report.sample])


class BiSampleMD(_MechanismTransformer):
    """Null-aware variant of :class:`BiSample`; NaN entries are nulls."""

    def transform(self, X):
        self._check_fitted()
        report = bisample_md_perturb(np.asarray(X, dtype=float), self.budget_, self.rng_)
        return np.column_stack([report.direction, report.sample])
