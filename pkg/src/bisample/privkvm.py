"""Key-value baseline for null-aware collection (PrivKV/PrivKVM style).

Each user holds one pair: key 1 with a value in [-1, 1], or key 0 for a
withheld value. The key is perturbed by randomized response under half the
budget; when the reported key is 1 the reported value is a discretized
+-1 perturbed under the other half (a fresh uniform +-1 when the key
flipped from 0). The aggregator inverts the key channel once for the
missing rate and runs server-side virtual iterations to correct the mean.

The original papers leave several internals open (budget split, the exact
virtual-iteration update); this module documents its reconstruction:
eps1 = eps2 = eps/2, and the virtual update is a fixed-point residual
correction against the predicted +-1 counts. Comparisons against it should
assert orderings, not absolute error values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .budget import PrivacyBudget
from .estimation import EstimationError
from .validation import check_unit_values


class DegenerateFrequency(EstimationError):
    """Adjusted key frequency ~ 0; the value mean is undefined."""


class KvPair(NamedTuple):
    """Key-value report; fields are scalars or aligned arrays.

    The value slot is meaningful only when key = 1; key-0 pairs carry a 0
    placeholder that estimation never reads.
    """

    key: int | np.ndarray
    value: float | np.ndarray


@dataclass(frozen=True)
class PrivKvmConfig:
    """Budget split and iteration counts for the key-value baseline."""

    epsilon: float
    real_iterations: int = 1
    virtual_iterations: int = 5
    budget_split: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        PrivacyBudget(self.epsilon)
        if self.real_iterations < 1:
            raise ValueError("real_iterations must be >= 1")
        if self.virtual_iterations < 0:
            raise ValueError("virtual_iterations must be >= 0")
        if self.budget_split is None:
            object.__setattr__(self, "budget_split", (self.epsilon / 2.0, self.epsilon / 2.0))
        e1, e2 = self.budget_split
        if e1 <= 0 or e2 <= 0:
            raise ValueError("budget split components must be positive")
        if abs((e1 + e2) - self.epsilon) > 1e-12 * max(1.0, self.epsilon):
            raise ValueError(f"budget split {self.budget_split} does not sum to {self.epsilon}")

    @property
    def key_budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.budget_split[0])

    @property
    def value_budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.budget_split[1])


def kv_encode(prepared) -> KvPair:
    """Encode prepared values: v -> <1, v>, null -> <0, 0>."""
    arr, scalar = check_unit_values(prepared, allow_null=True, name="prepared")
    nulls = np.isnan(arr)
    key = (~nulls).astype(np.int8)
    value = np.nan_to_num(arr, nan=0.0)
    if scalar:
        return KvPair(int(key), float(value))
    return KvPair(key, value)


def privkvm_perturb(kv: KvPair, config: PrivKvmConfig, rng: np.random.Generator) -> KvPair:
    """Perturb key-value pairs locally; output values are in {-1, 0, +1}.

    Key: randomized response under eps1. Value, when the reported key
    is 1: the true value's discretization sign-flipped with probability
    1 - p2 if the original key was 1, else a uniform +-1.
    """
    key = np.atleast_1d(np.asarray(kv.key, dtype=np.int64))
    value = np.atleast_1d(np.asarray(kv.value, dtype=float))
    scalar = np.ndim(kv.key) == 0
    p1 = config.key_budget.p
    p2 = config.value_budget.p

    reported_key = np.where(rng.random(key.shape) < p1, key, 1 - key)
    disc = np.where(rng.random(key.shape) < (1.0 + value) / 2.0, 1.0, -1.0)
    kept_sign = np.where(rng.random(key.shape) < p2, disc, -disc)
    fake_sign = np.where(rng.random(key.shape) < 0.5, 1.0, -1.0)
    reported_value = np.where(
        reported_key == 1, np.where(key == 1, kept_sign, fake_sign), 0.0
    )
    if scalar:
        return KvPair(int(reported_key[0]), float(reported_value[0]))
    return KvPair(reported_key.astype(np.int8), reported_value)


def privkvm_missing_rate(reports: KvPair, config: PrivKvmConfig) -> float:
    """Missing rate 1 - f_k with f_k the RR-inverted key frequency.

    Computed once from the real iteration; virtual iterations never touch
    it. Raw value, may leave [0, 1] on finite samples.
    """
    key = np.atleast_1d(np.asarray(reports.key))
    if key.size == 0:
        raise ValueError("reports must be nonempty")
    budget = config.key_budget
    f_obs = float(key.mean())
    f_k = (f_obs - (1.0 - budget.p)) / budget.bias
    return 1.0 - f_k


def privkvm_estimate(
    reports: KvPair, config: PrivKvmConfig, *, degenerate_tol: float = 1e-9
) -> tuple[float, float]:
    """(missing_rate, mean) from perturbed key-value reports.

    The mean correction models the reported +-1 counts as a mix of genuine
    responders (share from the adjusted key frequency) and key-flip fakes
    (symmetric +-1), and walks the estimated +1 share to the fixed point
    of the predicted counts over ``virtual_iterations`` rounds. Raises
    DegenerateFrequency when the adjusted key frequency is <= 0.
    """
    key = np.atleast_1d(np.asarray(reports.key))
    value = np.atleast_1d(np.asarray(reports.value, dtype=float))
    missing_rate = privkvm_missing_rate(reports, config)
    f_k = 1.0 - missing_rate
    if f_k <= degenerate_tol:
        raise DegenerateFrequency(f"adjusted key frequency {f_k:g} <= 0; mean undefined")

    ones = key == 1
    n_reported = int(ones.sum())
    if n_reported == 0:
        raise DegenerateFrequency("no reports with key 1; mean undefined")
    n_plus = int((value[ones] > 0).sum())

    p1 = config.key_budget.p
    p2 = config.value_budget.p
    # Expected composition of the reported-key-1 pool.
    genuine_share = f_k * p1 / (f_k * p1 + (1.0 - f_k) * (1.0 - p1))
    genuine_n = genuine_share * n_reported
    fake_n = n_reported - genuine_n
    if genuine_n <= degenerate_tol:
        raise DegenerateFrequency("estimated genuine responder count ~ 0; mean undefined")

    plus_share = 0.5
    for _ in range(config.virtual_iterations):
        predicted_plus = genuine_n * (p2 * plus_share + (1.0 - p2) * (1.0 - plus_share))
        predicted_plus += fake_n * 0.5
        residual = n_plus - predicted_plus
        plus_share = float(np.clip(plus_share + residual / (genuine_n * (2.0 * p2 - 1.0)), 0.0, 1.0))
    mean = 2.0 * plus_share - 1.0
    return missing_rate, mean
