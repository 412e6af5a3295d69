"""Synthetic and file-backed populations, privacy preferences, behavior
modes, and ground-truth statistics.

Every generator is deterministic under (parameters, seed) and produces
values inside [-1, 1] exactly. Populations are immutable after creation.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .budget import PrivacyBudget
from .rng import make_rng
from .validation import NULL


class DatasetError(Exception):
    """Base class for dataset loading failures."""


class EmptyColumn(DatasetError):
    pass


class NonNumericValue(DatasetError):
    def __init__(self, column: str, row: int, raw: str):
        super().__init__(f"column {column!r} has non-numeric value {raw!r} at data row {row}")
        self.row = row


class ConstantColumn(DatasetError):
    pass


class BehaviorMode(enum.Enum):
    """What a non-cooperative user submits when the offered budget is too weak.

    NULL_VALUE withholds (the prepare-value gate); TOP substitutes the
    constant 1; RND substitutes a fresh uniform draw from [-1, 1].
    """

    NULL_VALUE = "null"
    TOP = "top"
    RND = "rnd"

    @classmethod
    def parse(cls, name: str) -> "BehaviorMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown behavior mode {name!r}; expected null, top, or rnd") from None


@dataclass(frozen=True)
class UserRecord:
    """One user's true value and personal privacy tolerance (in nats)."""

    value: float
    preference: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.value <= 1.0:
            raise ValueError(f"value must lie in [-1, 1], got {self.value}")
        if not self.preference > 0:
            raise ValueError(f"preference must be positive, got {self.preference}")


@dataclass(frozen=True)
class GroundTruth:
    """Exact population statistics the estimators are judged against."""

    missing_rate: float
    responder_mean: float | None
    overall_mean: float
    n: int


class Population:
    """An ordered set of users held as aligned value/preference arrays."""

    def __init__(self, values, preferences, provenance: str = ""):
        values = np.asarray(values, dtype=float)
        preferences = np.asarray(preferences, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("population requires a nonempty 1-d value array")
        if preferences.shape != values.shape:
            raise ValueError("values and preferences must be aligned")
        if not np.isfinite(values).all() or (np.abs(values) > 1.0).any():
            raise ValueError("population values must lie in [-1, 1]")
        if not (preferences > 0).all():
            raise ValueError("preferences must be positive")
        self.values = values
        self.preferences = preferences
        self.provenance = provenance
        self.values.flags.writeable = False
        self.preferences.flags.writeable = False

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i: int) -> UserRecord:
        return UserRecord(float(self.values[i]), float(self.preferences[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def gen_gauss(n: int, mu: float = 0.5, sigma: float = 0.1, seed=None) -> np.ndarray:
    """n Gaussian draws clamped to [-1, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    return np.clip(rng.normal(mu, sigma, size=n), -1.0, 1.0)


def gen_exp(n: int, scale: float = 0.1, seed=None) -> np.ndarray:
    """n exponential draws min-max normalized onto [-1, 1].

    Normalization is over the realized sample, so the minimum maps to -1
    and the maximum to +1 exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    raw = rng.exponential(scale, size=n)
    return _min_max_unit(raw)


def gen_uniform(n: int, seed=None) -> np.ndarray:
    """n uniform draws on [-1, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    return rng.uniform(-1.0, 1.0, size=n)


def _min_max_unit(raw: np.ndarray) -> np.ndarray:
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        raise ConstantColumn("all values identical; min-max normalization is singular")
    return 2.0 * (raw - lo) / (hi - lo) - 1.0


def load_numeric_column(path, column: str, seed=None) -> np.ndarray:
    """Load one numeric column from delimited text and normalize to [-1, 1].

    The file must have a header row naming ``column``. Non-numeric rows are
    errors, not skips; silent row-dropping would corrupt ground truth. The
    ``seed`` parameter only tags provenance, loading is deterministic.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise EmptyColumn(f"column {column!r} not found in {path}")
        raw = []
        for i, row in enumerate(reader):
            cell = (row.get(column) or "").strip()
            if not cell:
                raise NonNumericValue(column, i, cell)
            try:
                raw.append(float(cell))
            except ValueError:
                raise NonNumericValue(column, i, cell) from None
    if not raw:
        raise EmptyColumn(f"column {column!r} in {path} has no data rows")
    return _min_max_unit(np.asarray(raw, dtype=float))


PREFERENCE_FLOOR = 1e-6


def gen_preferences(n: int, mu: float = 5.0, sigma: float = 1.5, seed=None) -> np.ndarray:
    """n Gaussian privacy preferences floored at a small positive value.

    Preferences must be valid budgets (> 0); the floor touches roughly
    0.04% of draws at the default (mu, sigma).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    return np.maximum(rng.normal(mu, sigma, size=n), PREFERENCE_FLOOR)


def prepare_values(values, preferences, budget: PrivacyBudget) -> np.ndarray:
    """Vectorized prepare-value gate: real value when eps <= preference, else null."""
    values = np.asarray(values, dtype=float)
    return np.where(budget.epsilon <= np.asarray(preferences, dtype=float), values, NULL)


def apply_behavior(
    values, preferences, budget: PrivacyBudget, mode: BehaviorMode, rng: np.random.Generator
) -> np.ndarray:
    """Prepared inputs for a population under one behavior mode.

    Cooperative users (eps <= preference) always contribute their real
    value; the rest follow the mode: withhold, send 1, or send a uniform
    draw.
    """
    values = np.asarray(values, dtype=float)
    prefs = np.asarray(preferences, dtype=float)
    cooperative = budget.epsilon <= prefs
    if mode is BehaviorMode.NULL_VALUE:
        fake = np.full(values.shape, NULL)
    elif mode is BehaviorMode.TOP:
        fake = np.ones_like(values)
    elif mode is BehaviorMode.RND:
        fake = rng.uniform(-1.0, 1.0, size=values.shape)
    else:  # pragma: no cover
        raise ValueError(f"unhandled mode {mode}")
    return np.where(cooperative, values, fake)


def force_missing_rate(population: Population, rate: float, budget: PrivacyBudget, seed=None) -> Population:
    """Reassign preferences so exactly floor(rate*n) users fall below eps.

    Only preferences change; the prepare-value gate stays the single source
    of null decisions.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    n = len(population)
    k = math.floor(rate * n)
    rng = make_rng(seed)
    order = rng.permutation(n)
    prefs = np.empty(n, dtype=float)
    prefs[order[:k]] = budget.epsilon / 2.0  # strictly below eps: forced null
    prefs[order[k:]] = budget.epsilon + 1.0  # at or above eps: cooperative
    return Population(
        population.values,
        prefs,
        provenance=f"{population.provenance}|forced_missing(rate={rate})",
    )


def ground_truth(population: Population, budget: PrivacyBudget) -> GroundTruth:
    """Exact missing rate, responder mean, and overall mean under the gate."""
    missing = population.preferences < budget.epsilon
    n = len(population)
    mr = float(missing.sum()) / n
    responders = population.values[~missing]
    responder_mean = float(responders.mean()) if responders.size else None
    return GroundTruth(
        missing_rate=mr,
        responder_mean=responder_mean,
        overall_mean=float(population.values.mean()),
        n=n,
    )


def save_population(population: Population, path) -> None:
    """Write a population to delimited text (columns: value, preference)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "preference"])
        for v, p in zip(population.values, population.preferences):
            writer.writerow([repr(float(v)), repr(float(p))])


def load_population(path) -> Population:
    """Read a population written by :func:`save_population`."""
    path = Path(path)
    values, prefs = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"value", "preference"} - set(reader.fieldnames):
            raise DatasetError(f"{path} is not a population file (needs value,preference header)")
        for i, row in enumerate(reader):
            try:
                values.append(float(row["value"]))
                prefs.append(float(row["preference"]))
            except (TypeError, ValueError):
                raise NonNumericValue("value/preference", i, str(row)) from None
    if not values:
        raise EmptyColumn(f"{path} has no data rows")
    return Population(values, prefs, provenance=f"file:{path}")
