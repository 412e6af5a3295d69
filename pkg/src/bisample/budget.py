"""Privacy budgets and value domains."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PrivacyBudget:
    """An epsilon-LDP budget (in nats).

    The derived randomized-response truth probability p = e^eps / (e^eps + 1)
    is always recomputed from epsilon, never stored, so the two can not
    drift apart.
    """

    epsilon: float

    def __post_init__(self) -> None:
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps <= 0.0:
            raise ValueError(f"epsilon must be a finite positive real, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def p(self) -> float:
        """Truth probability e^eps / (e^eps + 1), always in (1/2, 1)."""
        # 1 / (1 + e^-eps) avoids overflow for large eps.
        return 1.0 / (1.0 + math.exp(-self.epsilon))

    @property
    def bias(self) -> float:
        """2p - 1 = tanh(eps/2), the slope of every RR-style channel here.

        Computed with tanh so mechanisms, estimators, and the analytic
        oracle all share the exact same float.
        """
        return math.tanh(self.epsilon / 2.0)

    @property
    def null_sample_prob(self) -> float:
        """1 - p = 1 / (e^eps + 1), the null-input Bernoulli parameter."""
        return (1.0 - self.bias) / 2.0


@dataclass(frozen=True)
class ValueDomain:
    """A closed interval [lower, upper] of raw user values."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("domain bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"domain requires lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return (self.upper + self.lower) / 2.0

    def normalize(self, values):
        """Map raw values in [lower, upper] linearly onto [-1, 1]."""
        import numpy as np

        arr = np.asarray(values, dtype=float)
        out = 2.0 * (arr - self.lower) / self.width - 1.0
        return float(out) if np.ndim(values) == 0 else out


def rescale_mean(m_unit: float, domain: ValueDomain) -> float:
    """Map a mean of normalized values back to the raw domain.

    Inverse of :meth:`ValueDomain.normalize` applied to a mean; by
    linearity, rescaling the aggregate equals aggregating rescaled values.
    """
    return (domain.width / 2.0) * m_unit + domain.midpoint
