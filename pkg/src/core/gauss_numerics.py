"""
Numeric kernel: standard normal CDF Φ, its inverse Φ⁻¹, and exact one-sided
Clopper–Pearson binomial bounds.
"""
import math
from dataclasses import dataclass
from enum import Enum

from scipy.special import ndtr, ndtri
from statsmodels.stats.proportion import proportion_confint


class NumericDomainError(ValueError):
    """Argument outside the domain of a numeric routine."""


class Side(Enum):
    LOWER = "Lower"
    UPPER = "Upper"


@dataclass(frozen=True)
class ConfidenceBound:
    value: float
    confidence: float
    side: Side
    successes: int
    trials: int

    def __float__(self):
        return self.value


def phi(z):
    z = float(z)
    if math.isnan(z):
        raise NumericDomainError("phi: NaN input")
    return float(ndtr(z))


def phi_inv(p):
    p = float(p)
    if not 0.0 < p < 1.0:
        raise NumericDomainError(f"phi_inv: p={p} 不在 (0, 1) 内")
    return float(ndtri(p))


def _check_counts(k, n, confidence):
    if int(k) != k or int(n) != n:
        raise NumericDomainError(f"counts must be integers, got k={k}, n={n}")
    if n < 1 or not 0 <= k <= n:
        raise NumericDomainError(f"invalid counts k={k}, n={n}")
    if not 0.0 < confidence < 1.0:
        raise NumericDomainError(f"confidence={confidence} 不在 (0, 1) 内")
    return int(k), int(n), float(confidence)


def binom_lower(k, n, confidence):
    """
    One-sided Clopper–Pearson lower bound: Beta(k, n-k+1) quantile at 1 - confidence.
    A two-sided "beta" interval at level 2(1 - confidence) has exactly this lower end.
    """
    k, n, confidence = _check_counts(k, n, confidence)
    if k == 0:
        value = 0.0
    elif k == n:
        # closed form, avoids the quantile solver at the boundary
        value = (1.0 - confidence) ** (1.0 / n)
    else:
        value = float(proportion_confint(k, n, alpha=2 * (1.0 - confidence), method="beta")[0])
    return ConfidenceBound(value=value, confidence=confidence, side=Side.LOWER, successes=k, trials=n)


def binom_upper(k, n, confidence):
    """One-sided Clopper–Pearson upper bound: Beta(k+1, n-k) quantile at confidence."""
    k, n, confidence = _check_counts(k, n, confidence)
    if k == n:
        value = 1.0
    elif k == 0:
        value = 1.0 - (1.0 - confidence) ** (1.0 / n)
    else:
        value = float(proportion_confint(k, n, alpha=2 * (1.0 - confidence), method="beta")[1])
    return ConfidenceBound(value=value, confidence=confidence, side=Side.UPPER, successes=k, trials=n)
