"""
Independent references for the numeric kernel: Clopper–Pearson bounds by
bisection on the exact binomial tail, vectorized over (k, n).
"""
import numpy as np
from scipy.stats import binom

BISECTION_STEPS = 80


def binom_lower_bisect(k, n, confidence):
    """Largest p with P[Bin(n, p) >= k] <= 1 - confidence; 0 where k = 0."""
    k = np.asarray(k, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    lo = np.zeros(np.broadcast(k, n).shape)
    hi = np.ones_like(lo)
    for _ in range(BISECTION_STEPS):
        mid = (lo + hi) / 2.0
        too_high = binom.sf(k - 1, n, mid) > 1.0 - confidence
        hi = np.where(too_high, mid, hi)
        lo = np.where(too_high, lo, mid)
    return np.where(k == 0, 0.0, (lo + hi) / 2.0)


def binom_upper_bisect(k, n, confidence):
    """Smallest p with P[Bin(n, p) <= k] <= 1 - confidence; 1 where k = n."""
    k = np.asarray(k, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    lo = np.zeros(np.broadcast(k, n).shape)
    hi = np.ones_like(lo)
    for _ in range(BISECTION_STEPS):
        mid = (lo + hi) / 2.0
        too_low = binom.cdf(k, n, mid) > 1.0 - confidence
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    return np.where(k == n, 1.0, (lo + hi) / 2.0)
