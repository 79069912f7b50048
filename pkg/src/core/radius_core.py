"""
Exact certified radii from a known probability vector h(x).

standard_radius       (σ/2)(Φ⁻¹(p_y) − Φ⁻¹(max_{k≠y} p_k))
cost_sensitive_radius (σ/2)(Φ⁻¹(max_k p_k) − Φ⁻¹(max_{k∈Ω_y} p_k))

Argmax ties always go to the lowest class index (numpy.argmax semantics).
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from src.config import CERT_CLAMP_EPS
from src.core.gauss_numerics import NumericDomainError


class ProbVector:
    """Per-class probabilities of the smoothed classifier (exact or counts/n)."""

    def __init__(self, probs, tol=1e-9):
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise NumericDomainError(f"ProbVector 需要一维数组, 实际形状 {arr.shape}")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise NumericDomainError("ProbVector 的元素必须在 [0, 1] 内")
        if abs(arr.sum() - 1.0) > tol:
            raise NumericDomainError(f"ProbVector 之和为 {arr.sum()!r}, 不等于 1")
        arr.setflags(write=False)
        self.probs = arr

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=np.float64)
        return cls(counts / counts.sum())

    @property
    def m(self):
        return self.probs.size

    def top(self):
        return int(np.argmax(self.probs))

    def __getitem__(self, k):
        return float(self.probs[k])

    def __repr__(self):
        return f"ProbVector({self.probs.tolist()})"


@dataclass(frozen=True)
class RadiusResult:
    radius: float
    top_class: int
    applicable: bool


def _as_probs(p):
    return p if isinstance(p, ProbVector) else ProbVector(p)


def _targets(omega):
    return sorted(getattr(omega, "targets", omega))


def clamped_phi_inv(p, clamp_eps=CERT_CLAMP_EPS):
    """Φ⁻¹(p) with p clipped to [eps, 1 − eps]."""
    return float(ndtri(min(max(float(p), clamp_eps), 1.0 - clamp_eps)))


def clamped_phi_inv_gap(pa, pb, sigma, clamp_eps=CERT_CLAMP_EPS):
    """(σ/2)(Φ⁻¹(pa) − Φ⁻¹(pb)) with both probabilities clipped to [eps, 1 − eps]."""
    return float(sigma / 2.0 * (clamped_phi_inv(pa, clamp_eps) - clamped_phi_inv(pb, clamp_eps)))


def standard_radius(p, y, sigma, clamp_eps=CERT_CLAMP_EPS):
    p = _as_probs(p)
    if sigma <= 0:
        raise NumericDomainError(f"sigma must be positive, got {sigma}")
    if not 0 <= y < p.m:
        raise IndexError(f"label {y} out of range for m={p.m}")
    others = np.delete(p.probs, y)
    runner_up = float(others.max()) if others.size else 0.0
    radius = clamped_phi_inv_gap(p[y], runner_up, sigma, clamp_eps)
    top = p.top()
    return RadiusResult(radius=radius, top_class=top, applicable=(top == y))


def cost_sensitive_radius(p, omega, sigma, clamp_eps=CERT_CLAMP_EPS):
    p = _as_probs(p)
    if sigma <= 0:
        raise NumericDomainError(f"sigma must be positive, got {sigma}")
    targets = _targets(omega)
    if not targets:
        raise NumericDomainError("Ω_y 为空: 非敏感样本没有 cost-sensitive 半径")
    if targets[0] < 0 or targets[-1] >= p.m:
        raise IndexError(f"Ω_y={targets} out of range for m={p.m}")
    top = p.top()
    p_b = float(p.probs[targets].max())
    radius = clamped_phi_inv_gap(p[top], p_b, sigma, clamp_eps)
    return RadiusResult(radius=radius, top_class=top, applicable=(top not in targets))
