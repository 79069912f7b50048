"""
Training objectives for LogitModel base classifiers.

cohen     Gaussian-augmented cross-entropy
cohen-r   the same with sensitive examples reweighted by alpha_w
macer     I1 + λ·I2 (radius margin on all examples, single γ)
cs-macer  I1 + λ·I2 + λ·I3, where I3 is a margin on the cost-sensitive radius of
          sensitive examples over [−γ2, γ2]

All objectives run on soft smoothed probabilities ĥ (mean softmax over k
keyed Gaussian draws), so every term is differentiable in the model parameters.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum

import numpy as np
import torch
import torch.nn.functional as F

from src.config import (DEFAULT_ALPHA_W, DEFAULT_BATCH_SIZE, DEFAULT_BETA, DEFAULT_EPOCHS, DEFAULT_GAMMA1,
                        DEFAULT_GAMMA2, DEFAULT_HIDDEN, DEFAULT_K_SAMPLES, DEFAULT_LAMBDA, DEFAULT_LR,
                        DEFAULT_SEED, DEFAULT_SIGMA, SOFT_CLAMP_EPS)
from src.core.base_classifiers import MlpClassifier, soft_smoothed_probs
from src.core.config_manager import ConfigError, write_preamble
from src.core.cost_model import omega_mask
from src.core.rng import keyed_normals, keyed_rng

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Non-finite loss during training."""


class Objective(Enum):
    COHEN = "cohen"
    COHEN_R = "cohen-r"
    MACER = "macer"
    CS_MACER = "cs-macer"


@dataclass(frozen=True)
class TrainConfig:
    objective: Objective = Objective.CS_MACER
    sigma: float = DEFAULT_SIGMA
    lam: float = DEFAULT_LAMBDA
    gamma1: float = DEFAULT_GAMMA1
    gamma2: float = DEFAULT_GAMMA2
    alpha_w: float = DEFAULT_ALPHA_W
    k_samples: int = DEFAULT_K_SAMPLES
    beta: float = DEFAULT_BETA
    lr: float = DEFAULT_LR
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = DEFAULT_SEED
    hidden: int = DEFAULT_HIDDEN
    smooth_max: bool = True

    def __post_init__(self):
        if not isinstance(self.objective, Objective):
            try:
                object.__setattr__(self, "objective", Objective(self.objective))
            except ValueError as e:
                choices = ", ".join(o.value for o in Objective)
                raise ConfigError(f"未知训练目标 {self.objective!r} (可选: {choices})") from e
        if not self.sigma > 0:
            raise ConfigError(f"sigma 必须为正数, 实际 {self.sigma}")
        if not self.lam > 0:
            raise ConfigError(f"lambda 必须为正数, 实际 {self.lam}")
        if self.alpha_w < 1:
            raise ConfigError(f"alpha_w 必须 >= 1, 实际 {self.alpha_w}")
        if self.objective is Objective.CS_MACER and not self.gamma2 > self.gamma1 > 0:
            raise ConfigError(f"cs-macer 需要 gamma2 > gamma1 > 0, 实际 gamma1={self.gamma1}, gamma2={self.gamma2}")
        if self.objective is Objective.MACER and not self.gamma1 > 0:
            raise ConfigError(f"macer 需要 gamma1 > 0, 实际 {self.gamma1}")
        if self.k_samples < 1 or self.batch_size < 1 or self.epochs < 0 or self.hidden < 1:
            raise ConfigError("k_samples, batch_size, hidden 必须 >= 1, epochs >= 0")
        if not self.beta > 0 or self.lr < 0:
            raise ConfigError(f"beta 必须为正数且 lr >= 0, 实际 beta={self.beta}, lr={self.lr}")

    def to_dict(self):
        d = asdict(self)
        d["objective"] = self.objective.value
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"未知的训练配置字段: {unknown}")
        return cls(**data)


@dataclass
class LossBreakdown:
    i1: torch.Tensor
    i2: torch.Tensor
    i3: torch.Tensor
    total: torch.Tensor

    def floats(self):
        return {name: getattr(self, name).detach().item() for name in ("i1", "i2", "i3", "total")}


# ──────────────────────────────────────────────
#  Margin loss and soft radii
# ──────────────────────────────────────────────

def margin_loss(r, l, u):
    """max{u − r, 0} · 1(l ≤ r ≤ u)."""
    if l > u:
        raise ValueError(f"margin_loss 需要 l <= u, 实际 l={l}, u={u}")
    return max(u - r, 0.0) if l <= r <= u else 0.0


def margin_loss_tensor(r, l, u):
    # the gate is a constant per example: no gradient flows through the indicator
    if l > u:
        raise ValueError(f"margin_loss 需要 l <= u, 实际 l={l}, u={u}")
    gate = ((r >= l) & (r <= u)).detach().to(r.dtype)
    return torch.clamp(u - r, min=0.0) * gate


def _phi_inv(p, clamp_eps=SOFT_CLAMP_EPS):
    p = torch.clamp(p, clamp_eps, 1.0 - clamp_eps)
    return math.sqrt(2.0) * torch.erfinv(2.0 * p - 1.0)


def _set_max(z, mask, beta, smooth):
    """(Smooth) max of z over the entries selected by mask, row-wise; every row must select something."""
    masked = z.masked_fill(~mask, float("-inf"))
    if smooth:
        return torch.logsumexp(beta * masked, dim=-1) / beta
    return masked.max(dim=-1).values


def radius_standard_from_probs(probs, labels, sigma, clamp_eps=SOFT_CLAMP_EPS):
    """(σ/2)(Φ⁻¹(ĥ_y) − Φ⁻¹(max_{k≠y} ĥ_k)), signed."""
    z = _phi_inv(probs, clamp_eps)
    z_y = z.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    others = z.scatter(-1, labels.unsqueeze(-1), float("-inf"))
    return sigma / 2.0 * (z_y - others.max(dim=-1).values)


def radius_cost_sensitive_from_probs(probs, mask, sigma, beta=DEFAULT_BETA, smooth_max=True,
                                     clamp_eps=SOFT_CLAMP_EPS):
    """
    (σ/2)(Φ⁻¹(max_{k∉Ω} ĥ_k) − Φ⁻¹(max_{k∈Ω} ĥ_k)), signed.
    Equals the cost-sensitive radius whenever the top class is cost-free and is
    negative when the top class lies in Ω. Maxima are taken on the Φ⁻¹ scale,
    optionally relaxed to log-sum-exp with temperature 1/beta.
    """
    z = _phi_inv(probs, clamp_eps)
    mask = mask.bool()
    return sigma / 2.0 * (_set_max(z, ~mask, beta, smooth_max) - _set_max(z, mask, beta, smooth_max))


def _targets_mask(omega, m):
    if isinstance(omega, torch.Tensor):
        return omega.bool()
    mask = torch.zeros(m, dtype=torch.bool)
    mask[sorted(getattr(omega, "targets", omega))] = True
    return mask


def soft_radius_standard(model, x, y, sigma, k_samples, rng=None, noise=None, clamp_eps=SOFT_CLAMP_EPS):
    probs = soft_smoothed_probs(model, x, sigma, k_samples, rng=rng, noise=noise)
    labels = torch.as_tensor(y, dtype=torch.int64)
    return radius_standard_from_probs(probs, labels, sigma, clamp_eps)


def soft_radius_cost_sensitive(model, x, omega, sigma, k_samples, rng=None, noise=None, smooth_max=True,
                               clamp_eps=SOFT_CLAMP_EPS):
    mask = _targets_mask(omega, model.m)
    if not bool(mask.any()):
        raise ValueError("Ω_y 为空: 非敏感样本没有 cost-sensitive 半径")
    probs = soft_smoothed_probs(model, x, sigma, k_samples, rng=rng, noise=noise)
    return radius_cost_sensitive_from_probs(probs, mask.expand_as(probs), sigma, model.beta, smooth_max, clamp_eps)


# ──────────────────────────────────────────────
#  Objectives
# ──────────────────────────────────────────────

def cs_macer_terms(probs, labels, mask, sigma, lam, gamma1, gamma2, beta=DEFAULT_BETA, smooth_max=True,
                   with_i3=True):
    """LossBreakdown from soft probabilities (B, m), labels (B,) and the Ω mask (B, m)."""
    labels = torch.as_tensor(labels, dtype=torch.int64)
    mask = torch.as_tensor(mask).bool()
    i1 = F.nll_loss(torch.log(probs.clamp_min(1e-12)), labels)
    i2 = margin_loss_tensor(radius_standard_from_probs(probs, labels, sigma), 0.0, gamma1).mean()
    sensitive = mask.any(dim=1)
    if with_i3 and bool(sensitive.any()):
        r_cs = radius_cost_sensitive_from_probs(probs[sensitive], mask[sensitive], sigma, beta, smooth_max)
        i3 = margin_loss_tensor(r_cs, -gamma2, gamma2).mean()
    else:
        i3 = torch.zeros((), dtype=probs.dtype)
    return LossBreakdown(i1=i1, i2=i2, i3=i3, total=i1 + lam * i2 + lam * i3)


def loss_cost_sensitive_macer(model, features, labels, cost, cfg, noise):
    probs = soft_smoothed_probs(model, features, cfg.sigma, noise=noise)
    mask = torch.from_numpy(omega_mask(cost, np.asarray(labels)))
    return cs_macer_terms(probs, labels, mask, cfg.sigma, cfg.lam, cfg.gamma1, cfg.gamma2, model.beta,
                          cfg.smooth_max)


def loss_macer(model, features, labels, cost, cfg, noise):
    probs = soft_smoothed_probs(model, features, cfg.sigma, noise=noise)
    mask = torch.zeros(probs.shape, dtype=torch.bool)
    return cs_macer_terms(probs, labels, mask, cfg.sigma, cfg.lam, cfg.gamma1, cfg.gamma1, model.beta,
                          cfg.smooth_max, with_i3=False)


def cohen_r_terms(logits, labels, sensitive, alpha_w):
    """(Σ_non CE + α_w · Σ_sens CE) / B; α_w = 1 is the plain Gaussian-augmentation loss."""
    labels = torch.as_tensor(labels, dtype=torch.int64)
    ce = F.cross_entropy(logits, labels, reduction="none")
    weights = torch.where(torch.as_tensor(sensitive).bool(),
                          torch.full_like(ce, float(alpha_w)), torch.ones_like(ce))
    total = (weights * ce).mean()
    zero = torch.zeros((), dtype=total.dtype)
    return LossBreakdown(i1=total, i2=zero, i3=zero, total=total)


def loss_cohen_r(model, features, labels, cost, cfg, noise, alpha_w=None):
    """Cross-entropy of f on one Gaussian-noised copy per example (the first keyed draw)."""
    features = torch.as_tensor(features, dtype=torch.float64)
    noise = torch.as_tensor(noise, dtype=torch.float64)
    if noise.dim() == 3:
        noise = noise[:, 0, :]
    logits = model(features + cfg.sigma * noise)
    sensitive = omega_mask(cost, np.asarray(labels)).any(axis=1)
    return cohen_r_terms(logits, labels, torch.from_numpy(sensitive),
                         cfg.alpha_w if alpha_w is None else alpha_w)


def loss_cohen(model, features, labels, cost, cfg, noise):
    return loss_cohen_r(model, features, labels, cost, cfg, noise, alpha_w=1.0)


_LOSSES = {
    Objective.COHEN: loss_cohen,
    Objective.COHEN_R: loss_cohen_r,
    Objective.MACER: loss_macer,
    Objective.CS_MACER: loss_cost_sensitive_macer,
}


def objective_loss(objective):
    return _LOSSES[Objective(objective)]


# ──────────────────────────────────────────────
#  Training loop
# ──────────────────────────────────────────────

@dataclass
class TrainResult:
    model: object
    history: list


METRIC_COLUMNS = ["epoch", "i1", "i2", "i3", "total", "train_acc"]


def train(model, dataset, cost, cfg, callback=None):
    """
    Minibatch SGD on the configured objective. Shuffling and noise come from
    keyed streams (seed, epoch, example index), so two runs with the same
    seed follow the same parameter trajectory.
    """
    if dataset.d != model.dim or dataset.m != model.m or cost.m != model.m:
        raise ValueError(f"维度不一致: dataset (d={dataset.d}, m={dataset.m}), model (d={model.dim}, m={model.m}), "
                         f"cost m={cost.m}")
    loss_fn = objective_loss(cfg.objective)
    draws = 1 if cfg.objective in (Objective.COHEN, Objective.COHEN_R) else cfg.k_samples
    X = torch.from_numpy(dataset.features)
    labels = dataset.labels
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr)
    history = []

    for epoch in range(cfg.epochs):
        order = keyed_rng(cfg.seed, "shuffle", epoch).permutation(dataset.n)
        sums = {"i1": 0.0, "i2": 0.0, "i3": 0.0, "total": 0.0}
        for batch_idx, start in enumerate(range(0, dataset.n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            noise = keyed_normals(cfg.seed, "train-noise", epoch, idx, draws, dataset.d)
            breakdown = loss_fn(model, X[idx], labels[idx], cost, cfg, noise)
            if not torch.isfinite(breakdown.total):
                raise TrainingDivergedError(
                    f"epoch {epoch} batch {batch_idx}: 损失不是有限值 ({breakdown.floats()}), 请尝试减小 lr")
            optimizer.zero_grad()
            breakdown.total.backward()
            optimizer.step()
            for key, value in breakdown.floats().items():
                sums[key] += value * len(idx)

        row = {"epoch": epoch + 1}
        row.update({key: value / dataset.n for key, value in sums.items()})
        row["train_acc"] = float(np.mean(MlpClassifier(model).predict_batch(dataset.features) == labels))
        history.append(row)
        logger.debug("epoch %d/%d total=%.6f train_acc=%.4f", epoch + 1, cfg.epochs, row["total"], row["train_acc"])
        if callback:
            callback(epoch + 1, cfg.epochs, row)

    if history:
        logger.info("training finished: objective=%s epochs=%d train_acc=%.4f",
                    cfg.objective.value, cfg.epochs, history[-1]["train_acc"])
    return TrainResult(model=model, history=history)


def write_metrics_csv(history, path, preamble):
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_preamble(f, preamble)
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
