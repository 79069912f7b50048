"""
Base classifiers f: R^d → [m].

- IntervalClassifier: 1-D partition of the first coordinate. Its smoothed
  probabilities have a closed form, so it is the ground truth every Monte-Carlo
  bound is checked against.
- LinearClassifier / TableClassifier: simple hard predictors.
- LogitModel: one-hidden-layer tanh perceptron (torch), trained by the
  trainer; MlpClassifier is its hard argmax view used during certification.

Model files: one JSON header line {"kind", "version", "shapes", "beta", ...}
followed by one base64 line per parameter block (row-major little-endian float64).
"""
import base64
import binascii
import json
import logging
from abc import ABC, abstractmethod

import numpy as np
import torch
import torch.nn as nn
from scipy.special import ndtr

from src.config import DEFAULT_BETA, DEFAULT_HIDDEN, MODEL_FORMAT_VERSION
from src.core.radius_core import ProbVector, cost_sensitive_radius
from src.core.rng import keyed_rng

logger = logging.getLogger(__name__)


class ModelFormatError(ValueError):
    """Model file is malformed, truncated, of an unknown kind or of another format version."""


class BaseClassifier(ABC):
    kind = None

    def __init__(self, m, dim):
        self.m = int(m)
        self.dim = int(dim)

    def _check_dim(self, X):
        if X.shape[-1] != self.dim:
            raise ValueError(f"输入维度 {X.shape[-1]} 与分类器维度 {self.dim} 不一致")

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"predict 需要一维输入, 实际形状 {x.shape}")
        return int(self.predict_batch(x[None, :])[0])

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"predict_batch 需要 (n, d) 输入, 实际形状 {X.shape}")
        self._check_dim(X)
        return self._predict_batch(X)

    @abstractmethod
    def _predict_batch(self, X):
        ...

    @abstractmethod
    def blocks(self):
        """Parameter arrays in file order."""

    def header(self):
        return {"kind": self.kind, "version": MODEL_FORMAT_VERSION, "m": self.m, "dim": self.dim}


class IntervalClassifier(BaseClassifier):
    kind = "interval"

    def __init__(self, thresholds, dim=1):
        t = np.asarray(thresholds, dtype=np.float64).ravel()
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ValueError(f"thresholds 必须是严格递增的有限实数: {t.tolist()}")
        super().__init__(m=t.size + 1, dim=dim)
        t.setflags(write=False)
        self.thresholds = t

    def _predict_batch(self, X):
        # class j on [t_j, t_{j+1})
        return np.searchsorted(self.thresholds, X[:, 0], side="right").astype(np.int64)

    def blocks(self):
        return []

    def header(self):
        h = super().header()
        h["thresholds"] = self.thresholds.tolist()
        return h


class LinearClassifier(BaseClassifier):
    kind = "linear"

    def __init__(self, weights, bias):
        W = np.asarray(weights, dtype=np.float64)
        b = np.asarray(bias, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"形状不匹配: W {W.shape}, b {b.shape}")
        super().__init__(m=W.shape[0], dim=W.shape[1])
        self.weights, self.bias = W, b

    def _predict_batch(self, X):
        return np.argmax(X @ self.weights.T + self.bias, axis=1).astype(np.int64)

    def blocks(self):
        return [self.weights, self.bias]


class TableClassifier(BaseClassifier):
    """Stored per-input labels; an input that is not in the table takes the label of its nearest entry."""

    kind = "table"

    def __init__(self, inputs, labels, m):
        X = np.asarray(inputs, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],) or X.shape[0] < 1:
            raise ValueError(f"形状不匹配: inputs {X.shape}, labels {y.shape}")
        if y.min() < 0 or y.max() >= m:
            raise ValueError(f"labels out of range for m={m}")
        super().__init__(m=m, dim=X.shape[1])
        self.inputs, self.labels = X, y

    def _predict_batch(self, X):
        d2 = ((X[:, None, :] - self.inputs[None, :, :]) ** 2).sum(axis=2)
        return self.labels[np.argmin(d2, axis=1)]

    def blocks(self):
        return [self.inputs, self.labels.astype(np.float64)]


class LogitModel(nn.Module):
    """d → hidden (tanh) → m logits, float64; beta is the softmax temperature used for soft smoothing."""

    def __init__(self, dim, m, hidden=DEFAULT_HIDDEN, beta=DEFAULT_BETA, seed=None):
        super().__init__()
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.dim, self.m, self.hidden, self.beta = int(dim), int(m), int(hidden), float(beta)
        self.fc1 = nn.Linear(self.dim, self.hidden, dtype=torch.float64)
        self.fc2 = nn.Linear(self.hidden, self.m, dtype=torch.float64)
        if seed is not None:
            self.reset_parameters(seed)

    def reset_parameters(self, seed):
        rng = keyed_rng(seed, "model-init")
        with torch.no_grad():
            self.fc1.weight.copy_(torch.from_numpy(rng.normal(0.0, 1.0 / np.sqrt(self.dim), (self.hidden, self.dim))))
            self.fc1.bias.zero_()
            self.fc2.weight.copy_(torch.from_numpy(rng.normal(0.0, 1.0 / np.sqrt(self.hidden), (self.m, self.hidden))))
            self.fc2.bias.zero_()

    def forward(self, x):
        return self.fc2(torch.tanh(self.fc1(x)))

    def blocks(self):
        return [p.detach().cpu().numpy() for p in (self.fc1.weight, self.fc1.bias, self.fc2.weight, self.fc2.bias)]


class MlpClassifier(BaseClassifier):
    kind = "mlp"

    def __init__(self, model):
        super().__init__(m=model.m, dim=model.dim)
        self.model = model

    def _predict_batch(self, X):
        with torch.no_grad():
            logits = self.model(torch.from_numpy(X)).numpy()
        return np.argmax(logits, axis=1).astype(np.int64)

    def blocks(self):
        return self.model.blocks()

    def header(self):
        h = super().header()
        h.update({"hidden": self.model.hidden, "beta": self.model.beta})
        return h


def as_classifier(model):
    return MlpClassifier(model) if isinstance(model, LogitModel) else model


# ──────────────────────────────────────────────
#  Smoothed probabilities
# ──────────────────────────────────────────────

def exact_smoothed_probs(c, x, sigma):
    if not isinstance(c, IntervalClassifier):
        raise TypeError("exact smoothed probabilities need an IntervalClassifier")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x1 = float(np.asarray(x, dtype=np.float64).ravel()[0])
    edges = np.concatenate(([-np.inf], c.thresholds, [np.inf]))
    cdf = ndtr((edges - x1) / sigma)
    # 右尾用 survival 形式相减, 避免 1 - 1 的抵消误差
    sf = ndtr((x1 - edges) / sigma)
    probs = np.where(edges[1:] > x1, sf[:-1] - sf[1:], cdf[1:] - cdf[:-1])
    return ProbVector(np.clip(probs, 0.0, 1.0), tol=1e-12)


def exact_certified_radius_interval(c, x, y, sigma, omega):
    """Ground-truth cost-sensitive radius of the smoothed interval classifier (y kept for the record)."""
    if not 0 <= y < c.m:
        raise IndexError(f"label {y} out of range for m={c.m}")
    return cost_sensitive_radius(exact_smoothed_probs(c, x, sigma), omega, sigma)


def soft_smoothed_probs(model, x, sigma, k_samples=16, rng=None, noise=None):
    """
    Differentiable surrogate of h(x): mean over k Gaussian draws of
    softmax(beta · logits(x + σδ)).

    x: (d,) or (B, d). noise: standard normals of shape (k, d) or (B, k, d);
    drawn from rng when not given.
    """
    x = torch.as_tensor(x, dtype=torch.float64)
    if noise is None:
        if rng is None:
            raise ValueError("soft_smoothed_probs 需要 rng 或 noise")
        if k_samples < 1:
            raise ValueError(f"k_samples must be >= 1, got {k_samples}")
        noise = rng.standard_normal(tuple(x.shape[:-1]) + (k_samples, x.shape[-1]))
    noise = torch.as_tensor(noise, dtype=torch.float64)
    noisy = x.unsqueeze(-2) + sigma * noise
    return torch.softmax(model.beta * model(noisy), dim=-1).mean(dim=-2)


# ──────────────────────────────────────────────
#  模型文件读写
# ──────────────────────────────────────────────

def _encode_block(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode_block(line, shape, idx):
    try:
        raw = base64.b64decode(line.strip(), validate=True)
    except (binascii.Error, ValueError) as e:
        raise ModelFormatError(f"参数块 {idx} 不是合法的 base64: {e}") from e
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise ModelFormatError(f"参数块 {idx} 长度 {len(raw)} 字节, 期望 {expected} (形状 {shape})")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def save_model(model, path, config=None):
    c = as_classifier(model)
    blocks = c.blocks()
    header = c.header()
    if config is not None:
        header["config"] = config
    header["shapes"] = [list(np.shape(b)) for b in blocks]
    header.setdefault("beta", None)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for b in blocks:
            f.write(_encode_block(b) + "\n")
    logger.debug("saved %s model to %s", c.kind, path)


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
    except OSError as e:
        raise ModelFormatError(f"无法读取模型文件 {path}: {e}") from e
    if not lines:
        raise ModelFormatError(f"{path}: 空文件")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: 头部不是合法 JSON: {e}") from e
    if not isinstance(header, dict) or "kind" not in header or "version" not in header:
        raise ModelFormatError(f"{path}: 头部缺少 kind/version")
    if header["version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: 模型格式版本 {header['version']} 不受支持 (当前版本 {MODEL_FORMAT_VERSION})")
    shapes = [tuple(s) for s in header.get("shapes", [])]
    if len(lines) - 1 != len(shapes):
        raise ModelFormatError(f"{path}: 文件被截断, 需要 {len(shapes)} 个参数块, 实际 {len(lines) - 1}")
    blocks = [_decode_block(line, shape, i) for i, (line, shape) in enumerate(zip(lines[1:], shapes))]

    kind = header["kind"]
    try:
        if kind == "interval":
            return IntervalClassifier(header["thresholds"], dim=header.get("dim", 1))
        if kind == "linear":
            return LinearClassifier(*blocks)
        if kind == "table":
            inputs, labels = blocks
            return TableClassifier(inputs, labels.astype(np.int64), m=header["m"])
        if kind == "mlp":
            w1, b1, w2, b2 = blocks
            model = LogitModel(dim=w1.shape[1], m=w2.shape[0], hidden=w1.shape[0], beta=header["beta"])
            if w2.shape[1] != w1.shape[0] or b1.shape != (w1.shape[0],) or b2.shape != (w2.shape[0],):
                raise ModelFormatError(f"{path}: mlp 参数形状不一致 {shapes}")
            with torch.no_grad():
                for param, block in zip((model.fc1.weight, model.fc1.bias, model.fc2.weight, model.fc2.bias), blocks):
                    param.copy_(torch.from_numpy(block))
            return MlpClassifier(model)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: {kind} 模型参数无效: {e}") from e
    raise ModelFormatError(f"{path}: 未知模型类型 {kind!r}")
