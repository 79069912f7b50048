import json
import os
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np


class CostMatrixError(ValueError):
    """Malformed cost matrix file or shorthand, or a matrix that breaks the {0,1}/zero-diagonal rules."""


class RowKind(Enum):
    NON_SENSITIVE = "NonSensitive"
    SEEDWISE = "Seedwise"
    PAIRWISE = "Pairwise"


@dataclass(frozen=True)
class SensitiveTargets:
    seed: int
    targets: frozenset

    def __len__(self):
        return len(self.targets)

    def __contains__(self, k):
        return k in self.targets

    def sorted(self):
        return sorted(self.targets)


class CostMatrix:
    """
    Dense m×m binary cost matrix; entries[j][k] = 1 means predicting k for an
    example of seed class j incurs a cost. Labels are 0-based.
    Immutable after construction.
    """

    def __init__(self, entries):
        arr = np.asarray(entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise CostMatrixError(f"代价矩阵必须是 m×m 方阵, 实际形状 {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise CostMatrixError("代价矩阵只能包含 0/1")
        arr = arr.astype(np.int8)
        diag = np.flatnonzero(np.diag(arr))
        if diag.size:
            raise CostMatrixError(f"代价矩阵对角线必须为 0, 第 {diag.tolist()} 行非零")
        arr.setflags(write=False)
        self._entries = arr
        self._omegas = tuple(
            SensitiveTargets(seed=j, targets=frozenset(int(k) for k in np.flatnonzero(arr[j])))
            for j in range(arr.shape[0])
        )

    @property
    def m(self):
        return self._entries.shape[0]

    @property
    def entries(self):
        return self._entries

    def __eq__(self, other):
        return isinstance(other, CostMatrix) and np.array_equal(self._entries, other._entries)

    def __repr__(self):
        return f"CostMatrix(m={self.m}, nonzero={int(self._entries.sum())})"

    # ── constructors ──

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros((m, m), dtype=np.int8))

    @classmethod
    def overall(cls, m):
        return cls(1 - np.eye(m, dtype=np.int8))

    @classmethod
    def seedwise(cls, m, seed):
        _check_label(seed, m)
        arr = np.zeros((m, m), dtype=np.int8)
        arr[seed] = 1
        arr[seed, seed] = 0
        return cls(arr)

    @classmethod
    def pairwise(cls, m, seed, targets):
        _check_label(seed, m)
        arr = np.zeros((m, m), dtype=np.int8)
        for k in targets:
            _check_label(k, m)
            if k == seed:
                raise CostMatrixError(f"pairwise 目标不能等于种子类 {seed}")
            arr[seed, k] = 1
        return cls(arr)

    def to_dict(self):
        return {"m": self.m, "entries": self._entries.astype(int).tolist()}


def _check_label(label, m):
    if not 0 <= int(label) < m:
        raise IndexError(f"label {label} out of range for m={m}")


def omega(matrix, seed):
    _check_label(seed, matrix.m)
    return matrix._omegas[int(seed)]


def classify_row(matrix, seed):
    size = len(omega(matrix, seed))
    if size == 0:
        return RowKind.NON_SENSITIVE
    if size == matrix.m - 1:
        return RowKind.SEEDWISE
    return RowKind.PAIRWISE


def omega_mask(matrix, labels):
    """Boolean (n, m) array: row i marks Ω_{labels[i]}."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= matrix.m):
        raise IndexError(f"labels out of range for m={matrix.m}")
    return matrix.entries[labels].astype(bool)


def sensitive_subset(matrix, dataset):
    """
    Split example indices into (S^s, complement).
    S^s holds examples whose label has at least one sensitive target.
    """
    labels = np.asarray(dataset.labels, dtype=np.int64)
    mask = omega_mask(matrix, labels).any(axis=1)
    return np.flatnonzero(mask), np.flatnonzero(~mask)


# ──────────────────────────────────────────────
#  文件 / 简写解析
# ──────────────────────────────────────────────

_SEEDWISE_RE = re.compile(r"^seedwise:(\d+)$")
_PAIRWISE_RE = re.compile(r"^pairwise:(\d+)->(\d+(?:,\d+)*)$")


def load_cost_matrix(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        raise CostMatrixError(f"无法读取代价矩阵文件 {path}: {e}") from e
    if not isinstance(data, dict) or "m" not in data or "entries" not in data:
        raise CostMatrixError(f"{path}: 需要字段 'm' 和 'entries'")
    matrix = CostMatrix(data["entries"])
    if matrix.m != data["m"]:
        raise CostMatrixError(f"{path}: m={data['m']} 与 entries 大小 {matrix.m} 不一致")
    return matrix


def save_cost_matrix(matrix, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(matrix.to_dict(), f, indent=2)


def parse_cost_spec(spec, m=None):
    """
    Accepts "seedwise:3", "pairwise:3->2,4,5", "zero", "overall" (all need m)
    or a path to a JSON cost matrix file.
    """
    spec = spec.strip()
    shorthand = spec in ("zero", "overall") or _SEEDWISE_RE.match(spec) or _PAIRWISE_RE.match(spec)
    if not shorthand:
        if os.path.exists(spec):
            matrix = load_cost_matrix(spec)
            if m is not None and matrix.m != m:
                raise CostMatrixError(f"代价矩阵 m={matrix.m} 与类别数 {m} 不一致")
            return matrix
        raise CostMatrixError(f"无法识别的代价矩阵: {spec!r}")
    if m is None:
        raise CostMatrixError(f"简写 {spec!r} 需要类别数 m")
    try:
        if spec == "zero":
            return CostMatrix.zeros(m)
        if spec == "overall":
            return CostMatrix.overall(m)
        match = _SEEDWISE_RE.match(spec)
        if match:
            return CostMatrix.seedwise(m, int(match.group(1)))
        match = _PAIRWISE_RE.match(spec)
        targets = [int(t) for t in match.group(2).split(",")]
        return CostMatrix.pairwise(m, int(match.group(1)), targets)
    except IndexError as e:
        raise CostMatrixError(f"{spec!r}: {e}") from e
