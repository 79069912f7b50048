"""
Datasets: CSV ingestion ("label,f0,...,f{d-1}", 0-based labels) and the
seeded synthetic fixtures.
"""
import csv
import re
from dataclasses import dataclass, field

import numpy as np

from src.config import SYNTHETIC_TEST_SIZE, SYNTHETIC_TRAIN_SIZE
from src.core.config_manager import write_preamble
from src.core.rng import keyed_rng


class DatasetError(ValueError):
    """Malformed dataset file or invalid synthetic dataset name."""


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    m: int
    name: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DatasetError(f"features 需要 (n, d) 且 n >= 1, 实际形状 {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetError(f"labels 形状 {self.labels.shape} 与 features {self.features.shape} 不一致")
        if np.any(np.isnan(self.features)):
            raise DatasetError("features 含有 NaN")
        if self.labels.min() < 0 or self.labels.max() >= self.m:
            raise DatasetError(f"label 超出范围 [0, {self.m})")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.m, self.name,
                       dict(self.provenance, subset=len(indices)))


def load_dataset(path, m=None):
    """
    Parse a dataset CSV. m defaults to max(label) + 1.
    Errors name the offending 1-based data row.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    except OSError as e:
        raise DatasetError(f"无法读取数据集 {path}: {e}") from e
    if not rows:
        raise DatasetError(f"{path}: 空文件")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header[0] != "label" or header[1:] != [f"f{i}" for i in range(d)]:
        raise DatasetError(f"{path}: 表头必须是 label,f0,...,f{{d-1}}, 实际 {','.join(header)}")
    if len(rows) < 2:
        raise DatasetError(f"{path}: 没有数据行")

    features = np.empty((len(rows) - 1, d), dtype=np.float64)
    labels = np.empty(len(rows) - 1, dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        if len(row) != d + 1:
            raise DatasetError(f"{path}: 第 {i + 1} 行有 {len(row)} 列, 期望 {d + 1}")
        try:
            labels[i] = int(row[0])
            features[i] = [float(v) for v in row[1:]]
        except ValueError as e:
            raise DatasetError(f"{path}: 第 {i + 1} 行无法解析: {e}") from e
        if np.any(np.isnan(features[i])):
            raise DatasetError(f"{path}: 第 {i + 1} 行含有 NaN")
        if labels[i] < 0 or (m is not None and labels[i] >= m):
            raise DatasetError(f"{path}: 第 {i + 1} 行 label={labels[i]} 超出范围")
    m = int(labels.max()) + 1 if m is None else int(m)
    return Dataset(features, labels, m, name=str(path), provenance={"path": str(path)})


def save_dataset(dataset, path, preamble=None):
    with open(path, "w", encoding="utf-8", newline="") as f:
        if preamble is not None:
            write_preamble(f, preamble)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["label"] + [f"f{i}" for i in range(dataset.d)])
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])


_BLOBS_RE = re.compile(r"^blobs-(\d+)$")


def blob_centres(m, radius=2.0):
    angles = 2.0 * np.pi * np.arange(m) / m
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gen_synthetic(name, seed, split="train", size=None, spread=0.7):
    """
    "blobs-<m>": m isotropic Gaussian classes in 2-D with centres on a circle
    of radius 2. Train and test come from independent keyed streams.
    """
    match = _BLOBS_RE.match(name)
    if not match or int(match.group(1)) < 2:
        raise DatasetError(f"未知的合成数据集 {name!r} (支持 blobs-<m>, m >= 2)")
    if split not in ("train", "test"):
        raise DatasetError(f"split 必须是 train 或 test, 实际 {split!r}")
    m = int(match.group(1))
    if size is None:
        size = SYNTHETIC_TRAIN_SIZE if split == "train" else SYNTHETIC_TEST_SIZE
    rng = keyed_rng(seed, "synthetic", name, split)
    labels = np.arange(size) % m
    rng.shuffle(labels)
    features = blob_centres(m)[labels] + spread * rng.standard_normal((size, 2))
    return Dataset(features, labels, m, name=f"{name}:{split}",
                   provenance={"synthetic": name, "seed": int(seed), "split": split})
