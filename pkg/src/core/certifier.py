"""
Monte-Carlo certification of smoothed classifiers.

certify_cost_sensitive  two-phase sampling, dual bounds R1 / R2, cost check
certify_standard        the usual CERTIFY with a single lower bound (for Acc)
Certifier               thread-pool batch engine over a whole dataset
"""
import csv
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from src.config import DEFAULT_ALPHA, DEFAULT_N, DEFAULT_N0, DEFAULT_SAMPLE_BATCH, DEFAULT_SIGMA
from src.core.config_manager import ConfigError, write_preamble
from src.core.cost_model import omega as omega_of
from src.core.gauss_numerics import binom_lower, binom_upper
from src.core.radius_core import clamped_phi_inv, clamped_phi_inv_gap
from src.core.rng import StreamKey

logger = logging.getLogger(__name__)


class Status(Enum):
    CERTIFIED = "Certified"
    ABSTAIN = "Abstain"
    COST_VIOLATION = "CostViolation"
    MISCLASSIFIED = "Misclassified"


class Mode(Enum):
    STANDARD = "standard"
    COST_SENSITIVE = "cost_sensitive"


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = DEFAULT_SIGMA
    n0: int = DEFAULT_N0
    n: int = DEFAULT_N
    alpha: float = DEFAULT_ALPHA
    batch_size: int = DEFAULT_SAMPLE_BATCH

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma 必须为正数, 实际 {self.sigma}")
        if self.n0 < 1 or self.n < 1:
            raise ConfigError(f"n0 和 n 必须 >= 1, 实际 n0={self.n0}, n={self.n}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha 必须在 (0, 1) 内, 实际 {self.alpha}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size 必须 >= 1, 实际 {self.batch_size}")


class SampleCounts:
    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError(f"invalid counts {counts}")
        counts.setflags(write=False)
        self.counts = counts

    @property
    def n(self):
        return int(self.counts.sum())

    def top(self):
        return int(np.argmax(self.counts))

    def __getitem__(self, k):
        return int(self.counts[k])

    def __add__(self, other):
        return SampleCounts(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, SampleCounts) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"SampleCounts({self.counts.tolist()})"


@dataclass(frozen=True)
class CertificationOutcome:
    prediction: int
    r1: float
    r2: float
    radius: float
    status: Status
    counts0: SampleCounts
    counts: SampleCounts

    @property
    def certified(self):
        return self.status is Status.CERTIFIED


def sample_under_noise(f, x, n, sigma, rng, batch_size=DEFAULT_SAMPLE_BATCH):
    """counts[c] = #{i : f(x + δ_i) = c}, δ_i ~ N(0, σ²I), drawn in batches from rng."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    x = np.asarray(x, dtype=np.float64)
    counts = np.zeros(f.m, dtype=np.int64)
    remaining = int(n)
    while remaining > 0:
        this_batch = min(batch_size, remaining)
        remaining -= this_batch
        noisy = x[None, :] + sigma * rng.standard_normal((this_batch, x.size))
        counts += np.bincount(f.predict_batch(noisy), minlength=f.m)
    return SampleCounts(counts)


def draw_counts(f, x, cfg, key):
    """Selection and estimation counts from two disjoint streams of key."""
    counts0 = sample_under_noise(f, x, cfg.n0, cfg.sigma, key.child("selection").generator(), cfg.batch_size)
    counts = sample_under_noise(f, x, cfg.n, cfg.sigma, key.child("estimation").generator(), cfg.batch_size)
    return counts0, counts


def cost_sensitive_from_counts(counts0, counts, omega, cfg):
    targets = sorted(getattr(omega, "targets", omega))
    if not targets:
        raise ValueError("Ω_y 为空: 非敏感样本不做 cost-sensitive 认证")
    c_a = counts0.top()
    n, alpha, sigma = counts.n, cfg.alpha, cfg.sigma

    p_a = binom_lower(counts[c_a], n, 1.0 - alpha).value
    r1 = sigma * clamped_phi_inv(p_a)

    p_a2 = binom_lower(counts[c_a], n, 1.0 - alpha / 2.0).value
    per_target = 1.0 - alpha / (2.0 * len(targets))
    p_b = max(binom_upper(counts[k], n, per_target).value for k in targets)
    r2 = clamped_phi_inv_gap(p_a2, p_b, sigma)

    radius = max(r1, r2)
    if c_a in targets:
        status = Status.COST_VIOLATION
    elif radius > 0:
        status = Status.CERTIFIED
    else:
        status = Status.ABSTAIN
    return CertificationOutcome(prediction=c_a, r1=r1, r2=r2, radius=radius, status=status,
                                counts0=counts0, counts=counts)


def standard_from_counts(counts0, counts, y, cfg):
    c_a = counts0.top()
    p_a = binom_lower(counts[c_a], counts.n, 1.0 - cfg.alpha).value
    r1 = cfg.sigma * clamped_phi_inv(p_a)
    if r1 <= 0:
        status = Status.ABSTAIN
    elif c_a == y:
        status = Status.CERTIFIED
    else:
        status = Status.MISCLASSIFIED
    return CertificationOutcome(prediction=c_a, r1=r1, r2=float("-inf"), radius=r1, status=status,
                                counts0=counts0, counts=counts)


def certify_cost_sensitive(f, x, y, omega, cfg, key):
    """
    Certified cost-sensitive radius max(R1, R2) of the smoothed f at x.
    y is only carried for the record: the certificate is about avoiding Ω_y,
    not about predicting y.
    """
    if not len(getattr(omega, "targets", omega)):
        raise ValueError("Ω_y 为空: 非敏感样本不做 cost-sensitive 认证")
    counts0, counts = draw_counts(f, x, cfg, key)
    return cost_sensitive_from_counts(counts0, counts, omega, cfg)


def certify_standard(f, x, y, cfg, key):
    counts0, counts = draw_counts(f, x, cfg, key)
    return standard_from_counts(counts0, counts, y, cfg)


# ──────────────────────────────────────────────
#  批量认证
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class CertificationRecord:
    example_id: int
    label: int
    mode: Mode
    outcome: CertificationOutcome


class Certifier:
    """
    Certifies every example of a dataset. Each example draws its samples once
    from the stream keyed by (seed, "certify", example_id); the standard and
    the cost-sensitive certificate are both computed from those counts.
    Output order and values do not depend on the number of workers.
    """

    def __init__(self, classifier, cfg, seed, max_workers=1):
        self.classifier = classifier
        self.cfg = cfg
        self.seed = int(seed)
        self.max_workers = max(1, int(max_workers))
        self.lock = threading.Lock()

    def key_for(self, example_id):
        return StreamKey(self.seed, "certify", int(example_id))

    def certify_example(self, example_id, x, y, cost=None, modes=(Mode.STANDARD, Mode.COST_SENSITIVE)):
        counts0, counts = draw_counts(self.classifier, x, self.cfg, self.key_for(example_id))
        records = []
        if Mode.STANDARD in modes:
            records.append(CertificationRecord(example_id, int(y), Mode.STANDARD,
                                               standard_from_counts(counts0, counts, y, self.cfg)))
        if Mode.COST_SENSITIVE in modes and cost is not None:
            targets = omega_of(cost, y)
            if len(targets):
                records.append(CertificationRecord(example_id, int(y), Mode.COST_SENSITIVE,
                                                   cost_sensitive_from_counts(counts0, counts, targets, self.cfg)))
        return records

    def certify_dataset(self, dataset, cost=None, modes=(Mode.STANDARD, Mode.COST_SENSITIVE), callback=None):
        total = dataset.n
        results = [None] * total
        done = [0]

        def task(i):
            records = self.certify_example(i, dataset.features[i], int(dataset.labels[i]), cost, modes)
            with self.lock:
                results[i] = records
                done[0] += 1
                finished = done[0]
            if callback:
                callback(finished, total)

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = [executor.submit(task, i) for i in range(total)]
            for future in futures:
                future.result()  # re-raise worker failures

        return [r for records in results for r in records]


def record_row(record, cfg):
    o = record.outcome
    return {
        "example_id": record.example_id,
        "label": record.label,
        "mode": record.mode.value,
        "prediction": o.prediction,
        "status": o.status.value,
        "r1": o.r1,
        "r2": o.r2,
        "radius": o.radius,
        "n": cfg.n,
        "alpha": cfg.alpha,
        "sigma": cfg.sigma,
    }


RECORD_COLUMNS = ["example_id", "label", "mode", "prediction", "status", "r1", "r2", "radius", "n", "alpha", "sigma"]


def write_records_csv(records, cfg, path, preamble):
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_preamble(f, preamble)
        writer = csv.DictWriter(f, fieldnames=RECORD_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            row = record_row(record, cfg)
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _json_number(v):
    # standard-mode r2 is -inf; strict JSON has no infinities
    return v if not isinstance(v, float) or np.isfinite(v) else None


def write_records_jsonl(records, cfg, path, preamble):
    """First line: {"config", "seed", "smoothing"}; then one object per record."""
    with open(path, "w", encoding="utf-8") as f:
        head = {"config": preamble, "seed": preamble.get("seed"), "smoothing": smoothing_dict(cfg)}
        f.write(json.dumps(head, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n")
        for record in records:
            row = {k: _json_number(v) for k, v in record_row(record, cfg).items()}
            row["counts0"] = record.outcome.counts0.counts.tolist()
            row["counts"] = record.outcome.counts.counts.tolist()
            f.write(json.dumps(row, sort_keys=True, allow_nan=False) + "\n")


def smoothing_dict(cfg):
    return asdict(cfg)
