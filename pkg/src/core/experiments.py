"""
Desk-scale experiment drivers on the synthetic blobs benchmark:
method comparison, Cohen-R α_w trade-off, cs-macer (γ1, γ2) sweep and the
R1 vs max(R1, R2) comparison for growing Ω.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from src.core.base_classifiers import LogitModel, MlpClassifier
from src.core.certifier import Certifier, cost_sensitive_from_counts, draw_counts
from src.core.config_manager import write_preamble
from src.core.eval_harness import UNDEFINED, build_report, rob_cost_sensitive
from src.core.rng import keyed_rng
from src.core.trainer import train

logger = logging.getLogger(__name__)

METRICS = ("acc", "rob_cs", "rob_cs_std", "rob_non_std")


def train_and_evaluate(train_set, test_set, cost, train_cfg, smoothing, epsilon, threads=1, callback=None):
    """Train a fresh LogitModel under train_cfg and certify the test set with the same seed."""
    model = LogitModel(train_set.d, train_set.m, hidden=train_cfg.hidden, beta=train_cfg.beta,
                       seed=train_cfg.seed)
    train(model, train_set, cost, train_cfg, callback=callback)
    certifier = Certifier(MlpClassifier(model), smoothing, train_cfg.seed, max_workers=threads)
    records = certifier.certify_dataset(test_set, cost)
    return build_report(records, cost, epsilon)


def _metric_row(report, **keys):
    row = dict(keys)
    for name in METRICS:
        row[name] = getattr(report, name)
    return row


def compare_methods(train_set, test_set, cost, objectives, seeds, base_cfg, smoothing, epsilon,
                    threads=1, callback=None):
    rows = []
    for objective in objectives:
        for seed in seeds:
            cfg = replace(base_cfg, objective=objective, seed=int(seed))
            report = train_and_evaluate(train_set, test_set, cost, cfg, smoothing, epsilon, threads)
            rows.append(_metric_row(report, objective=cfg.objective.value, seed=int(seed)))
            logger.info("%s seed=%d acc=%.4f rob_cs=%s", cfg.objective.value, seed, report.acc, report.rob_cs)
            if callback:
                callback(len(rows), len(objectives) * len(seeds), rows[-1])
    return rows


def median_by(rows, key, metrics=METRICS):
    """Median of each metric per distinct value of key, in first-seen order. Undefined values are skipped."""
    groups = {}
    for row in rows:
        groups.setdefault(row[key], []).append(row)
    summary = []
    for value, group in groups.items():
        out = {key: value}
        for name in metrics:
            values = [r[name] for r in group if r[name] is not None]
            out[name] = float(np.median(values)) if values else None
        summary.append(out)
    return summary


def tradeoff_sweep(train_set, test_set, cost, base_cfg, alpha_ws, seeds, smoothing, epsilon, threads=1,
                   callback=None):
    """Cohen-R for every α_w and seed: rows (alpha_w, seed, acc, rob_cs)."""
    rows = []
    for alpha_w in alpha_ws:
        for seed in seeds:
            cfg = replace(base_cfg, objective="cohen-r", alpha_w=float(alpha_w), seed=int(seed))
            report = train_and_evaluate(train_set, test_set, cost, cfg, smoothing, epsilon, threads)
            rows.append({"alpha_w": float(alpha_w), "seed": int(seed), "acc": report.acc, "rob_cs": report.rob_cs})
            if callback:
                callback(len(rows), len(alpha_ws) * len(seeds), rows[-1])
    return rows


def median_by_alpha(rows):
    return median_by(rows, "alpha_w", metrics=("acc", "rob_cs"))


def gamma_sweep(train_set, test_set, cost, base_cfg, gamma_pairs, seeds, smoothing, epsilon, threads=1,
                callback=None):
    """cs-macer for every (γ1, γ2): rows (gamma1, gamma2, seed, acc, rob_cs)."""
    rows = []
    for gamma1, gamma2 in gamma_pairs:
        for seed in seeds:
            cfg = replace(base_cfg, objective="cs-macer", gamma1=float(gamma1), gamma2=float(gamma2), seed=int(seed))
            report = train_and_evaluate(train_set, test_set, cost, cfg, smoothing, epsilon, threads)
            rows.append({"gamma1": float(gamma1), "gamma2": float(gamma2), "seed": int(seed),
                         "acc": report.acc, "rob_cs": report.rob_cs})
            if callback:
                callback(len(rows), len(gamma_pairs) * len(seeds), rows[-1])
    return rows


def draw_targets(m, seed_class, size, seed):
    others = np.array([k for k in range(m) if k != seed_class])
    if not 1 <= size <= len(others):
        raise ValueError(f"|Ω| 必须在 [1, {len(others)}] 内, 实际 {size}")
    chosen = keyed_rng(seed, "r1r2-targets", int(seed_class), int(size)).choice(others, size=size, replace=False)
    return sorted(int(k) for k in chosen)


def r1_r2_comparison(classifier, dataset, seed_class, target_sizes, cfg, epsilon, seed, threads=1):
    """
    Certify the seed-class examples once, then score the same counts against
    target sets of each size: Rob_c-s from R1 alone vs from max(R1, R2).
    """
    idx = np.flatnonzero(dataset.labels == seed_class)
    if idx.size == 0:
        raise ValueError(f"数据集中没有类别 {seed_class} 的样本")
    certifier = Certifier(classifier, cfg, seed)

    def task(i):
        return draw_counts(classifier, dataset.features[i], cfg, certifier.key_for(i))

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as executor:
        all_counts = list(executor.map(task, idx))

    rows = []
    for size in target_sizes:
        targets = draw_targets(dataset.m, seed_class, size, seed)
        outcomes = [cost_sensitive_from_counts(c0, c, targets, cfg) for c0, c in all_counts]
        rows.append({
            "omega_size": int(size),
            "targets": " ".join(str(k) for k in targets),
            "rob_cs_r1": rob_cost_sensitive(outcomes, epsilon, use_r2=False),
            "rob_cs_max": rob_cost_sensitive(outcomes, epsilon),
        })
    return rows


def write_rows_csv(rows, columns, path, preamble):
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_preamble(f, preamble)
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else UNDEFINED if v is None else v)
                             for k, v in row.items()})
