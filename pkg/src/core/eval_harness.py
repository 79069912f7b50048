"""
Evaluation metrics over certification records.

acc          fraction of all examples whose standard certificate is Certified
rob_cs       fraction of sensitive examples certified beyond ε with max(R1, R2)
rob_cs_std   the same with R1 only
rob_non_std  fraction of non-sensitive examples certified beyond ε (R1)

Abstain and CostViolation always count as not robust.
"""
import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from src.config import DEFAULT_EPSILON, DEFAULT_EPSILON_GRID
from src.core.certifier import Certifier, Mode, Status, write_records_csv, write_records_jsonl
from src.core.config_manager import write_preamble
from src.core.cost_model import omega

logger = logging.getLogger(__name__)

UNDEFINED = "UndefinedMetric"


class UndefinedMetric(ValueError):
    """A ratio metric over an empty population."""


def _robust_count(outcomes, epsilon, radius_of):
    return sum(1 for o in outcomes if o.status is Status.CERTIFIED and radius_of(o) > epsilon)


def rob_cost_sensitive(outcomes, epsilon, use_r2=True):
    outcomes = list(outcomes)
    if not outcomes:
        raise UndefinedMetric("敏感样本集合 S^s 为空, Rob_c-s 无定义")
    radius_of = (lambda o: o.radius) if use_r2 else (lambda o: o.r1)
    return _robust_count(outcomes, epsilon, radius_of) / len(outcomes)


def overall_acc(outcomes):
    outcomes = list(outcomes)
    if not outcomes:
        raise UndefinedMetric("数据集为空, Acc 无定义")
    return sum(1 for o in outcomes if o.status is Status.CERTIFIED) / len(outcomes)


def certified_accuracy_curve(outcomes, epsilons, use_r2=True):
    """[(ε, fraction Certified with radius > ε)] for an ascending ε grid."""
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("ε 网格为空")
    if any(b < a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError(f"ε 网格必须升序, 实际 {epsilons}")
    outcomes = list(outcomes)
    if not outcomes:
        raise UndefinedMetric("没有可用于曲线的样本")
    radius_of = (lambda o: o.radius) if use_r2 else (lambda o: o.r1)
    return [(eps, _robust_count(outcomes, eps, radius_of) / len(outcomes)) for eps in epsilons]


def average_certified_radius(outcomes):
    outcomes = list(outcomes)
    if not outcomes:
        raise UndefinedMetric("没有样本, ACR 无定义")
    return float(np.mean([o.radius if o.status is Status.CERTIFIED else 0.0 for o in outcomes]))


@dataclass
class EvalReport:
    acc: float
    rob_cs: float | None
    rob_cs_std: float | None
    rob_non_std: float | None
    epsilon: float
    curve: list
    curve_cs: list = field(default_factory=list)
    status_counts: dict = field(default_factory=dict)
    acr: float = 0.0
    acr_cs: float | None = None
    n_examples: int = 0
    n_sensitive: int = 0

    def to_dict(self):
        d = asdict(self)
        for key in ("rob_cs", "rob_cs_std", "rob_non_std", "acr_cs"):
            if d[key] is None:
                d[key] = UNDEFINED
        d["curve"] = [list(p) for p in self.curve]
        d["curve_cs"] = [list(p) for p in self.curve_cs]
        return d

    def format_table(self):
        def fmt(v):
            return UNDEFINED if v is None else f"{v:.4f}"

        lines = [
            f"ε = {self.epsilon}   examples = {self.n_examples}   sensitive = {self.n_sensitive}",
            f"{'Acc':<14}{fmt(self.acc)}",
            f"{'Rob_c-s':<14}{fmt(self.rob_cs)}",
            f"{'Rob_c-s (R1)':<14}{fmt(self.rob_cs_std)}",
            f"{'Rob_non (R1)':<14}{fmt(self.rob_non_std)}",
            f"{'ACR':<14}{fmt(self.acr)}",
            f"{'ACR_c-s':<14}{fmt(self.acr_cs)}",
        ]
        for mode, counts in sorted(self.status_counts.items()):
            summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
            lines.append(f"{mode:<14}{summary}")
        return "\n".join(lines)


def _optional(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except UndefinedMetric:
        return None


def build_report(records, cost=None, epsilon=DEFAULT_EPSILON, epsilons=DEFAULT_EPSILON_GRID):
    standard = [r for r in records if r.mode is Mode.STANDARD]
    sensitive = [r.outcome for r in records if r.mode is Mode.COST_SENSITIVE]
    non_sensitive = [r.outcome for r in standard if cost is None or not len(omega(cost, r.label))]
    std_outcomes = [r.outcome for r in standard]

    counts = {}
    for r in records:
        per_mode = counts.setdefault(r.mode.value, {s.value: 0 for s in Status})
        per_mode[r.outcome.status.value] += 1

    return EvalReport(
        acc=overall_acc(std_outcomes),
        rob_cs=_optional(rob_cost_sensitive, sensitive, epsilon),
        rob_cs_std=_optional(rob_cost_sensitive, sensitive, epsilon, use_r2=False),
        rob_non_std=_optional(rob_cost_sensitive, non_sensitive, epsilon, use_r2=False),
        epsilon=float(epsilon),
        curve=certified_accuracy_curve(std_outcomes, epsilons),
        curve_cs=_optional(certified_accuracy_curve, sensitive, epsilons) or [],
        status_counts=counts,
        acr=average_certified_radius(std_outcomes),
        acr_cs=_optional(average_certified_radius, sensitive),
        n_examples=len(std_outcomes),
        n_sensitive=len(sensitive),
    )


def write_curve_csv(curve, path, preamble):
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_preamble(f, preamble)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epsilon", "certified_accuracy"])
        for eps, frac in curve:
            writer.writerow([repr(float(eps)), repr(float(frac))])


def write_report_json(report, path, preamble):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"config": preamble, "report": report.to_dict()}, f, ensure_ascii=False, indent=4, sort_keys=True)


def run_experiment(classifier, dataset, cost, cfg, epsilon=DEFAULT_EPSILON, epsilons=DEFAULT_EPSILON_GRID,
                   seed=0, out_dir=None, threads=1, preamble=None, modes=(Mode.STANDARD, Mode.COST_SENSITIVE),
                   callback=None):
    """
    Certify the whole dataset and assemble an EvalReport. With out_dir set,
    writes certify.csv, certify.jsonl, report.json, curve.csv and, when there
    are sensitive examples, curve_cs.csv.
    """
    if classifier.dim != dataset.d or classifier.m != dataset.m:
        raise ValueError(f"模型 (d={classifier.dim}, m={classifier.m}) 与数据集 (d={dataset.d}, m={dataset.m}) 不一致")
    if cost is not None and cost.m != dataset.m:
        raise ValueError(f"代价矩阵 m={cost.m} 与数据集 m={dataset.m} 不一致")

    certifier = Certifier(classifier, cfg, seed, max_workers=threads)
    records = certifier.certify_dataset(dataset, cost, modes, callback=callback)
    report = build_report(records, cost, epsilon, epsilons)
    logger.info("certified %d examples (%d sensitive), acc=%.4f", report.n_examples, report.n_sensitive, report.acc)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        preamble = dict(preamble or {})
        preamble.setdefault("seed", int(seed))
        write_records_csv(records, cfg, os.path.join(out_dir, "certify.csv"), preamble)
        write_records_jsonl(records, cfg, os.path.join(out_dir, "certify.jsonl"), preamble)
        write_report_json(report, os.path.join(out_dir, "report.json"), preamble)
        write_curve_csv(report.curve, os.path.join(out_dir, "curve.csv"), preamble)
        if report.curve_cs:
            write_curve_csv(report.curve_cs, os.path.join(out_dir, "curve_cs.csv"), preamble)
    return report, records
