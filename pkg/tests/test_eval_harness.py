import csv
import json

import numpy as np
import pytest

from src.core.base_classifiers import IntervalClassifier, exact_certified_radius_interval
from src.core.certifier import CertificationOutcome, CertificationRecord, Mode, SampleCounts, SmoothingConfig, Status
from src.core.config_manager import read_csv_body
from src.core.cost_model import CostMatrix
from src.core.dataset import Dataset
from src.core.eval_harness import (UNDEFINED, UndefinedMetric, average_certified_radius, build_report,
                                   certified_accuracy_curve, overall_acc, rob_cost_sensitive, run_experiment)

_COUNTS = SampleCounts([1, 0])


def _outcome(status, radius, r1=None, prediction=0):
    r1 = radius if r1 is None else r1
    return CertificationOutcome(prediction=prediction, r1=r1, r2=radius, radius=radius, status=status,
                                counts0=_COUNTS, counts=_COUNTS)


def test_rob_cost_sensitive_examples():
    certified = [_outcome(Status.CERTIFIED, r) for r in (0.6, 0.4, 0.7)]
    assert rob_cost_sensitive(certified, 0.5) == pytest.approx(2 / 3)
    assert rob_cost_sensitive([_outcome(Status.CERTIFIED, 1.0)] * 3, 0.5) == 1.0
    assert rob_cost_sensitive([_outcome(Status.COST_VIOLATION, 0.9)] * 3, 0.5) == 0.0
    assert rob_cost_sensitive([_outcome(Status.ABSTAIN, -0.1)], 0.0) == 0.0
    with pytest.raises(UndefinedMetric):
        rob_cost_sensitive([], 0.5)


def test_rob_with_r1_only_never_exceeds_max_bound():
    rng = np.random.default_rng(5)
    for _ in range(100):
        r1 = rng.normal(0.3, 0.4, size=20)
        r2 = rng.normal(0.3, 0.4, size=20)
        outcomes = [_outcome(Status.CERTIFIED if max(a, b) > 0 else Status.ABSTAIN, max(a, b), r1=a)
                    for a, b in zip(r1, r2)]
        eps = float(rng.uniform(0, 0.8))
        assert rob_cost_sensitive(outcomes, eps) >= rob_cost_sensitive(outcomes, eps, use_r2=False)


def test_overall_acc():
    assert overall_acc([_outcome(Status.CERTIFIED, 0.2)] * 4) == 1.0
    half = [_outcome(Status.CERTIFIED, 0.2), _outcome(Status.MISCLASSIFIED, 0.3)] * 2
    assert overall_acc(half) == 0.5
    mixed = [_outcome(Status.CERTIFIED, 0.2), _outcome(Status.ABSTAIN, -0.1), _outcome(Status.MISCLASSIFIED, 0.1),
             _outcome(Status.CERTIFIED, 1.0), _outcome(Status.ABSTAIN, 0.0)]
    assert overall_acc(mixed) == pytest.approx(2 / 5)
    with pytest.raises(UndefinedMetric):
        overall_acc([])


def test_curve_properties():
    radii = [0.1, 0.35, 0.35, 0.8, 1.2]
    outcomes = [_outcome(Status.CERTIFIED, r) for r in radii] + [_outcome(Status.ABSTAIN, -0.2)]
    grid = [0.0, 0.1, 0.2, 0.35, 0.5, 1.0, 1.2, 5.0]
    curve = certified_accuracy_curve(outcomes, grid)
    values = [v for _, v in curve]
    assert [e for e, _ in curve] == grid
    assert values[0] == pytest.approx(5 / 6)
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] == 0.0
    # the curve steps down exactly when ε reaches a radius
    assert values == pytest.approx([5 / 6, 4 / 6, 4 / 6, 2 / 6, 2 / 6, 1 / 6, 0.0, 0.0])


def test_curve_at_zero_with_everything_certified():
    outcomes = [_outcome(Status.CERTIFIED, r) for r in (0.1, 0.2)]
    assert certified_accuracy_curve(outcomes, [0.0])[0][1] == 1.0


def test_curve_grid_validation():
    outcomes = [_outcome(Status.CERTIFIED, 0.1)]
    with pytest.raises(ValueError):
        certified_accuracy_curve(outcomes, [])
    with pytest.raises(ValueError):
        certified_accuracy_curve(outcomes, [0.5, 0.1])


def test_average_certified_radius():
    outcomes = [_outcome(Status.CERTIFIED, 0.6), _outcome(Status.ABSTAIN, -0.2), _outcome(Status.COST_VIOLATION, 0.4)]
    assert average_certified_radius(outcomes) == pytest.approx(0.2)


def _records():
    records = []
    for i, (label, status, radius, r1) in enumerate([
        (0, Status.CERTIFIED, 0.9, 0.9),
        (1, Status.CERTIFIED, 0.3, 0.3),
        (1, Status.MISCLASSIFIED, 0.4, 0.4),
    ]):
        records.append(CertificationRecord(i, label, Mode.STANDARD, _outcome(status, radius, r1)))
    records.append(CertificationRecord(1, 1, Mode.COST_SENSITIVE, _outcome(Status.CERTIFIED, 0.7, r1=0.3)))
    records.append(CertificationRecord(2, 1, Mode.COST_SENSITIVE, _outcome(Status.COST_VIOLATION, 0.0, r1=-0.1)))
    return records


def test_build_report():
    report = build_report(_records(), CostMatrix.seedwise(2, 1), epsilon=0.5, epsilons=[0.0, 0.5])
    assert report.acc == pytest.approx(2 / 3)
    assert report.rob_cs == 0.5
    assert report.rob_cs_std == 0.0
    assert report.rob_non_std == 1.0
    assert report.n_examples == 3 and report.n_sensitive == 2
    assert report.status_counts["cost_sensitive"]["CostViolation"] == 1
    assert report.curve_cs == [(0.0, 0.5), (0.5, 0.5)]
    assert report.rob_cs >= report.rob_cs_std


def test_zero_cost_matrix_reports_undefined_marker():
    records = [r for r in _records() if r.mode is Mode.STANDARD]
    report = build_report(records, CostMatrix.zeros(2), epsilon=0.5)
    assert report.rob_cs is None
    d = report.to_dict()
    assert d["rob_cs"] == UNDEFINED and d["rob_cs_std"] == UNDEFINED
    assert UNDEFINED in report.format_table()


def _oracle_problem():
    c = IntervalClassifier([0.0])
    x = np.array([[-1.5], [-1.0], [-0.2], [0.2], [1.0], [1.5], [0.6], [-0.6]])
    y = np.array([0, 0, 0, 1, 1, 1, 0, 1])
    return c, Dataset(x, y, 2)


def test_run_experiment_against_exact_radii(tmp_path):
    c, ds = _oracle_problem()
    cost = CostMatrix.overall(2)
    cfg = SmoothingConfig(sigma=0.5, n0=100, n=10000, alpha=0.0001)
    report, records = run_experiment(c, ds, cost, cfg, epsilon=0.5, epsilons=[0.0, 0.5, 1.0], seed=0,
                                     out_dir=tmp_path, threads=2, preamble={"seed": 0})
    exact = [exact_certified_radius_interval(c, ds.features[i], int(ds.labels[i]), 0.5,
                                             {1 - int(ds.labels[i])}) for i in range(ds.n)]
    for r in records:
        if r.mode is Mode.COST_SENSITIVE:
            e = exact[r.example_id]
            if e.applicable:
                assert r.outcome.status is Status.CERTIFIED
                assert e.radius - 0.15 <= r.outcome.radius <= e.radius
            else:
                assert r.outcome.status is Status.COST_VIOLATION
    # the last two examples sit on the wrong side of the boundary
    assert report.acc == pytest.approx(6 / 8)
    # exact radii 1.5, 1.0, 0.2, 0.2, 1.0, 1.5 and two violations
    assert report.rob_cs == pytest.approx(4 / 8)
    for name in ("certify.csv", "certify.jsonl", "report.json", "curve.csv", "curve_cs.csv"):
        assert (tmp_path / name).exists()


def test_report_is_recomputable_from_csv(tmp_path):
    c, ds = _oracle_problem()
    cfg = SmoothingConfig(sigma=0.5, n0=100, n=2000, alpha=0.001)
    report, _ = run_experiment(c, ds, CostMatrix.seedwise(2, 1), cfg, epsilon=0.25, seed=1, out_dir=tmp_path)
    rows = list(csv.DictReader(read_csv_body(tmp_path / "certify.csv")))
    std = [r for r in rows if r["mode"] == "standard"]
    cs = [r for r in rows if r["mode"] == "cost_sensitive"]
    assert len(std) == ds.n and len(cs) == int((ds.labels == 1).sum())
    assert report.acc == sum(r["status"] == "Certified" for r in std) / len(std)
    rob = sum(r["status"] == "Certified" and float(r["radius"]) > 0.25 for r in cs) / len(cs)
    assert report.rob_cs == rob
    saved = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert saved["report"]["acc"] == report.acc
    assert saved["config"] == {"seed": 1}


def test_same_seed_same_outputs(tmp_path):
    c, ds = _oracle_problem()
    cfg = SmoothingConfig(sigma=0.5, n0=100, n=2000, alpha=0.001)
    outputs = []
    for run, threads in (("a", 1), ("b", 3)):
        report, _ = run_experiment(c, ds, CostMatrix.overall(2), cfg, seed=7, out_dir=tmp_path / run,
                                   threads=threads, preamble={"seed": 7})
        lines = (tmp_path / run / "certify.csv").read_text(encoding="utf-8").splitlines()
        outputs.append((report.to_dict(), lines[1:], (tmp_path / run / "curve.csv").read_text().splitlines()[1:]))
    assert outputs[0] == outputs[1]


def test_run_experiment_shape_checks():
    c, ds = _oracle_problem()
    cfg = SmoothingConfig(n=100)
    with pytest.raises(ValueError):
        run_experiment(IntervalClassifier([0.0, 1.0]), ds, None, cfg)
    with pytest.raises(ValueError):
        run_experiment(c, ds, CostMatrix.overall(3), cfg)
