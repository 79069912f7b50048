import numpy as np
import pytest

from src.core.base_classifiers import IntervalClassifier
from src.core.certifier import SmoothingConfig
from src.core.cost_model import CostMatrix
from src.core.dataset import Dataset, gen_synthetic
from src.core.experiments import (compare_methods, draw_targets, gamma_sweep, median_by, median_by_alpha,
                                  r1_r2_comparison, tradeoff_sweep, write_rows_csv)
from src.core.trainer import TrainConfig


def test_draw_targets():
    a = draw_targets(10, 3, 4, seed=0)
    assert a == draw_targets(10, 3, 4, seed=0)
    assert len(a) == 4 and 3 not in a and a == sorted(a)
    assert draw_targets(10, 3, 9, seed=0) == [0, 1, 2, 4, 5, 6, 7, 8, 9]
    for size in (0, 10):
        with pytest.raises(ValueError):
            draw_targets(10, 3, size, seed=0)


def _interval_problem():
    # class 3 lives on [1, 2)
    c = IntervalClassifier([-1.0, 0.0, 1.0, 2.0])
    x = np.array([[1.5], [1.4], [1.6], [1.2], [1.8], [-0.5], [0.5]])
    y = np.array([3, 3, 3, 3, 3, 1, 2])
    return c, Dataset(x, y, 5)


def test_r1_r2_comparison():
    c, ds = _interval_problem()
    cfg = SmoothingConfig(sigma=0.5, n0=100, n=2000, alpha=0.001)
    rows = r1_r2_comparison(c, ds, 3, [1, 3, 4], cfg, epsilon=0.1, seed=0, threads=2)
    assert [r["omega_size"] for r in rows] == [1, 3, 4]
    assert rows[-1]["targets"] == "0 1 2 4"
    for r in rows:
        assert 0.0 <= r["rob_cs_r1"] <= r["rob_cs_max"] <= 1.0
    assert rows == r1_r2_comparison(c, ds, 3, [1, 3, 4], cfg, epsilon=0.1, seed=0, threads=1)


def test_r1_r2_comparison_needs_seed_examples():
    c, ds = _interval_problem()
    with pytest.raises(ValueError):
        r1_r2_comparison(c, ds, 0, [1], SmoothingConfig(n=100), epsilon=0.5, seed=0)


def test_median_by():
    rows = [
        {"objective": "cohen", "seed": 0, "acc": 0.5, "rob_cs": 0.1},
        {"objective": "cohen", "seed": 1, "acc": 0.7, "rob_cs": 0.3},
        {"objective": "cohen", "seed": 2, "acc": 0.6, "rob_cs": None},
        {"objective": "cs-macer", "seed": 0, "acc": 0.4, "rob_cs": None},
    ]
    summary = median_by(rows, "objective", metrics=("acc", "rob_cs"))
    assert summary == [
        {"objective": "cohen", "acc": 0.6, "rob_cs": pytest.approx(0.2)},
        {"objective": "cs-macer", "acc": 0.4, "rob_cs": None},
    ]
    alpha_rows = [{"alpha_w": 1.0, "seed": s, "acc": 0.5 + s / 10, "rob_cs": 0.1} for s in range(3)]
    assert median_by_alpha(alpha_rows) == [{"alpha_w": 1.0, "acc": pytest.approx(0.6), "rob_cs": 0.1}]


def test_write_rows_csv_marks_undefined(tmp_path):
    rows = [{"objective": "cohen", "seed": 0, "acc": 0.5, "rob_cs": None}]
    write_rows_csv(rows, ["objective", "seed", "acc", "rob_cs"], tmp_path / "rows.csv", {"seed": 0})
    lines = (tmp_path / "rows.csv").read_text().splitlines()
    assert lines[2:] == ["objective,seed,acc,rob_cs", "cohen,0,0.5,UndefinedMetric"]


def _tiny():
    train = gen_synthetic("blobs-3", 0, "train", size=30)
    test = gen_synthetic("blobs-3", 0, "test", size=15)
    base = TrainConfig(epochs=1, batch_size=16, k_samples=2, hidden=4)
    smoothing = SmoothingConfig(sigma=0.5, n0=20, n=200, alpha=0.01)
    return train, test, CostMatrix.seedwise(3, 1), base, smoothing


def test_drivers_produce_one_row_per_run():
    train, test, cost, base, smoothing = _tiny()
    rows = compare_methods(train, test, cost, ["cohen", "cs-macer"], [0, 1], base, smoothing, 0.5)
    assert [(r["objective"], r["seed"]) for r in rows] == [("cohen", 0), ("cohen", 1), ("cs-macer", 0), ("cs-macer", 1)]
    assert set(rows[0]) == {"objective", "seed", "acc", "rob_cs", "rob_cs_std", "rob_non_std"}
    assert len(tradeoff_sweep(train, test, cost, base, [1.0, 1.5], [0], smoothing, 0.5)) == 2
    gammas = gamma_sweep(train, test, cost, base, [(2.0, 8.0)], [0, 1], smoothing, 0.5)
    assert [(r["gamma1"], r["gamma2"], r["seed"]) for r in gammas] == [(2.0, 8.0, 0), (2.0, 8.0, 1)]


@pytest.mark.slow
def test_method_comparison_trend_on_blobs():
    train = gen_synthetic("blobs-5", 0, "train")
    test = gen_synthetic("blobs-5", 0, "test")
    cost = CostMatrix.seedwise(5, 3)
    base = TrainConfig(epochs=200, alpha_w=1.2, gamma1=4.0, gamma2=16.0)
    smoothing = SmoothingConfig(sigma=0.5, n0=100, n=10000, alpha=0.001)
    rows = compare_methods(train, test, cost, ["cohen", "cohen-r", "cs-macer"], range(5), base, smoothing, 0.5,
                           threads=4)
    med = {r["objective"]: r for r in median_by(rows, "objective")}
    assert med["cs-macer"]["rob_cs"] >= med["cohen-r"]["rob_cs"] >= med["cohen"]["rob_cs"]
    assert med["cs-macer"]["acc"] >= med["cohen"]["acc"] - 0.05


@pytest.mark.slow
def test_cohen_r_weight_trades_accuracy_for_robustness():
    train = gen_synthetic("blobs-5", 0, "train")
    test = gen_synthetic("blobs-5", 0, "test")
    cost = CostMatrix.seedwise(5, 3)
    base = TrainConfig(objective="cohen-r", epochs=200)
    smoothing = SmoothingConfig(sigma=0.5, n0=100, n=10000, alpha=0.001)
    alpha_ws = [1.0, 1.5, 2.0, 4.0]
    rows = tradeoff_sweep(train, test, cost, base, alpha_ws, range(5), smoothing, 0.5, threads=4)
    med = median_by_alpha(rows)
    assert [r["alpha_w"] for r in med] == alpha_ws
    rob = [r["rob_cs"] for r in med]
    acc = [r["acc"] for r in med]
    # neighbouring weights can tie up to certification noise
    assert all(b >= a - 0.01 for a, b in zip(rob, rob[1:]))
    assert all(b <= a + 0.01 for a, b in zip(acc, acc[1:]))
    assert rob[-1] >= rob[0]
