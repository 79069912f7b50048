"""
Command-line surface.

Every command runs in two phases. Configuration (parsing, config file,
model / dataset / cost matrix loading) fails with exit code 2; the run
itself fails with exit code 3.
"""
import argparse
import logging
import os

from tqdm import tqdm

from src.config import (DEFAULT_ALPHA, DEFAULT_ALPHA_W, DEFAULT_BATCH_SIZE, DEFAULT_BETA, DEFAULT_EPOCHS,
                        DEFAULT_EPSILON, DEFAULT_EPSILON_GRID, DEFAULT_GAMMA1, DEFAULT_GAMMA2, DEFAULT_HIDDEN,
                        DEFAULT_K_SAMPLES, DEFAULT_LAMBDA, DEFAULT_LR, DEFAULT_MACER_GAMMA, DEFAULT_N, DEFAULT_N0,
                        DEFAULT_OBJECTIVE, DEFAULT_SAMPLE_BATCH, DEFAULT_SEED, DEFAULT_SENSITIVE_CLASS,
                        DEFAULT_SIGMA, DEFAULT_SYNTHETIC)
from src.core.base_classifiers import LogitModel, MlpClassifier, load_model, save_model
from src.core.certifier import Mode, SmoothingConfig
from src.core.config_manager import ConfigError, ConfigManager, resolve_threads
from src.core.cost_model import CostMatrix, parse_cost_spec
from src.core.dataset import gen_synthetic, load_dataset, save_dataset
from src.core.eval_harness import run_experiment, write_curve_csv
from src.core.experiments import (compare_methods, gamma_sweep, median_by, median_by_alpha, r1_r2_comparison,
                                  tradeoff_sweep, write_rows_csv)
from src.core.trainer import Objective, TrainConfig, train, write_metrics_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigPhaseError(Exception):
    """Wraps any failure raised while resolving a command's inputs."""


# ──────────────────────────────────────────────
#  参数解析
# ──────────────────────────────────────────────

def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的数字列表, 实际 {text!r}") from e


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数列表, 实际 {text!r}") from e


def _gamma_pairs(text):
    try:
        pairs = [tuple(float(g) for g in item.split(":")) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"需要 g1:g2,g1:g2 形式, 实际 {text!r}") from e
    if any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"需要 g1:g2,g1:g2 形式, 实际 {text!r}")
    return pairs


def _add_common(p):
    p.add_argument("--config", help="JSON 配置文件, 命令行参数优先")
    p.add_argument("--seed", type=int, default=None, help=f"主随机种子 (默认 {DEFAULT_SEED})")
    p.add_argument("--threads", type=int, default=None, help="工作线程数 (也可用 CS_SMOOTH_THREADS)")
    p.add_argument("--no-progress", action="store_true", help="不显示进度条")


def _add_data(p, required_cost=False):
    p.add_argument("--dataset", help="数据集 CSV (label,f0,...)")
    p.add_argument("--synthetic", help="合成数据集名称, 例如 blobs-5")
    p.add_argument("--split", choices=["train", "test"], default=None)
    p.add_argument("--cost", required=required_cost,
                   help="代价矩阵: JSON 文件, seedwise:3, pairwise:3->2,4,5, zero, overall")
    p.add_argument("--classes", type=int, default=None, help="类别数 m (简写代价矩阵使用)")


def _add_smoothing(p):
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--n0", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--sample-batch", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--epsilons", type=_float_list, default=None, help="逗号分隔的升序 ε 网格")


def _add_training(p):
    p.add_argument("--objective", default=None, help="cohen, cohen-r, macer, cs-macer")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--gamma1", type=float, default=None)
    p.add_argument("--gamma2", type=float, default=None)
    p.add_argument("--alpha-w", type=float, default=None)
    p.add_argument("--k-samples", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--hard-max", action="store_true", default=None, help="cs 半径使用硬 max")


def build_parser():
    parser = argparse.ArgumentParser(prog="cs-smooth", description="Cost-sensitive randomized smoothing toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="输出 DEBUG 日志")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="认证一个数据集")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=["cost-sensitive", "standard"], default="cost-sensitive")
    p.add_argument("--out", required=True, help="输出目录")
    _add_data(p)
    _add_smoothing(p)
    _add_common(p)

    p = sub.add_parser("train", help="训练 LogitModel")
    p.add_argument("--out", required=True, help="模型输出路径")
    p.add_argument("--metrics", help="训练指标 CSV (默认 <out>.metrics.csv)")
    p.add_argument("--resume", help="从已保存的模型继续训练")
    _add_data(p)
    _add_training(p)
    p.add_argument("--sigma", type=float, default=None)
    _add_common(p)

    for name in ("curve", "compare"):
        p = sub.add_parser(name, help="多个模型在同一代价矩阵上的认证精度曲线")
        p.add_argument("--model", action="append", required=True, help="可重复")
        p.add_argument("--out", required=True, help="输出目录")
        _add_data(p)
        _add_smoothing(p)
        _add_common(p)

    p = sub.add_parser("gen-data", help="生成合成数据集 CSV")
    p.add_argument("--synthetic", default=DEFAULT_SYNTHETIC)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("experiment", help="合成数据上的对比实验")
    p.add_argument("--kind", choices=["methods", "tradeoff", "gamma", "r1r2"], required=True)
    p.add_argument("--out", required=True, help="输出目录")
    p.add_argument("--seeds", type=_int_list, default=None, help="逗号分隔的种子列表")
    p.add_argument("--objectives", default=None, help="逗号分隔的训练目标 (methods)")
    p.add_argument("--alpha-ws", type=_float_list, default=None, help="α_w 列表 (tradeoff)")
    p.add_argument("--gamma-pairs", type=_gamma_pairs, default=None, help="g1:g2 列表 (gamma)")
    p.add_argument("--model", help="r1r2 使用的模型")
    p.add_argument("--seed-class", type=int, default=None, help="r1r2 的敏感类别")
    p.add_argument("--target-sizes", type=_int_list, default=None, help="r1r2 的 |Ω| 列表")
    _add_data(p)
    _add_smoothing(p)
    _add_training(p)
    _add_common(p)
    return parser


# ──────────────────────────────────────────────
#  配置阶段
# ──────────────────────────────────────────────

def _progress(enabled, desc):
    """A (callback, close) pair driving a tqdm bar; the total is set on the first call."""
    if not enabled:
        return None, lambda: None
    bar = tqdm(desc=desc, leave=False)

    def callback(done, total, *_):
        if bar.total != total:
            bar.reset(total=total)
        bar.n = done
        bar.refresh()

    return callback, bar.close


def _load_data(cm, default_split, m=None):
    """m (usually the model's class count) is used unless --classes overrides it."""
    path = cm.get_value("dataset")
    name = cm.get_value("synthetic")
    if path and name:
        raise ConfigError("--dataset 与 --synthetic 只能给一个")
    if path:
        return load_dataset(path, m=cm.get_value("classes", m))
    if name:
        return gen_synthetic(name, cm.get_value("seed", DEFAULT_SEED), split=cm.get_value("split", default_split))
    raise ConfigError("需要 --dataset 或 --synthetic")


def _load_cost(cm, m, required):
    spec = cm.get_value("cost")
    if spec is None:
        if required:
            raise ConfigError("cost-sensitive 模式需要 --cost")
        return None
    return parse_cost_spec(str(spec), m=cm.get_value("classes", m))


def _check_shapes(classifier, dataset, cost=None):
    if classifier.dim != dataset.d or classifier.m != dataset.m:
        raise ConfigError(f"模型 (d={classifier.dim}, m={classifier.m}) 与数据集 (d={dataset.d}, m={dataset.m}) 不一致")
    if cost is not None and cost.m != dataset.m:
        raise ConfigError(f"代价矩阵 m={cost.m} 与数据集 m={dataset.m} 不一致")


def _smoothing(cm):
    cfg = SmoothingConfig(
        sigma=float(cm.get_value("sigma", DEFAULT_SIGMA)),
        n0=int(cm.get_value("n0", DEFAULT_N0)),
        n=int(cm.get_value("n", DEFAULT_N)),
        alpha=float(cm.get_value("alpha", DEFAULT_ALPHA)),
        batch_size=int(cm.get_value("sample_batch", DEFAULT_SAMPLE_BATCH)),
    )
    epsilons = [float(e) for e in cm.get_value("epsilons", list(DEFAULT_EPSILON_GRID))]
    if not epsilons:
        raise ConfigError("ε 网格为空")
    if any(b < a for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigError(f"ε 网格必须升序, 实际 {epsilons}")
    epsilon = float(cm.get_value("epsilon", DEFAULT_EPSILON))
    cm.merge({"sigma": cfg.sigma, "n0": cfg.n0, "n": cfg.n, "alpha": cfg.alpha,
              "sample_batch": cfg.batch_size, "epsilon": epsilon, "epsilons": epsilons})
    return cfg, epsilon, epsilons


def _train_config(cm):
    objective = cm.get_value("objective", DEFAULT_OBJECTIVE)
    gamma_default = DEFAULT_MACER_GAMMA if objective == Objective.MACER.value else DEFAULT_GAMMA1
    cfg = TrainConfig(
        objective=objective,
        sigma=float(cm.get_value("sigma", DEFAULT_SIGMA)),
        lam=float(cm.get_value("lam", DEFAULT_LAMBDA)),
        gamma1=float(cm.get_value("gamma1", gamma_default)),
        gamma2=float(cm.get_value("gamma2", DEFAULT_GAMMA2)),
        alpha_w=float(cm.get_value("alpha_w", DEFAULT_ALPHA_W)),
        k_samples=int(cm.get_value("k_samples", DEFAULT_K_SAMPLES)),
        beta=float(cm.get_value("beta", DEFAULT_BETA)),
        lr=float(cm.get_value("lr", DEFAULT_LR)),
        epochs=int(cm.get_value("epochs", DEFAULT_EPOCHS)),
        batch_size=int(cm.get_value("batch_size", DEFAULT_BATCH_SIZE)),
        seed=int(cm.get_value("seed", DEFAULT_SEED)),
        hidden=int(cm.get_value("hidden", DEFAULT_HIDDEN)),
        smooth_max=bool(cm.get_value("smooth_max", True)) and not cm.get_value("hard_max", False),
    )
    cm.merge({k: v for k, v in cfg.to_dict().items() if k != "lambda"})
    cm.set_value("lam", cfg.lam)
    return cfg


def _config_manager(args):
    cm = ConfigManager(getattr(args, "config", None))
    if "lambda" in cm.config:
        # TrainConfig JSON spells the field "lambda"; the CLI flag is stored as lam
        cm.set_value("lam", cm.config.pop("lambda"))
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "no_progress", "threads")}
    cm.merge(overrides)
    cm.set_value("seed", int(cm.get_value("seed", DEFAULT_SEED)))
    return cm


# ──────────────────────────────────────────────
#  命令
# ──────────────────────────────────────────────

def cmd_certify(args):
    try:
        cm = _config_manager(args)
        threads = resolve_threads(args.threads)
        classifier = load_model(cm.get_value("model"))
        dataset = _load_data(cm, "test", m=classifier.m)
        mode = cm.get_value("mode", "cost-sensitive")
        cost = _load_cost(cm, dataset.m, required=(mode == "cost-sensitive"))
        _check_shapes(classifier, dataset, cost)
        cfg, epsilon, epsilons = _smoothing(cm)
        modes = (Mode.STANDARD,) if mode == "standard" else (Mode.STANDARD, Mode.COST_SENSITIVE)
    except Exception as e:
        raise ConfigPhaseError(e) from e

    callback, close = _progress(not args.no_progress, "certify")
    try:
        report, _ = run_experiment(classifier, dataset, cost, cfg, epsilon, epsilons, seed=cm.get_value("seed"),
                                   out_dir=cm.get_value("out"), threads=threads, preamble=cm.resolved(),
                                   modes=modes, callback=callback)
    finally:
        close()
    print(report.format_table())
    return EXIT_OK


def cmd_train(args):
    try:
        cm = _config_manager(args)
        dataset = _load_data(cm, "train")
        cfg = _train_config(cm)
        cost = _load_cost(cm, dataset.m, required=False) or CostMatrix.zeros(dataset.m)
        if cm.get_value("resume"):
            loaded = load_model(cm.get_value("resume"))
            if not isinstance(loaded, MlpClassifier):
                raise ConfigError(f"--resume 需要 mlp 模型, 实际 {loaded.kind}")
            _check_shapes(loaded, dataset, cost)
            model = loaded.model
        else:
            model = LogitModel(dataset.d, dataset.m, hidden=cfg.hidden, beta=cfg.beta, seed=cfg.seed)
        out = cm.get_value("out")
        metrics_path = cm.get_value("metrics") or out + ".metrics.csv"
    except Exception as e:
        raise ConfigPhaseError(e) from e

    callback, close = _progress(not args.no_progress, "train")
    try:
        result = train(model, dataset, cost, cfg, callback=callback)
    finally:
        close()
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_model(result.model, out, config=cm.resolved())
    write_metrics_csv(result.history, metrics_path, cm.resolved())
    if result.history:
        last = result.history[-1]
        print(f"objective={cfg.objective.value} epochs={cfg.epochs} total={last['total']:.6f} "
              f"train_acc={last['train_acc']:.4f}")
    print(f"model -> {out}")
    return EXIT_OK


def cmd_curve(args):
    try:
        cm = _config_manager(args)
        threads = resolve_threads(args.threads)
        models = [(path, load_model(path)) for path in cm.get_value("model")]
        dataset = _load_data(cm, "test", m=models[0][1].m)
        cost = _load_cost(cm, dataset.m, required=False)
        for _, classifier in models:
            _check_shapes(classifier, dataset, cost)
        cfg, epsilon, epsilons = _smoothing(cm)
    except Exception as e:
        raise ConfigPhaseError(e) from e

    out_dir = cm.get_value("out")
    os.makedirs(out_dir, exist_ok=True)
    for path, classifier in models:
        callback, close = _progress(not args.no_progress, os.path.basename(path))
        try:
            report, records = run_experiment(classifier, dataset, cost, cfg, epsilon, epsilons,
                                             seed=cm.get_value("seed"), threads=threads, callback=callback)
        finally:
            close()
        curve = report.curve_cs or report.curve
        stem = os.path.splitext(os.path.basename(path))[0]
        preamble = dict(cm.resolved(), model=path, curve="cost_sensitive" if report.curve_cs else "standard")
        write_curve_csv(curve, os.path.join(out_dir, f"curve_{stem}.csv"), preamble)
        print(f"{stem}: " + "  ".join(f"{eps:g}:{frac:.3f}" for eps, frac in curve))
    return EXIT_OK


def cmd_gen_data(args):
    try:
        dataset = gen_synthetic(args.synthetic, args.seed, split=args.split, size=args.size)
    except Exception as e:
        raise ConfigPhaseError(e) from e
    preamble = {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}
    save_dataset(dataset, args.out, preamble)
    print(f"{dataset.name}: n={dataset.n} d={dataset.d} m={dataset.m} -> {args.out}")
    return EXIT_OK


def _experiment_data(cm):
    name = cm.get_value("synthetic", DEFAULT_SYNTHETIC)
    seed = cm.get_value("seed", DEFAULT_SEED)
    cm.set_value("synthetic", name)
    return gen_synthetic(name, seed, "train"), gen_synthetic(name, seed, "test")


def cmd_experiment(args):
    try:
        cm = _config_manager(args)
        threads = resolve_threads(args.threads)
        kind = cm.get_value("kind")
        smoothing, epsilon, _ = _smoothing(cm)
        seeds = cm.get_value("seeds", [0, 1, 2, 3, 4])
        cm.set_value("seeds", seeds)
        train_set, test_set = _experiment_data(cm)
        if cm.get_value("cost") is None:
            cm.set_value("cost", f"seedwise:{DEFAULT_SENSITIVE_CLASS}")
        cost = _load_cost(cm, train_set.m, required=True)
        if kind == "r1r2":
            classifier = load_model(cm.get_value("model")) if cm.get_value("model") else None
            if classifier is None:
                raise ConfigError("--kind r1r2 需要 --model")
            _check_shapes(classifier, test_set, cost)
            seed_class = cm.get_value("seed_class", DEFAULT_SENSITIVE_CLASS)
            sizes = cm.get_value("target_sizes", sorted({1, min(3, train_set.m - 1), train_set.m - 1}))
        else:
            base_cfg = _train_config(cm)
            objectives = str(cm.get_value("objectives", "cohen,cohen-r,cs-macer")).split(",")
            for objective in objectives:
                Objective(objective)
    except Exception as e:
        raise ConfigPhaseError(e) from e

    out_dir = cm.get_value("out")
    os.makedirs(out_dir, exist_ok=True)
    preamble = cm.resolved()
    callback, close = _progress(not args.no_progress, kind)
    try:
        if kind == "methods":
            rows = compare_methods(train_set, test_set, cost, objectives, seeds, base_cfg, smoothing, epsilon,
                                   threads, callback)
            columns = ["objective", "seed", "acc", "rob_cs", "rob_cs_std", "rob_non_std"]
            summary = median_by(rows, "objective")
        elif kind == "tradeoff":
            alpha_ws = cm.get_value("alpha_ws", [1.0, 1.2, 1.5, 2.0, 3.0])
            rows = tradeoff_sweep(train_set, test_set, cost, base_cfg, alpha_ws, seeds, smoothing, epsilon,
                                  threads, callback)
            columns = ["alpha_w", "seed", "acc", "rob_cs"]
            summary = median_by_alpha(rows)
        elif kind == "gamma":
            pairs = cm.get_value("gamma_pairs", [(2.0, 8.0), (4.0, 16.0), (8.0, 16.0)])
            rows = gamma_sweep(train_set, test_set, cost, base_cfg, pairs, seeds, smoothing, epsilon,
                               threads, callback)
            columns = ["gamma1", "gamma2", "seed", "acc", "rob_cs"]
            for row in rows:
                row["pair"] = f"{row['gamma1']:g}:{row['gamma2']:g}"
            summary = median_by(rows, "pair", metrics=("acc", "rob_cs"))
        else:
            rows = r1_r2_comparison(classifier, test_set, seed_class, sizes, smoothing, epsilon,
                                    cm.get_value("seed"), threads)
            columns = ["omega_size", "targets", "rob_cs_r1", "rob_cs_max"]
            summary = []
    finally:
        close()

    write_rows_csv(rows, columns, os.path.join(out_dir, f"{kind}.csv"), preamble)
    if summary:
        write_rows_csv(summary, list(summary[0].keys()), os.path.join(out_dir, f"{kind}_median.csv"), preamble)
    for row in summary or rows:
        print("  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


COMMANDS = {
    "certify": cmd_certify,
    "train": cmd_train,
    "curve": cmd_curve,
    "compare": cmd_curve,
    "gen-data": cmd_gen_data,
    "experiment": cmd_experiment,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        return COMMANDS[args.command](args)
    except ConfigPhaseError as e:
        cause = e.__cause__ or e
        logger.error("配置错误: %s: %s", type(cause).__name__, cause)
        return EXIT_CONFIG
    except Exception as e:
        logger.error("运行失败: %s: %s", type(e).__name__, e)
        logger.debug("traceback", exc_info=True)
        return EXIT_RUNTIME
