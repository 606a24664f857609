"""End-to-end experiment drivers behind the CLI.

Every driver is deterministic given (config, seeds): datasets load from the
configured paths, task pools and episodes derive from seeds, and all
emitted CSVs carry the config hash. Model files are written per method and
seed (`model_<method>_seed<seed>.ldct` training checkpoints, `.hdc1` for
the baseline) so evaluation can run in a separate invocation.
"""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adapt import AdaptConfig, fast_adapt, restricted_argmax
from .config import METHOD_VARIANTS, ExperimentConfig, config_hash
from .data import Dataset, load_isolet, load_mnist, subset_per_class
from .errors import ConfigError, DataError, InputError
from .faults import robustness_sweep
from .hdc import (HdcModel, bake_hdc, hdc_encode_batch, hdc_predict_batch,
                  hdc_init, hdc_retrain, hdc_scores, hdc_train)
from .meta import MetaConfig, MetaTrainReport, meta_train, supervised_train
from .model import LdcModel, bake
from .numerics import make_rng
from .reports import svg_line_chart, write_csv
from .serialize import (deserialize, deserialize_checkpoint, serialize,
                        serialize_checkpoint, size_report)
from .tasks import (Episode, TaskPool, TaskSpec, make_episode, make_eval_tasks,
                    sample_training_tasks)

DEFAULT_P_GRID = (0.0, 0.001, 0.005, 0.01, 0.05, 0.1)
ABLATION_GRIDS = {
    "rmnist": {"K": (1, 5, 10, 20, 40), "M": (10, 50, 100, 150)},
    "sisolet": {"K": (1, 2, 3, 4, 5), "M": (1, 5, 10, 15)},
}

META_METHODS = ("metaldc", "metaldc-full", "metaldc-nft")


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    d = cfg.data
    if cfg.dataset == "rmnist":
        train = load_mnist(d.mnist_train_images, d.mnist_train_labels, split="train")
        test = load_mnist(d.mnist_test_images, d.mnist_test_labels, split="test")
    else:
        train, stats = load_isolet(d.isolet_train, split="train")
        test, _ = load_isolet(d.isolet_test, split="test", stats=stats)
    if d.train_subset:
        train = subset_per_class(train, d.train_subset, seed=0)
    return train, test


def build_pool(cfg: ExperimentConfig, train: Dataset, seed: int) -> TaskPool:
    rng = make_rng(seed, 0x7a58)
    tasks = sample_training_tasks(cfg.dataset, cfg.data.n_train_tasks, rng)
    return TaskPool(tasks, train)


def eval_task_list(cfg: ExperimentConfig) -> list[TaskSpec]:
    # letter eval tasks are pinned by the smallest seed so that every seed
    # (and every method) sees the same task set
    return make_eval_tasks(cfg.dataset, seed=min(cfg.seeds), n_tasks=cfg.data.n_eval_tasks)


def model_path(cfg: ExperimentConfig, method: str, seed: int) -> Path:
    ext = "hdc1" if method == "hdc-retrain" else "ldct"
    return Path(cfg.out_dir) / f"model_{method}_seed{seed}.{ext}"


def train_ldc_method(cfg: ExperimentConfig, pool: TaskPool, method: str, seed: int) -> MetaTrainReport:
    mc = replace(cfg.meta, seed=seed)
    m = cfg.model
    if method in META_METHODS:
        return meta_train(pool, mc, dim=m.dim, hidden=m.hidden, q_levels=m.q_levels)
    if method == "pretrained-ldc":
        return supervised_train(pool, mc, dim=m.dim, hidden=m.hidden, q_levels=m.q_levels)
    raise ConfigError(f"method {method!r} does not train an LDC model", "method")


def train_hdc(cfg: ExperimentConfig, pool: TaskPool, seed: int) -> HdcModel:
    hc = replace(cfg.hdc, seed=seed)
    train = pool.pooled(seed)
    model = hdc_init(train.n_features, cfg.model.q_levels, train.n_classes, hc)
    encoded = hdc_encode_batch(model, train.features)
    model = hdc_train(model, train.features, train.labels, encoded=encoded)
    return hdc_retrain(model, train.features, train.labels,
                       hc.retrain_epochs, hc.retrain_rate, encoded=encoded)


def cmd_meta_train(cfg: ExperimentConfig, seeds: list[int] | None = None) -> list[Path]:
    """Train the configured method for each seed; save models and loss traces."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    train, _ = load_datasets(cfg)
    written = []
    for seed in (seeds or cfg.seeds):
        pool = build_pool(cfg, train, seed)
        path = model_path(cfg, cfg.method, seed)
        if cfg.method == "hdc-retrain":
            model = train_hdc(cfg, pool, seed)
            path.write_bytes(serialize(bake_hdc(model)))
            trace_rows = []
        else:
            report = train_ldc_method(cfg, pool, cfg.method, seed)
            path.write_bytes(serialize_checkpoint(report.model))
            trace_rows = report.trace
        write_csv(out / f"train_{cfg.method}_seed{seed}.csv",
                  ["outer_step", "mean_inner_loss", "mean_outer_loss"],
                  trace_rows, chash)
        written.append(path)
    return written


def cmd_hdc_train(cfg: ExperimentConfig, seeds: list[int] | None = None) -> list[Path]:
    """Train the retrained HDC baseline regardless of cfg.method."""
    hdc_cfg = replace(cfg, method="hdc-retrain")
    return cmd_meta_train(hdc_cfg, seeds)


def _evaluate_hdc_episode(hdc_file_model: HdcModel, episode: Episode,
                          cfg: ExperimentConfig) -> float:
    """HDC accuracy on one episode (no gradient fine-tuning).

    Digit tasks reuse the class hypervectors trained on the rotated pool.
    Letter tasks involve classes the pooled training never saw, so the class
    memory is rebuilt from the episode support by the standard average-and-
    retrain procedure; the item memory stays fixed.
    """
    model = hdc_file_model
    if episode.task.kind == "class-subset":
        subset = np.array(sorted(episode.task.classes))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # classes outside the task are empty by design
            model = hdc_train(model, episode.support_x, episode.support_y)
        model = hdc_retrain(model, episode.support_x, episode.support_y,
                            cfg.hdc.retrain_epochs, cfg.hdc.retrain_rate,
                            class_subset=subset)
    else:
        subset = None
    scores = hdc_scores(model, hdc_encode_batch(model, episode.query_x))
    pred = restricted_argmax(scores, subset)
    return float(np.mean(pred == episode.query_y))


def hdc_from_file(path: Path) -> HdcModel:
    baked = deserialize(path.read_bytes())
    from .bits import unpack_bipolar

    value = unpack_bipolar(baked.value_lut_bits, baked.dim)
    feat = unpack_bipolar(baked.feature_bits, baked.dim)
    cls = unpack_bipolar(baked.class_bits, baked.dim)
    return HdcModel(feat, value, cls.astype(np.float64), cls)


def evaluate_method(cfg: ExperimentConfig, method: str, test: Dataset,
                    tasks: list[TaskSpec], seed: int,
                    model: LdcModel | HdcModel | None = None) -> list[dict]:
    """Rows for one (method, seed): adapt per task episode, measure query accuracy."""
    if model is None:
        path = model_path(cfg, method, seed)
        if not path.exists():
            raise InputError(f"trained model file missing: {path} (run meta-train first)")
        if method == "hdc-retrain":
            model = hdc_from_file(path)
        else:
            model = deserialize_checkpoint(path.read_bytes())
            _check_compat(model, test)
    rows = []
    variant = METHOD_VARIANTS[method]
    acfg = replace(cfg.adapt, variant=variant)
    for task in tasks:
        episode = make_episode(task, acfg.shots, seed, test)
        start = time.perf_counter()
        if method == "hdc-retrain":
            acc = _evaluate_hdc_episode(model, episode, cfg)
        else:
            acc = fast_adapt(model, episode, acfg).query_accuracy
        elapsed = time.perf_counter() - start
        rows.append({
            "method": method, "task": task.task_id(), "K": cfg.meta.shots,
            "M": acfg.shots, "seed": seed, "accuracy": acc, "adapt_s": elapsed,
        })
    return rows


def _check_compat(model: LdcModel, test: Dataset) -> None:
    if model.n_features != test.n_features or model.n_classes != test.n_classes:
        raise InputError(
            f"model ({model.n_features} features, {model.n_classes} classes) does not "
            f"match dataset ({test.n_features} features, {test.n_classes} classes)"
        )


def summarize(rows: list[dict]) -> dict:
    """Per (method, task) mean and std of accuracy across seeds."""
    table: dict[str, dict[str, dict[str, float]]] = {}
    methods = sorted({r["method"] for r in rows})
    tasks = sorted({r["task"] for r in rows})
    for method in methods:
        table[method] = {}
        for task in tasks:
            accs = [r["accuracy"] for r in rows if r["method"] == method and r["task"] == task]
            if accs:
                table[method][task] = {
                    "mean": float(np.mean(accs)),
                    "std": float(np.std(accs)),
                    "n_seeds": len(accs),
                }
    return table


def cmd_evaluate(cfg: ExperimentConfig) -> list[dict]:
    """Evaluate the configured method on the eval tasks for every seed."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, test = load_datasets(cfg)
    tasks = eval_task_list(cfg)
    rows: list[dict] = []
    for seed in cfg.seeds:
        rows.extend(evaluate_method(cfg, cfg.method, test, tasks, seed))
    chash = config_hash(cfg)
    write_csv(out / f"results_{cfg.method}.csv",
              ["method", "task", "K", "M", "seed", "accuracy", "adapt_s"],
              [[r[k] for k in ("method", "task", "K", "M", "seed", "accuracy", "adapt_s")]
               for r in rows], chash)
    (out / f"summary_{cfg.method}.json").write_text(
        json.dumps({"config_hash": chash, "table": summarize(rows)}, indent=2, sort_keys=True) + "\n")
    return rows


def cmd_ablate(cfg: ExperimentConfig, sweep: str, grid: list[int] | None = None) -> list[dict]:
    """Sweep K (retrains per point) or M (reuses the trained models)."""
    if sweep not in ("K", "M"):
        raise ConfigError(f"sweep must be 'K' or 'M', got {sweep!r}", "sweep")
    if cfg.method == "hdc-retrain":
        raise ConfigError("the K/M ablation applies to the gradient-trained methods", "method")
    values = list(grid) if grid else list(ABLATION_GRIDS[cfg.dataset][sweep])
    if not values:
        raise ConfigError("empty sweep grid", "sweep")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_datasets(cfg)
    tasks = eval_task_list(cfg)
    rows: list[dict] = []
    for seed in cfg.seeds:
        pool = build_pool(cfg, train, seed)
        if sweep == "M":
            model = train_ldc_method(cfg, pool, cfg.method, seed).model
            for m_shots in values:
                sub = replace(cfg, adapt=replace(cfg.adapt, shots=int(m_shots)))
                for r in evaluate_method(sub, cfg.method, test, tasks, seed, model=model):
                    rows.append({**r, "sweep": "M", "value": int(m_shots)})
        else:
            for k in values:
                sub = replace(cfg, meta=replace(cfg.meta, shots=int(k),
                                                batch_size=_batch_for_k(cfg, int(k))))
                model = train_ldc_method(sub, pool, cfg.method, seed).model
                for r in evaluate_method(sub, cfg.method, test, tasks, seed, model=model):
                    rows.append({**r, "sweep": "K", "value": int(k), "K": int(k)})
    chash = config_hash(cfg)
    write_csv(out / f"ablate_{sweep}_{cfg.method}.csv",
              ["sweep", "value", "method", "task", "K", "M", "seed", "accuracy"],
              [[r[k] for k in ("sweep", "value", "method", "task", "K", "M", "seed", "accuracy")]
               for r in rows], chash)
    xs = values
    ys = [float(np.mean([r["accuracy"] for r in rows if r["value"] == v])) for v in values]
    svg_line_chart(out / f"ablate_{sweep}_{cfg.method}.svg",
                   f"accuracy vs {sweep} ({cfg.method}, {cfg.dataset})", sweep, "accuracy",
                   {cfg.method: (xs, ys)})
    return rows


def _batch_for_k(cfg: ExperimentConfig, k: int) -> int:
    n_way = 4 if cfg.dataset == "sisolet" else 10
    return k * n_way


def cmd_robustness(cfg: ExperimentConfig, p_grid: list[float] | None = None,
                   max_query: int = 2000) -> list[dict]:
    """Bit-error sweep of the configured method's deployed models.

    Each seed adapts on every eval episode, the adapted model is baked, and
    each grid point injects `trials` seeded corruptions. Query sets are
    capped at ``max_query`` rows for runtime; the p = 0 row still equals the
    uncapped fault-free accuracy on the capped set exactly.
    """
    grid = list(p_grid) if p_grid else list(DEFAULT_P_GRID)
    trials = cfg.fault.trials if cfg.fault else 10
    scope = cfg.fault.scope if cfg.fault else "all"
    base_seed = cfg.fault.seed if cfg.fault else 0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, test = load_datasets(cfg)
    tasks = eval_task_list(cfg)
    variant = METHOD_VARIANTS[cfg.method]
    acfg = replace(cfg.adapt, variant=variant)
    per_p: dict[float, list[float]] = {p: [] for p in grid}
    for seed in cfg.seeds:
        path = model_path(cfg, cfg.method, seed)
        if not path.exists():
            raise InputError(f"trained model file missing: {path} (run meta-train first)")
        for task in tasks:
            episode = make_episode(task, acfg.shots, seed, test)
            if len(episode.query_x) > max_query:
                episode = Episode(task, episode.support_x, episode.support_y,
                                  episode.query_x[:max_query], episode.query_y[:max_query])
            if cfg.method == "hdc-retrain":
                model = hdc_from_file(path)
                if episode.task.kind == "class-subset":
                    sub = np.array(sorted(episode.task.classes))
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        model = hdc_train(model, episode.support_x, episode.support_y)
                    model = hdc_retrain(model, episode.support_x, episode.support_y,
                                        cfg.hdc.retrain_epochs, cfg.hdc.retrain_rate,
                                        class_subset=sub)
                baked = bake_hdc(model)
            else:
                ldc = deserialize_checkpoint(path.read_bytes())
                baked = bake(fast_adapt(ldc, episode, acfg).model)
            sweep = robustness_sweep(baked, [episode], grid, trials,
                                     seed=base_seed + seed, scope=scope)
            for (p, mean_acc, _std) in sweep:
                per_p[p].append(mean_acc)
    rows = [{"p": p, "mean_acc": float(np.mean(per_p[p])), "std_acc": float(np.std(per_p[p])),
             "model_variant": cfg.method} for p in grid]
    chash = config_hash(cfg)
    write_csv(out / f"robustness_{cfg.method}.csv",
              ["p", "mean_acc", "std_acc", "model_variant"],
              [[r["p"], r["mean_acc"], r["std_acc"], r["model_variant"]] for r in rows], chash)
    svg_line_chart(out / f"robustness_{cfg.method}.svg",
                   f"bit-error robustness ({cfg.method}, {cfg.dataset})",
                   "bit flip probability", "accuracy",
                   {cfg.method: ([r["p"] for r in rows], [r["mean_acc"] for r in rows])})
    return rows


def cmd_model_size(path: str | Path) -> dict:
    return size_report(Path(path).read_bytes())
