"""Command-line interface.

Subcommands: ``meta-train``, ``evaluate``, ``adapt``, ``ablate``,
``robustness``, ``model size``, ``hdc-train``. All experiment commands take
``--config <json>`` plus optional ``--seed`` and ``--out`` overrides. On
failure a machine-readable JSON object goes to stderr and the exit code is
nonzero (2 for configuration/format problems, 1 otherwise).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments
from .adapt import fast_adapt, fast_adapt_baked
from .config import ExperimentConfig, config_from_dict, load_config
from .errors import ConfigError, FormatError, LdcError
from .serialize import MAGIC_CHECKPOINT, deserialize, deserialize_checkpoint
from .tasks import TaskSpec, make_episode


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed])
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="run a single seed")
    p.add_argument("--out", default=None, help="override the output directory")


def _cmd_meta_train(args) -> int:
    cfg = _load_cfg(args)
    paths = experiments.cmd_meta_train(cfg)
    print(json.dumps({"models": [str(p) for p in paths]}))
    return 0


def _cmd_hdc_train(args) -> int:
    cfg = _load_cfg(args)
    paths = experiments.cmd_hdc_train(cfg)
    print(json.dumps({"models": [str(p) for p in paths]}))
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    rows = experiments.cmd_evaluate(cfg)
    print(json.dumps({"rows": len(rows), "summary": experiments.summarize(rows)},
                     indent=2, sort_keys=True))
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    grid = [int(v) for v in args.grid.split(",")] if args.grid else None
    rows = experiments.cmd_ablate(cfg, args.sweep, grid)
    print(json.dumps({"rows": len(rows)}))
    return 0


def _cmd_robustness(args) -> int:
    cfg = _load_cfg(args)
    grid = [float(v) for v in args.grid.split(",")] if args.grid else None
    rows = experiments.cmd_robustness(cfg, grid, max_query=args.max_query)
    print(json.dumps({"rows": rows}, indent=2))
    return 0


def _cmd_model_size(args) -> int:
    report = experiments.cmd_model_size(args.file)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _parse_episode_spec(path: str) -> dict:
    doc = json.loads(Path(path).read_text())
    allowed = {"dataset", "data", "task", "shots", "seed"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"episode spec: unknown fields {sorted(unknown)}", "episode")
    for key in ("dataset", "task", "shots", "seed"):
        if key not in doc:
            raise ConfigError(f"episode spec: missing field {key!r}", f"episode.{key}")
    return doc


def _cmd_adapt(args) -> int:
    from .config import DataConfig, ModelConfig
    from .adapt import AdaptConfig
    from .config import _build  # strict parser

    spec = _parse_episode_spec(args.episode)
    data_cfg = _build(DataConfig, spec.get("data", {}), "data")
    exp = ExperimentConfig(dataset=spec["dataset"], data=data_cfg)
    _, test = experiments.load_datasets(exp)
    task_doc = spec["task"]
    task = TaskSpec(kind=task_doc.get("kind", ""),
                    angle=task_doc.get("angle"),
                    classes=tuple(task_doc["classes"]) if task_doc.get("classes") else None)
    episode = make_episode(task, int(spec["shots"]), int(spec["seed"]), test)
    acfg = _build(AdaptConfig, json.loads(args.adapt_config) if args.adapt_config else {}, "adapt")
    acfg = replace(acfg, shots=int(spec["shots"]))
    raw = Path(args.model).read_bytes()
    if raw[:4] == MAGIC_CHECKPOINT:
        result = fast_adapt(deserialize_checkpoint(raw), episode, acfg)
    else:
        result = fast_adapt_baked(deserialize(raw), episode, acfg)
    out = {
        "task": task.task_id(),
        "variant": acfg.variant,
        "grad_steps": acfg.grad_steps,
        "support_accuracy_trace": result.support_accuracy_trace,
        "query_accuracy": result.query_accuracy,
        "deployable": result.deployable,
    }
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldcmeta",
                                     description="meta-trained low-dimensional bipolar classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meta-train", help="train the configured method per seed")
    _add_common(p)
    p.set_defaults(func=_cmd_meta_train)

    p = sub.add_parser("hdc-train", help="train the retrained HDC baseline per seed")
    _add_common(p)
    p.set_defaults(func=_cmd_hdc_train)

    p = sub.add_parser("evaluate", help="episode evaluation of trained models")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="K or M hyperparameter sweep")
    _add_common(p)
    p.add_argument("--sweep", choices=["K", "M"], required=True)
    p.add_argument("--grid", default=None, help="comma-separated values")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("robustness", help="random bit-error sweep of deployed models")
    _add_common(p)
    p.add_argument("--grid", default=None, help="comma-separated flip probabilities")
    p.add_argument("--max-query", type=int, default=2000)
    p.set_defaults(func=_cmd_robustness)

    p = sub.add_parser("adapt", help="adapt a serialized model to one episode")
    p.add_argument("--model", required=True, help="LDCT checkpoint or LDC1 baked file")
    p.add_argument("--episode", required=True, help="episode spec JSON")
    p.add_argument("--adapt-config", default=None, help="inline AdaptConfig JSON")
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("model", help="model file utilities")
    model_sub = p.add_subparsers(dest="model_command", required=True)
    ps = model_sub.add_parser("size", help="payload size report")
    ps.add_argument("file")
    ps.set_defaults(func=_cmd_model_size)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc), "field": exc.field}),
              file=sys.stderr)
        return 2
    except FormatError as exc:
        print(json.dumps({"error": "FormatError", "message": str(exc)}), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "message": str(exc)}), file=sys.stderr)
        return 1
    except LdcError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
