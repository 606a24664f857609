"""Experiment configuration: a strict JSON schema with dotted-path errors.

Unknown keys are rejected (silent typos in hyperparameter names are the
classic way to burn a training run). Every document hashes to a short hex
digest that the report writers stamp into their CSV rows.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .adapt import AdaptConfig
from .errors import ConfigError
from .faults import FaultConfig
from .hdc import HdcConfig
from .meta import MetaConfig

DATASETS = ("rmnist", "sisolet")
METHODS = ("metaldc", "metaldc-full", "metaldc-nft", "pretrained-ldc", "hdc-retrain")

METHOD_VARIANTS = {
    "metaldc": "last-layer",
    "metaldc-full": "full",
    "metaldc-nft": "none",
    "pretrained-ldc": "last-layer",
    "hdc-retrain": "none",
}


@dataclass
class DataConfig:
    mnist_train_images: str = "data/train-images-idx3-ubyte.gz"
    mnist_train_labels: str = "data/train-labels-idx1-ubyte.gz"
    mnist_test_images: str = "data/t10k-images-idx3-ubyte.gz"
    mnist_test_labels: str = "data/t10k-labels-idx1-ubyte.gz"
    isolet_train: str = "data/isolet_train.csv.gz"
    isolet_test: str = "data/isolet_test.csv.gz"
    train_subset: int = 0      # 0 keeps the whole training split
    n_train_tasks: int = 20
    n_eval_tasks: int = 5      # letter tasks only; digit rotations are fixed


@dataclass
class ModelConfig:
    dim: int = 64
    hidden: int = 32
    q_levels: int = 256

    def __post_init__(self):
        if self.dim < 1 or self.hidden < 1 or self.q_levels < 2:
            raise ConfigError("dim and hidden must be >= 1, q_levels >= 2")


@dataclass
class ExperimentConfig:
    dataset: str = "rmnist"
    method: str = "metaldc"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    hdc: HdcConfig = field(default_factory=HdcConfig)
    fault: FaultConfig | None = None
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out_dir: str = "results"

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}", "dataset")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}", "method")
        if not self.seeds:
            raise ConfigError("at least one seed is required", "seeds")


_SECTION_TYPES = {
    "data": DataConfig,
    "model": ModelConfig,
    "meta": MetaConfig,
    "adapt": AdaptConfig,
    "hdc": HdcConfig,
    "fault": FaultConfig,
}


def _build(cls, doc: dict, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or cls.__name__}: expected an object, got {type(doc).__name__}", path)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{where}: unknown field", where)
        sub = _SECTION_TYPES.get(key)
        if sub is not None and cls is ExperimentConfig:
            kwargs[key] = _build(sub, value, where) if value is not None else None
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}", path) from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, doc, "")


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "config")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", "config")
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: ExperimentConfig) -> str:
    """12-hex digest of the canonical JSON form; stamped into every CSV."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
