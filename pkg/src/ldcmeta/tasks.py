"""Task distributions and M-shot N-way episode construction.

A task is either a rotation of the digit data (all ten classes, features
rotated by a fixed angle) or a subset of the spoken-letter classes (labels
stay global; scoring is restricted to the subset). Episodes are derived
purely from ``(task, shots, seed)`` so every method sees identical support
and query data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, RotationGrid
from .errors import ConfigError, DataError
from .numerics import make_rng

RMNIST_EVAL_ANGLES = (0.0, 2.0, 4.0, 6.0, 8.0)
RMNIST_TRAIN_ANGLE_RANGE = (10.0, 20.0)
SISOLET_N_WAY = 4
SISOLET_TRAIN_CLASSES = tuple(range(20))
SISOLET_EVAL_CLASSES = tuple(range(20, 26))


@dataclass(frozen=True)
class TaskSpec:
    """One classification task: a rotation angle or a class subset."""

    kind: str  # "rotation" | "class-subset"
    angle: float | None = None
    classes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind == "rotation":
            if self.angle is None or not np.isfinite(self.angle):
                raise ConfigError(f"rotation task needs a finite angle, got {self.angle}")
        elif self.kind == "class-subset":
            if not self.classes or len(set(self.classes)) != len(self.classes):
                raise ConfigError(f"class-subset task needs distinct classes, got {self.classes}")
        else:
            raise ConfigError(f"unknown task kind {self.kind!r}")

    def fingerprint(self) -> int:
        """Stable 63-bit integer identifying the task (for seed derivation)."""
        if self.kind == "rotation":
            return (1 << 60) + int(round(self.angle * 1_000_000))
        acc = 2 << 60
        for c in self.classes:
            acc = (acc * 1_000_003 + c + 1) % (1 << 63)
        return acc

    def task_id(self) -> str:
        if self.kind == "rotation":
            return f"rot{self.angle:g}"
        return "cls" + "-".join(str(c) for c in self.classes)


@dataclass
class Episode:
    """Support/query split of one task's evaluation data."""

    task: TaskSpec
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray

    def class_subset(self, n_classes: int) -> np.ndarray | None:
        if self.task.kind == "class-subset":
            return np.array(sorted(self.task.classes))
        return None


def sample_training_tasks(kind: str, n_tasks: int, rng: np.random.Generator,
                          train_classes: tuple[int, ...] = SISOLET_TRAIN_CLASSES,
                          n_way: int = SISOLET_N_WAY) -> list[TaskSpec]:
    """Draw the meta-training task pool.

    Digit tasks get angles uniform in [10, 20); letter tasks get ``n_way``
    distinct classes from the training-class pool.
    """
    if kind == "rmnist":
        lo, hi = RMNIST_TRAIN_ANGLE_RANGE
        return [TaskSpec("rotation", angle=float(a))
                for a in rng.uniform(lo, hi, size=n_tasks)]
    if kind == "sisolet":
        if n_way > len(train_classes):
            raise ConfigError(f"n_way={n_way} exceeds the {len(train_classes)}-class training pool")
        tasks = []
        for _ in range(n_tasks):
            chosen = rng.choice(len(train_classes), size=n_way, replace=False)
            tasks.append(TaskSpec("class-subset",
                                  classes=tuple(int(train_classes[i]) for i in chosen)))
        return tasks
    raise ConfigError(f"unknown dataset kind {kind!r}")


def make_eval_tasks(kind: str, seed: int, n_tasks: int = 5,
                    eval_classes: tuple[int, ...] = SISOLET_EVAL_CLASSES,
                    n_way: int = SISOLET_N_WAY) -> list[TaskSpec]:
    """Evaluation tasks: the five fixed angles, or held-out letter subsets."""
    if kind == "rmnist":
        return [TaskSpec("rotation", angle=a) for a in RMNIST_EVAL_ANGLES]
    if kind == "sisolet":
        rng = make_rng(seed, 0xe7a1)
        return sample_training_tasks("sisolet", n_tasks, rng,
                                     train_classes=eval_classes, n_way=n_way)
    raise ConfigError(f"unknown dataset kind {kind!r}")


class _GridCache:
    """Shared rotation grids keyed by (side, angle)."""

    def __init__(self):
        self._grids: dict[tuple[int, float], RotationGrid] = {}

    def get(self, side: int, angle: float) -> RotationGrid:
        key = (side, float(angle))
        if key not in self._grids:
            self._grids[key] = RotationGrid(side, angle)
        return self._grids[key]


_GRIDS = _GridCache()


def task_view(task: TaskSpec, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Indices and labels of the dataset rows that belong to the task."""
    if task.kind == "rotation":
        return np.arange(len(dataset)), dataset.labels
    member = np.isin(dataset.labels, task.classes)
    idx = np.flatnonzero(member)
    return idx, dataset.labels[idx]


def materialize(task: TaskSpec, dataset: Dataset, idx: np.ndarray) -> np.ndarray:
    """Features for the given rows with the task transform applied."""
    feats = dataset.features[idx]
    if task.kind == "rotation" and task.angle % 360.0 != 0.0:
        side = int(round(np.sqrt(dataset.n_features)))
        feats = _GRIDS.get(side, task.angle).apply(feats.reshape(-1, side, side))
        feats = feats.reshape(len(idx), -1)
    return feats


def make_episode(task: TaskSpec, shots: int, seed: int, dataset: Dataset) -> Episode:
    """Support (exactly ``shots`` per class, without replacement) plus the
    remaining task rows as the query set."""
    idx, labels = task_view(task, dataset)
    task_classes = sorted(task.classes) if task.kind == "class-subset" else range(dataset.n_classes)
    rng = make_rng(seed, task.fingerprint(), shots)
    support_rows: list[np.ndarray] = []
    for c in task_classes:
        rows = idx[labels == c]
        if len(rows) < shots + 1:
            raise DataError(
                f"task {task.task_id()}: class {c} has {len(rows)} examples, "
                f"needs more than shots={shots}"
            )
        support_rows.append(rng.permutation(rows)[:shots])
    support_idx = np.sort(np.concatenate(support_rows))
    query_idx = np.setdiff1d(idx, support_idx)
    return Episode(
        task=task,
        support_x=materialize(task, dataset, support_idx),
        support_y=dataset.labels[support_idx],
        query_x=materialize(task, dataset, query_idx),
        query_y=dataset.labels[query_idx],
    )


class TaskPool:
    """Meta-training task pool bound to its training dataset.

    Provides K-per-class batch sampling for the inner/outer loops and a
    deterministic pooled view of the data (each row assigned to one task and
    transformed) for supervised pretraining and the HDC baseline.
    """

    def __init__(self, tasks: list[TaskSpec], dataset: Dataset):
        if not tasks:
            raise ConfigError("empty task pool")
        self.tasks = tasks
        self.dataset = dataset
        self._views = [task_view(t, dataset) for t in tasks]

    @property
    def n_examples(self) -> int:
        return len(self.dataset)

    def class_batch(self, task_index: int, k: int, rng: np.random.Generator,
                    ) -> tuple[np.ndarray, np.ndarray]:
        """K examples per task class, transformed; labels are global."""
        task = self.tasks[task_index]
        idx, labels = self._views[task_index]
        classes = sorted(task.classes) if task.kind == "class-subset" else range(self.dataset.n_classes)
        picks: list[np.ndarray] = []
        for c in classes:
            rows = idx[labels == c]
            if len(rows) < k:
                raise DataError(f"task {task.task_id()}: class {c} has {len(rows)} < K={k} examples")
            picks.append(rng.choice(rows, size=k, replace=False))
        chosen = np.concatenate(picks)
        return materialize(task, self.dataset, chosen), self.dataset.labels[chosen]

    def class_subset(self, task_index: int) -> np.ndarray | None:
        task = self.tasks[task_index]
        if task.kind == "class-subset":
            return np.array(sorted(task.classes))
        return None

    def pooled(self, seed: int) -> Dataset:
        """One transformed copy of the data, rows spread across the pool's tasks."""
        rng = make_rng(seed, 0xb00c)
        order = rng.permutation(len(self.dataset))
        feats = np.empty_like(self.dataset.features)
        assignment = np.arange(len(order)) % len(self.tasks)
        for t, task in enumerate(self.tasks):
            rows = order[assignment == t]
            feats[rows] = materialize(task, self.dataset, rows)
        if self.tasks[0].kind == "class-subset":
            train_classes = sorted({c for t in self.tasks for c in t.classes})
            keep = np.flatnonzero(np.isin(self.dataset.labels, train_classes))
            return Dataset(feats[keep], self.dataset.labels[keep],
                           self.dataset.n_classes, self.dataset.split)
        return Dataset(feats, self.dataset.labels, self.dataset.n_classes, self.dataset.split)
