"""Interleaved inner/outer meta-training, plus plain supervised pretraining.

Each outer step samples ``m`` tasks. Per task, a support batch (K examples
per task class) drives one or more plain gradient steps on a private copy of
the class latents (the inner loop; the representation is never touched
there). A freshly resampled query batch of the same size is then evaluated
at the adapted class layer, and the averaged full-model gradients of those
query losses drive a single Adam update of every latent (the outer loop).

The outer gradient is first-order by default: the adapted class latents are
treated as constants of the inner step. The exact second-order gradient
coincides with it almost everywhere here, because the hinge loss is
piecewise linear in the class latents and every path from the representation
latents crosses a sign, so the inner-step Jacobian correction vanishes away
from kinks; the ``first_order`` flag is accepted for both settings.

Binarized latents are clipped to [-1, 1] after every optimizer update so the
straight-through masks stay active.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, InputError
from .losses import Grads, backprop_full, class_latent_grad
from .model import ClassLayer, LdcModel, encode_batch, init_model
from .model import DEFAULT_DIM, DEFAULT_HIDDEN, DEFAULT_Q
from .numerics import AdamState, adam_step, make_rng
from .tasks import TaskPool


@dataclass
class MetaConfig:
    """Hyperparameters of the interleaved training loop.

    ``outer_steps`` overrides the epoch-derived schedule when positive;
    otherwise the total is ``epochs * (pool size // (batch_size * m))`` so
    one epoch consumes roughly the training pool once through support
    batches. ``batch_size`` is K times the per-task class count (with
    K-per-class sampling this is the batch the inner loop sees) and is also
    the minibatch size of supervised pretraining.
    """

    outer_steps: int = 0
    inner_tasks: int = 5
    shots: int = 1
    inner_lr: float = 0.1
    outer_lr: float = 0.001
    inner_grad_steps: int = 1
    margin: float = 1.0
    epochs: int = 15
    batch_size: int = 10
    seed: int = 0
    first_order: bool = True

    def __post_init__(self):
        if self.inner_tasks < 1 or self.shots < 1 or self.inner_grad_steps < 1:
            raise ConfigError("inner_tasks, shots and inner_grad_steps must be >= 1")
        if self.outer_lr <= 0 or self.inner_lr < 0:
            raise ConfigError("outer_lr must be > 0 and inner_lr >= 0")
        if self.outer_steps < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("outer_steps/epochs must be >= 0 and batch_size >= 1")


@dataclass
class MetaTrainReport:
    trace: list[tuple[int, float, float]]  # (outer_step, mean_inner_loss, mean_outer_loss)
    wall_time_s: float
    model: LdcModel


class Optimizer:
    """One Adam state per latent array, applied in a fixed order."""

    PARAMS = ("weights_in", "bias_hidden", "weights_out", "bias_out",
              "feature_latent", "class_latent")

    def __init__(self, model: LdcModel):
        vb = model.value_box
        arrays = (vb.weights_in, vb.bias_hidden, vb.weights_out, vb.bias_out,
                  model.feature_layer.latent, model.class_layer.latent)
        self.states = {name: AdamState.for_param(a) for name, a in zip(self.PARAMS, arrays)}

    def step(self, model: LdcModel, grads: Grads, lr: float) -> None:
        vb = model.value_box
        vb.weights_in = adam_step(vb.weights_in, grads.weights_in, self.states["weights_in"], lr)
        vb.bias_hidden = adam_step(vb.bias_hidden, grads.bias_hidden, self.states["bias_hidden"], lr)
        vb.weights_out = adam_step(vb.weights_out, grads.weights_out, self.states["weights_out"], lr)
        vb.bias_out = adam_step(vb.bias_out, grads.bias_out, self.states["bias_out"], lr)
        feat = adam_step(model.feature_layer.latent, grads.feature_latent,
                         self.states["feature_latent"], lr)
        cls = adam_step(model.class_layer.latent, grads.class_latent,
                        self.states["class_latent"], lr)
        # keep binarized latents inside the straight-through clip region
        model.feature_layer.latent = np.clip(feat, -1.0, 1.0)
        model.class_layer.latent = np.clip(cls, -1.0, 1.0)


def inner_update(model: LdcModel, batch_x: np.ndarray, batch_y: np.ndarray,
                 inner_lr: float, steps: int, margin: float,
                 class_subset: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Task-specific class latents after ``steps`` plain gradient steps.

    The support batch is encoded once (the representation is frozen here) and
    the input model is never mutated. Returns the adapted latents and the
    support loss before the first step.
    """
    if len(batch_x) == 0:
        raise InputError("empty support batch")
    encoded = encode_batch(model, batch_x).encoded
    phi = model.class_layer.latent.copy()
    first_loss = 0.0
    for step in range(steps):
        loss, grad = class_latent_grad(encoded, batch_y, phi, margin, class_subset)
        if step == 0:
            first_loss = loss
        phi = phi - inner_lr * grad
    return phi, first_loss


def outer_step(model: LdcModel, pool: TaskPool, task_indices: list[int],
               cfg: MetaConfig, opt: Optimizer, rng: np.random.Generator,
               ) -> tuple[float, float, Grads]:
    """One outer update over ``m`` sampled tasks; mutates model and optimizer.

    Returns (mean inner loss, mean outer loss, the averaged gradients).
    """
    if not task_indices:
        raise InputError("outer_step needs at least one task")
    total = Grads.zeros_like(model)
    inner_losses = []
    outer_losses = []
    for ti in task_indices:
        support_x, support_y = pool.class_batch(ti, cfg.shots, rng)
        subset = pool.class_subset(ti)
        phi_prime, support_loss = inner_update(
            model, support_x, support_y, cfg.inner_lr, cfg.inner_grad_steps,
            cfg.margin, subset)
        query_x, query_y = pool.class_batch(ti, cfg.shots, rng)
        probe = LdcModel(model.value_box, model.feature_layer, ClassLayer(phi_prime))
        loss, grads = backprop_full(probe, query_x, query_y, cfg.margin, subset)
        total.add_(grads)
        inner_losses.append(support_loss)
        outer_losses.append(loss)
    total.scale_(1.0 / len(task_indices))
    opt.step(model, total, cfg.outer_lr)
    return float(np.mean(inner_losses)), float(np.mean(outer_losses)), total


def _validate_pool(pool: TaskPool, shots: int) -> None:
    for ti, task in enumerate(pool.tasks):
        idx, labels = pool._views[ti]
        classes = sorted(task.classes) if task.kind == "class-subset" else range(pool.dataset.n_classes)
        for c in classes:
            have = int(np.count_nonzero(labels == c))
            if have < 2 * shots:
                raise DataError(
                    f"task {task.task_id()}: class {c} has {have} examples, "
                    f"needs >= {2 * shots} for support + query sampling"
                )


def resolve_outer_steps(cfg: MetaConfig, pool_examples: int) -> tuple[int, int]:
    """(total outer steps, steps per epoch) implied by the config."""
    per_epoch = max(1, pool_examples // (cfg.batch_size * cfg.inner_tasks))
    if cfg.outer_steps > 0:
        return cfg.outer_steps, per_epoch
    return cfg.epochs * per_epoch, per_epoch


def meta_train(pool: TaskPool, cfg: MetaConfig, dim: int = DEFAULT_DIM,
               hidden: int = DEFAULT_HIDDEN, q_levels: int = DEFAULT_Q) -> MetaTrainReport:
    """Run the full interleaved schedule and return the trained model.

    Tasks are consumed in a per-epoch shuffled cycle (without replacement
    within each pass over the pool, reshuffled at epoch boundaries), so a
    seed pins the entire trajectory.
    """
    _validate_pool(pool, cfg.shots)
    start = time.perf_counter()
    model = init_model(pool.dataset.n_features, pool.dataset.n_classes,
                       dim=dim, hidden=hidden, q_levels=q_levels, seed=cfg.seed)
    opt = Optimizer(model)
    total_steps, per_epoch = resolve_outer_steps(cfg, pool.n_examples)
    shuffle_rng = make_rng(cfg.seed, 0x5f0e)
    batch_rng = make_rng(cfg.seed, 0xba7c)
    n_tasks = len(pool.tasks)
    order = np.arange(n_tasks)
    cursor = 0
    trace: list[tuple[int, float, float]] = []
    for step in range(total_steps):
        if step % per_epoch == 0:
            order = shuffle_rng.permutation(n_tasks)
            cursor = 0
        picks = [int(order[(cursor + j) % n_tasks]) for j in range(cfg.inner_tasks)]
        cursor = (cursor + cfg.inner_tasks) % n_tasks
        inner_loss, outer_loss, _ = outer_step(model, pool, picks, cfg, opt, batch_rng)
        trace.append((step, inner_loss, outer_loss))
    return MetaTrainReport(trace, time.perf_counter() - start, model)


def supervised_train(pool: TaskPool, cfg: MetaConfig, dim: int = DEFAULT_DIM,
                     hidden: int = DEFAULT_HIDDEN, q_levels: int = DEFAULT_Q,
                     batches=None) -> MetaTrainReport:
    """Standard mini-batch hinge training on the pooled task data.

    This is the pretraining baseline: the same loss and optimizer as the
    outer loop, no inner loop, batches drawn from one transformed copy of the
    training data. ``batches`` substitutes an explicit batch sequence (used
    by equivalence tests).
    """
    start = time.perf_counter()
    model = init_model(pool.dataset.n_features, pool.dataset.n_classes,
                       dim=dim, hidden=hidden, q_levels=q_levels, seed=cfg.seed)
    opt = Optimizer(model)
    trace: list[tuple[int, float, float]] = []
    if batches is None:
        pooled = pool.pooled(cfg.seed)
        rng = make_rng(cfg.seed, 0x50be)
        per_epoch = max(1, len(pooled) // cfg.batch_size)
        total = cfg.outer_steps if cfg.outer_steps > 0 else cfg.epochs * per_epoch

        def batch_gen():
            step = 0
            while step < total:
                perm = rng.permutation(len(pooled))
                for b in range(per_epoch):
                    if step >= total:
                        return
                    rows = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                    yield pooled.features[rows], pooled.labels[rows]
                    step += 1

        batches = batch_gen()
    for step, (bx, by) in enumerate(batches):
        loss, grads = backprop_full(model, bx, by, cfg.margin)
        opt.step(model, grads, cfg.outer_lr)
        trace.append((step, loss, loss))
    return MetaTrainReport(trace, time.perf_counter() - start, model)
