"""On-device adaptation: freeze the representation, update the class layer.

The ``last-layer`` variant is the deployment path: support examples are
encoded exactly once (the frozen representation makes their H vectors
constant), then each step applies the closed-form hinge gradient to the
class latents with plain gradient descent; no optimizer state, no
backpropagation, no representation gradients. ``full`` updates every latent
by backpropagation (expensive, kept as a comparison baseline and flagged as
not deployable on tiny targets); ``none`` evaluates the model as-is.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .bits import pack_bipolar, sign_pm1, unpack_bipolar
from .errors import ConfigError, DataError, InputError, ProtocolError
from .losses import backprop_full, class_latent_grad
from .model import BakedModel, LdcModel, baked_encode, class_scores, encode_batch
from .tasks import Episode

VARIANTS = ("last-layer", "full", "none")


@dataclass
class AdaptConfig:
    shots: int = 10
    grad_steps: int = 5
    lr: float = 0.1
    margin: float = 1.0
    variant: str = "last-layer"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant != "none" and self.shots < 1:
            raise ConfigError(f"variant {self.variant!r} needs shots >= 1")
        if self.lr < 0 or self.grad_steps < 0:
            raise ConfigError("lr and grad_steps must be >= 0")


@dataclass
class AdaptResult:
    model: LdcModel | BakedModel
    support_accuracy_trace: list[float]  # before adaptation, then after each step
    query_accuracy: float
    deployable: bool  # False for the full-backprop variant


def restricted_argmax(scores: np.ndarray, class_subset: np.ndarray | None) -> np.ndarray:
    """Argmax over all classes or over a sorted subset (lowest index wins ties)."""
    if class_subset is None:
        return np.argmax(scores, axis=-1)
    sub = np.asarray(class_subset)
    return sub[np.argmax(scores[..., sub], axis=-1)]


def accuracy_from_encoded(encoded: np.ndarray, y: np.ndarray, class_latent: np.ndarray,
                          class_subset: np.ndarray | None) -> float:
    scores = encoded.astype(np.int32) @ sign_pm1(class_latent).astype(np.int32).T
    return float(np.mean(restricted_argmax(scores, class_subset) == y))


def model_accuracy(model: LdcModel, x: np.ndarray, y: np.ndarray,
                   class_subset: np.ndarray | None = None, chunk: int = 512) -> float:
    """Query accuracy with bounded memory (chunked binary-path encoding)."""
    hits = 0
    for lo in range(0, len(x), chunk):
        enc = encode_batch(model, x[lo:lo + chunk]).encoded
        pred = restricted_argmax(class_scores(model, enc), class_subset)
        hits += int(np.count_nonzero(pred == y[lo:lo + chunk]))
    return hits / len(x)


def closed_form_step(class_latent: np.ndarray, encoded_support: np.ndarray,
                     support_y: np.ndarray, lr: float, margin: float,
                     class_subset: np.ndarray | None = None) -> np.ndarray:
    """One plain gradient-descent step from the closed-form hinge gradient."""
    _, grad = class_latent_grad(encoded_support, support_y, class_latent, margin, class_subset)
    return class_latent - lr * grad


def _check_episode(episode: Episode, shots: int, classes) -> None:
    support_keys = {hashlib.sha1(row.tobytes()).digest() for row in episode.support_x}
    for row in episode.query_x:
        if hashlib.sha1(row.tobytes()).digest() in support_keys:
            raise ProtocolError("support and query sets overlap")
    counts = {c: int(np.count_nonzero(episode.support_y == c)) for c in classes}
    missing = [c for c, k in counts.items() if k == 0]
    if missing:
        raise DataError(f"support set has no examples for classes {missing}")
    wrong = {c: k for c, k in counts.items() if k != shots}
    if wrong:
        raise DataError(f"support counts per class differ from shots={shots}: {wrong}")


def fast_adapt(model: LdcModel, episode: Episode, cfg: AdaptConfig) -> AdaptResult:
    """Adapt to one episode; the input model is never mutated."""
    subset = episode.class_subset(model.n_classes)
    classes = subset.tolist() if subset is not None else range(model.n_classes)
    adapted = model.clone()

    if cfg.variant == "none":
        acc = model_accuracy(adapted, episode.query_x, episode.query_y, subset)
        return AdaptResult(adapted, [], acc, deployable=True)

    _check_episode(episode, cfg.shots, classes)

    if cfg.variant == "last-layer":
        encoded = encode_batch(adapted, episode.support_x).encoded  # once, reused each step
        phi = adapted.class_layer.latent
        trace = [accuracy_from_encoded(encoded, episode.support_y, phi, subset)]
        for _ in range(cfg.grad_steps):
            phi = closed_form_step(phi, encoded, episode.support_y, cfg.lr, cfg.margin, subset)
            trace.append(accuracy_from_encoded(encoded, episode.support_y, phi, subset))
        adapted.class_layer.latent = phi
        acc = model_accuracy(adapted, episode.query_x, episode.query_y, subset)
        return AdaptResult(adapted, trace, acc, deployable=True)

    # full-model fine-tuning: plain gradient descent on every latent
    trace = [model_accuracy(adapted, episode.support_x, episode.support_y, subset)]
    for _ in range(cfg.grad_steps):
        _, grads = backprop_full(adapted, episode.support_x, episode.support_y,
                                 cfg.margin, subset)
        vb = adapted.value_box
        vb.weights_in = vb.weights_in - cfg.lr * grads.weights_in
        vb.bias_hidden = vb.bias_hidden - cfg.lr * grads.bias_hidden
        vb.weights_out = vb.weights_out - cfg.lr * grads.weights_out
        vb.bias_out = vb.bias_out - cfg.lr * grads.bias_out
        adapted.feature_layer.latent = adapted.feature_layer.latent - cfg.lr * grads.feature_latent
        adapted.class_layer.latent = adapted.class_layer.latent - cfg.lr * grads.class_latent
        trace.append(model_accuracy(adapted, episode.support_x, episode.support_y, subset))
    acc = model_accuracy(adapted, episode.query_x, episode.query_y, subset)
    return AdaptResult(adapted, trace, acc, deployable=False)


def fast_adapt_baked(baked: BakedModel, episode: Episode, cfg: AdaptConfig) -> AdaptResult:
    """Adapt a deployed (binary-only) model.

    The class bits seed the latent shadow at +/-1, which sits on the
    inclusive boundary of the straight-through clip region; the adapted
    class layer is re-binarized back into a baked artifact. Only
    ``last-layer`` and ``none`` make sense without representation latents.
    """
    if cfg.variant == "full":
        raise InputError("full adaptation needs a training checkpoint, not a baked model")
    subset = None
    if episode.task.kind == "class-subset":
        subset = np.array(sorted(episode.task.classes))

    def baked_accuracy(bits: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        hits = 0
        for lo in range(0, len(x), 512):
            enc = baked_encode(baked, x[lo:lo + 512])
            scores = enc.astype(np.int32) @ unpack_bipolar(bits, baked.dim).astype(np.int32).T
            hits += int(np.count_nonzero(restricted_argmax(scores, subset) == y[lo:lo + 512]))
        return hits / len(x)

    out = baked.clone()
    if cfg.variant == "none":
        acc = baked_accuracy(out.class_bits, episode.query_x, episode.query_y)
        return AdaptResult(out, [], acc, deployable=True)

    classes = subset.tolist() if subset is not None else range(baked.n_classes)
    _check_episode(episode, cfg.shots, classes)
    encoded = baked_encode(baked, episode.support_x)
    phi = unpack_bipolar(baked.class_bits, baked.dim).astype(np.float32)
    trace = [accuracy_from_encoded(encoded, episode.support_y, phi, subset)]
    for _ in range(cfg.grad_steps):
        phi = closed_form_step(phi, encoded, episode.support_y, cfg.lr, cfg.margin, subset)
        trace.append(accuracy_from_encoded(encoded, episode.support_y, phi, subset))
    out.class_bits = pack_bipolar(sign_pm1(phi))
    acc = baked_accuracy(out.class_bits, episode.query_x, episode.query_y)
    return AdaptResult(out, trace, acc, deployable=True)
