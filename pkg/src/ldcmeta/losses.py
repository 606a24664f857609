"""Multiclass hinge loss, its closed-form class-layer gradient, and full
backpropagation through the encoder stack.

The class-layer gradient has a closed form: with scores ``s_j = w_j^T x``,
margin ``Delta`` and true class ``y``, each violating class ``j != y``
(``s_j - s_y + Delta > 0``, strictly) contributes ``+x`` to its own row and
``-x`` to row ``y``. Correct-with-margin examples contribute nothing, which
is what makes adaptation steps cheap and often a no-op.

``backprop_full`` propagates mean batch gradients to every real latent. In
``binary`` mode (training) the forward pass uses bipolar values and each
sign gets the clipped straight-through estimator; the feature-bound sum is
normalized by n before its STE so the unit clip radius never zeroes the
path. In ``relaxed`` mode every sign is replaced by hardtanh and the
returned gradients are the exact derivatives of that surrogate, which is
what the finite-difference tests check.

Per-example gradients are reduced with numpy sums (fixed pairwise order),
so batch results are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bits import sign_pm1
from .errors import DimensionError, InputError
from .model import EncodeCache, LdcModel, binarize_ste_backward, encode_batch, quantize_batch


def hinge_loss(scores: np.ndarray, y: int, margin: float) -> float:
    """Sum over j != y of max(0, scores_j - scores_y + margin)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 0 <= y < scores.shape[0]:
        raise InputError(f"label {y} outside [0, {scores.shape[0] - 1}]")
    slack = scores - scores[y] + margin
    slack[y] = 0.0
    return float(np.maximum(slack, 0.0).sum())


def hinge_grad_classlayer(x: np.ndarray, scores: np.ndarray, y: int, margin: float) -> np.ndarray:
    """Closed-form gradient of :func:`hinge_loss` w.r.t. the class weights.

    ``x`` is the representation whose dot products produced ``scores``; the
    indicator is strict (exact kinks contribute nothing).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 0 <= y < scores.shape[0]:
        raise InputError(f"label {y} outside [0, {scores.shape[0] - 1}]")
    violating = (scores - scores[y] + margin) > 0.0
    violating[y] = False
    grad = violating[:, None].astype(np.float64) * x[None, :]
    grad[y] = -violating.sum() * x
    return grad


def batch_hinge(scores: np.ndarray, y: np.ndarray, margin: float,
                class_subset: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean hinge loss over a batch plus the score-gradient matrix.

    Returns ``(mean_loss, G)`` where ``G`` is d(sum of per-example losses) /
    d(scores), shape (B, C). With ``class_subset`` the margins (and hence
    gradients) involve only the listed classes; labels must be members.
    """
    scores = np.asarray(scores, dtype=np.float32)
    y = np.asarray(y)
    b, c = scores.shape
    if b == 0:
        raise InputError("empty batch")
    rows = np.arange(b)
    true_scores = scores[rows, y]
    slack = scores - true_scores[:, None] + margin
    slack[rows, y] = 0.0
    if class_subset is not None:
        mask = np.zeros(c, dtype=bool)
        mask[np.asarray(class_subset)] = True
        slack = np.where(mask[None, :], slack, -np.inf)
        slack[rows, y] = 0.0
    violating = slack > 0.0
    loss = float(np.where(violating, slack, 0.0).sum()) / b
    grad = violating.astype(np.float32)
    grad[rows, y] = -violating.sum(axis=1)
    return loss, grad


def class_latent_grad(encoded: np.ndarray, y: np.ndarray, class_latent: np.ndarray,
                      margin: float, class_subset: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean closed-form gradient on class latents for pre-encoded H vectors.

    Scores use the binarized class vectors; the gradient passes through the
    straight-through clip mask of the latents. This is the whole backward
    pass when the representation side is frozen.
    """
    encoded = np.atleast_2d(encoded)
    y = np.atleast_1d(y)
    scores = encoded.astype(np.float32) @ sign_pm1(class_latent).astype(np.float32).T
    loss, score_grad = batch_hinge(scores, y, margin, class_subset)
    grad = score_grad.T @ encoded.astype(np.float32) / encoded.shape[0]
    return loss, binarize_ste_backward(grad, class_latent)


@dataclass
class Grads:
    """Gradients for every real latent in the model."""

    weights_in: np.ndarray
    bias_hidden: np.ndarray
    weights_out: np.ndarray
    bias_out: np.ndarray
    feature_latent: np.ndarray
    class_latent: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.weights_in, self.bias_hidden, self.weights_out,
                self.bias_out, self.feature_latent, self.class_latent)

    @classmethod
    def zeros_like(cls, model: LdcModel) -> "Grads":
        vb = model.value_box
        return cls(*(np.zeros_like(a) for a in (vb.weights_in, vb.bias_hidden,
                                                vb.weights_out, vb.bias_out,
                                                model.feature_layer.latent,
                                                model.class_layer.latent)))

    def add_(self, other: "Grads") -> None:
        for mine, theirs in zip(self.arrays(), other.arrays()):
            mine += theirs

    def scale_(self, factor: float) -> None:
        for a in self.arrays():
            a *= factor


def _hardtanh(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


def _relaxed_forward(model: LdcModel, x: np.ndarray) -> tuple[EncodeCache, np.ndarray, np.ndarray]:
    """Forward pass of the hardtanh surrogate; mirrors encode_batch."""
    levels = quantize_batch(np.atleast_2d(x), model.q_levels)
    hidden, value_pre = model.value_box.lut_pre_activations()
    value_act = _hardtanh(value_pre)
    feat_act = _hardtanh(model.feature_layer.latent)
    pre_sum = (value_act[levels] * feat_act[None, :, :]).sum(axis=1, dtype=np.float32)
    encoded = _hardtanh(pre_sum / model.n_features)
    cache = EncodeCache(levels, hidden, value_pre, value_act, feat_act, pre_sum, encoded)
    class_act = _hardtanh(model.class_layer.latent)
    scores = encoded @ class_act.T
    return cache, class_act, scores


def loss_relaxed(model: LdcModel, x: np.ndarray, y: np.ndarray, margin: float,
                 class_subset: np.ndarray | None = None) -> float:
    """Mean hinge loss of the hardtanh surrogate network (test oracle hook)."""
    _, _, scores = _relaxed_forward(model, x)
    loss, _ = batch_hinge(scores, np.atleast_1d(y), margin, class_subset)
    return loss


def _scatter_rows(index: np.ndarray, rows: np.ndarray, n_bins: int) -> np.ndarray:
    """Sum ``rows`` into ``n_bins`` buckets given per-row bucket indices."""
    out = np.empty((n_bins, rows.shape[1]), dtype=np.float32)
    for d in range(rows.shape[1]):
        out[:, d] = np.bincount(index, weights=rows[:, d], minlength=n_bins)
    return out


def backprop_full(model: LdcModel, x: np.ndarray, y: np.ndarray, margin: float,
                  class_subset: np.ndarray | None = None,
                  mode: str = "binary") -> tuple[float, Grads]:
    """Mean hinge-loss gradients for the whole model over a batch.

    ``binary`` is the production training path (bipolar forward, STE
    backward); ``relaxed`` differentiates the hardtanh surrogate exactly.
    """
    x = np.atleast_2d(np.asarray(x))
    y = np.atleast_1d(np.asarray(y))
    if x.shape[0] == 0:
        raise InputError("empty batch")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} examples but {y.shape[0]} labels")
    n = model.n_features
    batch = x.shape[0]

    if mode == "binary":
        cache = encode_batch(model, x, keep_cache=True)
        value_act = cache.value_sign.astype(np.float32)
        feat_act = cache.feat_sign.astype(np.float32)
        encoded = cache.encoded.astype(np.float32)
        class_act = model.class_layer.binarized().astype(np.float32)
        scores = encoded @ class_act.T
    elif mode == "relaxed":
        cache, class_act, scores = _relaxed_forward(model, x)
        value_act = cache.value_sign
        feat_act = cache.feat_sign
        encoded = cache.encoded
    else:
        raise InputError(f"unknown backprop mode {mode!r}")

    loss, score_grad = batch_hinge(scores, y, margin, class_subset)
    score_grad /= batch

    d_class = binarize_ste_backward(score_grad.T @ encoded, model.class_layer.latent)

    d_encoded = score_grad @ class_act
    # the encode sign sees pre_sum / n, whose magnitude never exceeds 1
    d_pre_sum = binarize_ste_backward(d_encoded, cache.pre_sum.astype(np.float32) / n) / n

    value_rows = value_act[cache.levels]                      # (B, n, D)
    d_feat_act = np.einsum("bd,bid->id", d_pre_sum, value_rows)
    d_feat = binarize_ste_backward(d_feat_act, model.feature_layer.latent)

    contrib = d_pre_sum[:, None, :] * feat_act[None, :, :]    # (B, n, D)
    d_value_act = _scatter_rows(cache.levels.ravel(),
                                contrib.reshape(-1, model.dim), model.q_levels)
    d_value_pre = binarize_ste_backward(d_value_act, cache.value_pre)

    vb = model.value_box
    d_bias_out = d_value_pre.sum(axis=0)
    d_weights_out = cache.hidden.T @ d_value_pre
    d_hidden = d_value_pre @ vb.weights_out.T
    d_pre_hidden = d_hidden * (1.0 - np.square(cache.hidden))
    u = vb.level_inputs()
    d_weights_in = d_pre_hidden.T @ u
    d_bias_hidden = d_pre_hidden.sum(axis=0)

    grads = Grads(d_weights_in.astype(np.float32), d_bias_hidden.astype(np.float32),
                  d_weights_out.astype(np.float32), d_bias_out.astype(np.float32),
                  d_feat, d_class)
    return loss, grads
