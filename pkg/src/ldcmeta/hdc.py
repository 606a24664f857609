"""High-dimensional computing baseline with retraining.

The item memory is random and fixed: feature hypervectors are i.i.d.
bipolar, value hypervectors are level-encoded (each level flips a fresh
block of positions of its predecessor, so the ends of the value range are
about D/2 apart in Hamming distance). Training averages the encoded
examples of each class into accumulators whose signs are the class
hypervectors; retraining nudges accumulators toward misclassified examples'
true classes and away from the predicted ones. Inference returns the class
hypervector closest in Hamming distance to the encoded query, which for
bipolar vectors is the same as the largest dot product.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bits import pack_bipolar, sign_pm1
from .errors import DataError, DimensionError, InputError
from .model import BakedModel, quantize_batch
from .numerics import make_rng

ENCODE_CHUNK_BYTES = 1 << 26  # cap on the (chunk, n, D) bind intermediate


@dataclass
class HdcConfig:
    dim: int = 8000
    retrain_epochs: int = 20
    retrain_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise InputError(f"dim must be >= 1, got {self.dim}")


@dataclass
class HdcModel:
    feature_hvs: np.ndarray          # (n, D) int8, fixed after init
    value_hvs: np.ndarray            # (Q, D) int8, fixed after init
    class_accumulators: np.ndarray   # (C, D) float64
    class_hvs: np.ndarray            # (C, D) int8 = sign(accumulators)

    @property
    def dim(self) -> int:
        return self.feature_hvs.shape[1]

    @property
    def n_features(self) -> int:
        return self.feature_hvs.shape[0]

    @property
    def q_levels(self) -> int:
        return self.value_hvs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.class_hvs.shape[0]

    def item_memory_bytes(self) -> bytes:
        return self.feature_hvs.tobytes() + self.value_hvs.tobytes()

    def clone(self) -> "HdcModel":
        return HdcModel(self.feature_hvs.copy(), self.value_hvs.copy(),
                        self.class_accumulators.copy(), self.class_hvs.copy())


def hdc_init(n_features: int, q_levels: int, n_classes: int, cfg: HdcConfig) -> HdcModel:
    """Random item memory plus zeroed class accumulators.

    Level encoding: V[q] differs from V[q-1] in a fresh block of
    ``D // (2 * (Q - 1))`` positions, so Hamming(V[0], V[Q-1]) is that block
    size times Q-1 (about D/2) and nearby levels stay similar.
    """
    if min(n_features, q_levels, n_classes) < 1:
        raise InputError("n_features, q_levels and n_classes must be >= 1")
    rng = make_rng(cfg.seed, 0x4dc0)
    dim = cfg.dim
    feature_hvs = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_features, dim))
    value_hvs = np.empty((q_levels, dim), dtype=np.int8)
    value_hvs[0] = rng.choice(np.array([-1, 1], dtype=np.int8), size=dim)
    if q_levels > 1:
        block = dim // (2 * (q_levels - 1))
        positions = rng.permutation(dim)
        for q in range(1, q_levels):
            value_hvs[q] = value_hvs[q - 1]
            flip = positions[(q - 1) * block: q * block]
            value_hvs[q, flip] *= -1
    acc = np.zeros((n_classes, dim), dtype=np.float64)
    return HdcModel(feature_hvs, value_hvs, acc, sign_pm1(acc))


def hdc_encode_batch(model: HdcModel, x: np.ndarray) -> np.ndarray:
    """Encode a (B, n) batch into bipolar hypervectors.

    Mostly-zero inputs (e.g. digit images) take a sparse path: the level-0
    bind sum is computed once and only nonzero-level features contribute a
    correction, which is exact and much cheaper than the full gather.
    """
    x = np.atleast_2d(np.asarray(x))
    n, dim = model.feature_hvs.shape
    if x.shape[1] != n:
        raise DimensionError(f"input has {x.shape[1]} features, model expects {n}")
    levels = quantize_batch(x, model.q_levels)
    out = np.empty((x.shape[0], dim), dtype=np.int8)
    if np.count_nonzero(levels) < 0.5 * levels.size:
        base = (model.feature_hvs.astype(np.int32)
                * model.value_hvs[0].astype(np.int32)[None, :]).sum(axis=0)
        v0 = model.value_hvs[0]
        for b in range(x.shape[0]):
            nz = np.flatnonzero(levels[b])
            acc = base
            if nz.size:
                delta = (model.value_hvs[levels[b, nz]] - v0[None, :]) * model.feature_hvs[nz]
                acc = base + delta.sum(axis=0, dtype=np.int32)
            out[b] = sign_pm1(acc)
        return out
    chunk = max(1, ENCODE_CHUNK_BYTES // (n * dim))
    for lo in range(0, x.shape[0], chunk):
        bound = model.value_hvs[levels[lo:lo + chunk]] * model.feature_hvs[None, :, :]
        out[lo:lo + chunk] = sign_pm1(bound.sum(axis=1, dtype=np.int32))
    return out


def hdc_encode(model: HdcModel, x: np.ndarray) -> np.ndarray:
    """Encode a single sample."""
    return hdc_encode_batch(model, np.asarray(x)[None, :])[0]


def hdc_train(model: HdcModel, x: np.ndarray, y: np.ndarray,
              encoded: np.ndarray | None = None) -> HdcModel:
    """Average encoded examples per class; returns a new trained model."""
    y = np.asarray(y)
    if len(y) == 0:
        raise DataError("empty training set")
    if encoded is None:
        encoded = hdc_encode_batch(model, x)
    out = model.clone()
    out.class_accumulators[:] = 0.0
    for c in range(out.n_classes):
        rows = encoded[y == c]
        if len(rows) == 0:
            warnings.warn(f"class {c} has no training examples; hypervector defaults to all +1")
            continue
        out.class_accumulators[c] = rows.sum(axis=0, dtype=np.int64)
    out.class_hvs = sign_pm1(out.class_accumulators)
    return out


def hdc_retrain(model: HdcModel, x: np.ndarray, y: np.ndarray, epochs: int,
                rate: float, encoded: np.ndarray | None = None,
                class_subset: np.ndarray | None = None) -> HdcModel:
    """Misclassification-driven accumulator updates, one example at a time.

    A wrongly predicted example adds ``rate * H`` to its true class
    accumulator and subtracts it from the predicted one; the two class
    hypervectors are re-signed immediately. Encodings are computed once (the
    item memory never changes). ``class_subset`` restricts predictions to a
    task's classes when the memory only covers those.
    """
    y = np.asarray(y)
    if encoded is None:
        encoded = hdc_encode_batch(model, x)
    out = model.clone()
    enc32 = encoded.astype(np.int32)
    class_f = out.class_hvs.astype(np.float64)
    sub = None if class_subset is None else np.asarray(class_subset)
    for _ in range(epochs):
        for i in range(len(y)):
            h = enc32[i]
            scores = class_f @ h
            if sub is None:
                pred = int(np.argmax(scores))
            else:
                pred = int(sub[np.argmax(scores[sub])])
            true = int(y[i])
            if pred != true:
                out.class_accumulators[true] += rate * h
                out.class_accumulators[pred] -= rate * h
                out.class_hvs[true] = sign_pm1(out.class_accumulators[true])
                out.class_hvs[pred] = sign_pm1(out.class_accumulators[pred])
                class_f[true] = out.class_hvs[true]
                class_f[pred] = out.class_hvs[pred]
    return out


def hdc_scores(model: HdcModel, encoded: np.ndarray) -> np.ndarray:
    """Dot-product scores against the class hypervectors (argmax = nearest)."""
    return np.atleast_2d(encoded).astype(np.int32) @ model.class_hvs.astype(np.int32).T


def hdc_infer(model: HdcModel, x: np.ndarray) -> int:
    """Class of the nearest hypervector in Hamming distance (lowest index wins)."""
    encoded = hdc_encode(model, x)
    distances = (model.dim - hdc_scores(model, encoded)[0]) // 2
    return int(np.argmin(distances))


def hdc_predict_batch(model: HdcModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(hdc_scores(model, hdc_encode_batch(model, x)), axis=-1)


def bake_hdc(model: HdcModel) -> BakedModel:
    """Pack the deployable bits into the shared baked container (kind 'hdc')."""
    return BakedModel(
        n_features=model.n_features,
        dim=model.dim,
        n_classes=model.n_classes,
        q_levels=model.q_levels,
        value_lut_bits=pack_bipolar(model.value_hvs),
        feature_bits=pack_bipolar(model.feature_hvs),
        class_bits=pack_bipolar(model.class_hvs),
        kind="hdc",
    )
