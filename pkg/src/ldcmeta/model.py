"""The low-dimensional bipolar classifier.

Architecture, following the usual three-stage layout:

* **ValueBox** -- a tiny 1 -> h -> D network (tanh hidden, sign output) that
  maps a quantized feature value to a bipolar value vector. Because its input
  is one of Q discrete levels, the trained ValueBox bakes into a Q x D
  lookup table and its real weights are not needed at inference time.
* **feature layer** -- n latent rows whose signs are the bipolar feature
  vectors; binding is the Hadamard product with the value vectors, and the
  bound vectors are summed over features and re-signed into the encoded
  sample H.
* **class layer** -- C latent rows whose signs are the class vectors; class
  scores are integer dot products against H and prediction is the argmax
  (ties resolved to the lowest class index).

Training keeps real float32 latents everywhere and uses the clipped
straight-through estimator at each sign; inference uses only bipolar values
and integer sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bits import pack_bipolar, packed_bytes, sign_pm1, unpack_bipolar
from .errors import DimensionError, InputError
from .numerics import make_rng, uniform_init

DEFAULT_DIM = 64
DEFAULT_HIDDEN = 32
DEFAULT_Q = 256


def quantize_feature(value: float, q_levels: int) -> int:
    """Map a feature value in [0, 1] to a level in [0, q_levels - 1]."""
    if not 0.0 <= value <= 1.0:
        raise InputError(f"feature value {value!r} outside [0, 1]")
    return min(int(value * q_levels), q_levels - 1)


def quantize_batch(x: np.ndarray, q_levels: int) -> np.ndarray:
    """Vectorized :func:`quantize_feature` for an (..., n) array."""
    x = np.asarray(x)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise InputError("feature values outside [0, 1]")
    return np.minimum((x * q_levels).astype(np.int32), q_levels - 1)


@dataclass
class ValueBox:
    """Scalar-to-bipolar encoding network (1 -> hidden -> D)."""

    weights_in: np.ndarray   # (h,)
    bias_hidden: np.ndarray  # (h,)
    weights_out: np.ndarray  # (h, D)
    bias_out: np.ndarray     # (D,)
    q_levels: int

    @property
    def hidden_width(self) -> int:
        return self.weights_in.shape[0]

    @property
    def dim(self) -> int:
        return self.bias_out.shape[0]

    def level_inputs(self) -> np.ndarray:
        """All Q quantization levels mapped to [-1, 1], float32."""
        q = self.q_levels
        return (2.0 * np.arange(q, dtype=np.float32) / (q - 1) - 1.0) if q > 1 else np.zeros(1, np.float32)

    def lut_pre_activations(self) -> tuple[np.ndarray, np.ndarray]:
        """(hidden, pre) for every level: shapes (Q, h) and (Q, D).

        ``pre`` rows are the real pre-activations whose signs form the value
        vectors; computing the whole table at once is cheap (Q x h x D) and
        is exactly what gets baked after training.
        """
        u = self.level_inputs()
        hidden = np.tanh(np.outer(u, self.weights_in) + self.bias_hidden)
        pre = hidden @ self.weights_out + self.bias_out
        return hidden.astype(np.float32), pre.astype(np.float32)

    def clone(self) -> "ValueBox":
        return ValueBox(self.weights_in.copy(), self.bias_hidden.copy(),
                        self.weights_out.copy(), self.bias_out.copy(), self.q_levels)


def valuebox_forward(vb: ValueBox, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Pre-activations and bipolar value vector for one quantization level."""
    if not 0 <= level < vb.q_levels:
        raise InputError(f"level {level} outside [0, {vb.q_levels - 1}]")
    _, pre = vb.lut_pre_activations()
    row = pre[level]
    return row, sign_pm1(row)


@dataclass
class FeatureLayer:
    """n latent rows; their signs are the bipolar feature vectors."""

    latent: np.ndarray  # (n, D) float32

    @property
    def n_features(self) -> int:
        return self.latent.shape[0]

    def binarized(self) -> np.ndarray:
        return sign_pm1(self.latent)


@dataclass
class ClassLayer:
    """C latent rows; their signs are the class vectors (the phi parameters)."""

    latent: np.ndarray  # (C, D) float32

    @property
    def n_classes(self) -> int:
        return self.latent.shape[0]

    def binarized(self) -> np.ndarray:
        return sign_pm1(self.latent)


@dataclass
class LdcModel:
    value_box: ValueBox
    feature_layer: FeatureLayer
    class_layer: ClassLayer
    encode_calls: int = field(default=0, compare=False)

    @property
    def dim(self) -> int:
        return self.value_box.dim

    @property
    def n_features(self) -> int:
        return self.feature_layer.n_features

    @property
    def n_classes(self) -> int:
        return self.class_layer.n_classes

    @property
    def q_levels(self) -> int:
        return self.value_box.q_levels

    def clone(self) -> "LdcModel":
        return LdcModel(self.value_box.clone(),
                        FeatureLayer(self.feature_layer.latent.copy()),
                        ClassLayer(self.class_layer.latent.copy()))

    def theta_bytes(self) -> bytes:
        """Byte snapshot of the representation parameters (ValueBox + features)."""
        vb = self.value_box
        return b"".join(a.tobytes() for a in (vb.weights_in, vb.bias_hidden,
                                              vb.weights_out, vb.bias_out,
                                              self.feature_layer.latent))


def init_model(n_features: int, n_classes: int, dim: int = DEFAULT_DIM,
               hidden: int = DEFAULT_HIDDEN, q_levels: int = DEFAULT_Q,
               seed: int = 0) -> LdcModel:
    """Fresh model with all latents drawn from Uniform(-0.5, 0.5).

    Draw order is fixed (ValueBox in, hidden bias, out, out bias, feature
    latents, class latents) so a seed pins the whole initialization.
    """
    rng = make_rng(seed, 0x1dc)
    vb = ValueBox(
        weights_in=uniform_init(rng, (hidden,)),
        bias_hidden=uniform_init(rng, (hidden,)),
        weights_out=uniform_init(rng, (hidden, dim)),
        bias_out=uniform_init(rng, (dim,)),
        q_levels=q_levels,
    )
    feat = FeatureLayer(uniform_init(rng, (n_features, dim)))
    cls = ClassLayer(uniform_init(rng, (n_classes, dim)))
    return LdcModel(vb, feat, cls)


@dataclass
class EncodeCache:
    """Intermediates of a batch encode, kept for backpropagation."""

    levels: np.ndarray      # (B, n) int32
    hidden: np.ndarray      # (Q, h) float32, tanh outputs
    value_pre: np.ndarray   # (Q, D) float32, pre-sign value activations
    value_sign: np.ndarray  # (Q, D) int8
    feat_sign: np.ndarray   # (n, D) int8
    pre_sum: np.ndarray     # (B, D) int32
    encoded: np.ndarray     # (B, D) int8, the H vectors


def encode_batch(model: LdcModel, x: np.ndarray, keep_cache: bool = False) -> EncodeCache:
    """Encode a (B, n) batch into bipolar H vectors.

    ``pre_sum`` is the integer feature-bound sum whose sign is H; two inputs
    with identical quantization levels produce identical H.
    """
    x = np.atleast_2d(np.asarray(x))
    n = model.n_features
    if x.shape[1] != n:
        raise DimensionError(f"input has {x.shape[1]} features, model expects {n}")
    levels = quantize_batch(x, model.q_levels)
    hidden, value_pre = model.value_box.lut_pre_activations()
    value_sign = sign_pm1(value_pre)
    feat_sign = model.feature_layer.binarized()
    bound = value_sign[levels] * feat_sign[None, :, :]
    pre_sum = bound.sum(axis=1, dtype=np.int32)
    encoded = sign_pm1(pre_sum)
    model.encode_calls += 1
    if not keep_cache:
        hidden = value_pre = np.empty(0, np.float32)
    return EncodeCache(levels, hidden, value_pre, value_sign, feat_sign, pre_sum, encoded)


def encode_sample(model: LdcModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Encode one sample; returns (pre_sum, H)."""
    cache = encode_batch(model, np.asarray(x)[None, :])
    return cache.pre_sum[0], cache.encoded[0]


def class_scores(model: LdcModel, encoded: np.ndarray) -> np.ndarray:
    """Integer scores of H (or a batch of H) against all class vectors."""
    encoded = np.asarray(encoded)
    if encoded.shape[-1] != model.dim:
        raise DimensionError(f"encoded dim {encoded.shape[-1]} != model dim {model.dim}")
    w = model.class_layer.binarized().astype(np.int32)
    return encoded.astype(np.int32) @ w.T


def predict(model: LdcModel, x: np.ndarray) -> np.ndarray:
    """Class indices for a (B, n) batch (lowest index wins ties)."""
    cache = encode_batch(model, x)
    return np.argmax(class_scores(model, cache.encoded), axis=-1)


def binarize_ste_backward(grad_out: np.ndarray, latent: np.ndarray) -> np.ndarray:
    """Clipped straight-through estimator for d(sign)/d(latent).

    Passes the upstream gradient where |latent| <= 1 (boundary inclusive)
    and zeroes it elsewhere.
    """
    grad_out = np.asarray(grad_out)
    latent = np.asarray(latent)
    if grad_out.shape != latent.shape:
        raise DimensionError(f"gradient shape {grad_out.shape} != latent shape {latent.shape}")
    return np.where(np.abs(latent) <= 1.0, grad_out, 0.0).astype(np.float32)


@dataclass
class BakedModel:
    """Inference-only artifact: packed value LUT, feature and class vectors.

    ``kind`` distinguishes the trained low-dimensional classifier ("ldc")
    from the high-dimensional baseline ("hdc"); both share this container
    and the binary inference path.
    """

    n_features: int
    dim: int
    n_classes: int
    q_levels: int
    value_lut_bits: np.ndarray  # (Q, ceil(D/8)) uint8
    feature_bits: np.ndarray    # (n, ceil(D/8)) uint8
    class_bits: np.ndarray      # (C, ceil(D/8)) uint8
    kind: str = "ldc"

    def payload_bytes(self) -> dict[str, int]:
        row = packed_bytes(self.dim)
        return {
            "value_lut": self.q_levels * row,
            "feature": self.n_features * row,
            "class": self.n_classes * row,
        }

    def clone(self) -> "BakedModel":
        return BakedModel(self.n_features, self.dim, self.n_classes, self.q_levels,
                          self.value_lut_bits.copy(), self.feature_bits.copy(),
                          self.class_bits.copy(), self.kind)


def bake(model: LdcModel) -> BakedModel:
    """Freeze a trained model into its binary deployment form."""
    _, value_pre = model.value_box.lut_pre_activations()
    return BakedModel(
        n_features=model.n_features,
        dim=model.dim,
        n_classes=model.n_classes,
        q_levels=model.q_levels,
        value_lut_bits=pack_bipolar(sign_pm1(value_pre)),
        feature_bits=pack_bipolar(model.feature_layer.binarized()),
        class_bits=pack_bipolar(model.class_layer.binarized()),
    )


def baked_encode(baked: BakedModel, x: np.ndarray) -> np.ndarray:
    """Binary-only encode: LUT lookup, Hadamard bind, integer sum, sign."""
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != baked.n_features:
        raise DimensionError(f"input has {x.shape[1]} features, model expects {baked.n_features}")
    levels = quantize_batch(x, baked.q_levels)
    value_sign = unpack_bipolar(baked.value_lut_bits, baked.dim)
    feat_sign = unpack_bipolar(baked.feature_bits, baked.dim)
    pre_sum = (value_sign[levels] * feat_sign[None, :, :]).sum(axis=1, dtype=np.int32)
    return sign_pm1(pre_sum)


def baked_predict(baked: BakedModel, x: np.ndarray) -> np.ndarray:
    """Predictions from the baked artifact alone (no real arithmetic)."""
    encoded = baked_encode(baked, x)
    class_sign = unpack_bipolar(baked.class_bits, baked.dim)
    scores = encoded.astype(np.int32) @ class_sign.astype(np.int32).T
    return np.argmax(scores, axis=-1)
