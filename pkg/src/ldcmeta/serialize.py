"""Bit-exact model files.

Three formats, all little-endian with a 4-byte magic:

``LDC1`` (baked classifier)
    magic, u32 n, u32 D, u32 C, u32 Q, then the packed bit payload:
    value LUT (Q rows), feature vectors (n rows), class vectors (C rows),
    each row padded to a byte boundary (``ceil(D/8)`` bytes).

``HDC1`` (baseline classifier)
    identical envelope with D = D_hdc; rows are value hypervectors (Q),
    feature hypervectors (n), class hypervectors (C).

``LDCT`` (training checkpoint)
    magic, u32 n, D, C, Q, h, then float32 arrays in fixed order:
    ValueBox weights_in (h), bias_hidden (h), weights_out (h*D),
    bias_out (D), feature latents (n*D), class latents (C*D).

Round-trips are bit-exact; serializing a deserialized model reproduces the
original byte stream.
"""
from __future__ import annotations

import struct

import numpy as np

from .bits import packed_bytes
from .errors import FormatError
from .model import BakedModel, ClassLayer, FeatureLayer, LdcModel, ValueBox

MAGIC_BAKED = b"LDC1"
MAGIC_HDC = b"HDC1"
MAGIC_CHECKPOINT = b"LDCT"

BAKED_HEADER_BYTES = 4 + 4 * 4


def _read_exact(buf: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(buf):
        raise FormatError(f"truncated stream while reading {what}")
    return buf[offset:offset + count], offset + count


def serialize(baked: BakedModel) -> bytes:
    """Encode a baked model; the magic follows ``baked.kind`` (ldc or hdc)."""
    magic = MAGIC_HDC if baked.kind == "hdc" else MAGIC_BAKED
    head = magic + struct.pack(
        "<IIII", baked.n_features, baked.dim, baked.n_classes, baked.q_levels
    )
    return head + baked.value_lut_bits.tobytes() + baked.feature_bits.tobytes() + baked.class_bits.tobytes()


def deserialize(data: bytes) -> BakedModel:
    """Decode bytes produced by :func:`serialize` (either magic)."""
    magic, off = _read_exact(data, 0, 4, "magic")
    if magic not in (MAGIC_BAKED, MAGIC_HDC):
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC_BAKED!r} or {MAGIC_HDC!r}")
    head, off = _read_exact(data, off, 16, "header")
    n, dim, n_classes, q_levels = struct.unpack("<IIII", head)
    if min(n, dim, n_classes, q_levels) < 1:
        raise FormatError(f"inconsistent dims n={n} D={dim} C={n_classes} Q={q_levels}")
    row = packed_bytes(dim)

    def rows(count: int, what: str, off: int) -> tuple[np.ndarray, int]:
        raw, off = _read_exact(data, off, count * row, what)
        return np.frombuffer(raw, dtype=np.uint8).reshape(count, row).copy(), off

    lut, off = rows(q_levels, "value LUT", off)
    feat, off = rows(n, "feature bits", off)
    cls, off = rows(n_classes, "class bits", off)
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after payload")
    kind = "hdc" if magic == MAGIC_HDC else "ldc"
    return BakedModel(n, dim, n_classes, q_levels, lut, feat, cls, kind)


def size_report(data: bytes) -> dict:
    """Payload size breakdown for an LDC1 or HDC1 byte stream.

    Reports bytes and both KB conventions (1 KB = 1000 or 1024 bytes). The
    ``core`` entry is the feature + class payload, i.e. the weights a device
    needs beyond the encoder LUT.
    """
    magic, off = _read_exact(data, 0, 4, "magic")
    if magic not in (MAGIC_BAKED, MAGIC_HDC):
        raise FormatError(f"bad magic {magic!r}")
    head, _ = _read_exact(data, off, 16, "header")
    n, dim, n_classes, q_levels = struct.unpack("<IIII", head)
    row = packed_bytes(dim)
    lut, feat, cls = q_levels * row, n * row, n_classes * row
    expected = BAKED_HEADER_BYTES + lut + feat + cls
    if len(data) != expected:
        raise FormatError(f"file is {len(data)} bytes, header implies {expected}")
    payload = lut + feat + cls
    return {
        "kind": magic.decode(),
        "n_features": n,
        "dim": dim,
        "n_classes": n_classes,
        "q_levels": q_levels,
        "header_bytes": BAKED_HEADER_BYTES,
        "value_lut_bytes": lut,
        "feature_bytes": feat,
        "class_bytes": cls,
        "payload_bytes": payload,
        "core_bytes": feat + cls,
        "payload_kb_1000": payload / 1000.0,
        "payload_kb_1024": payload / 1024.0,
        "core_kb_1000": (feat + cls) / 1000.0,
        "core_kb_1024": (feat + cls) / 1024.0,
    }


def serialize_checkpoint(model: LdcModel) -> bytes:
    """Encode a trainable model (real latents) as deterministic bytes."""
    vb = model.value_box
    head = MAGIC_CHECKPOINT + struct.pack(
        "<IIIII", model.n_features, model.dim, model.n_classes, model.q_levels, vb.hidden_width
    )
    arrays = (vb.weights_in, vb.bias_hidden, vb.weights_out, vb.bias_out,
              model.feature_layer.latent, model.class_layer.latent)
    return head + b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)


def deserialize_checkpoint(data: bytes) -> LdcModel:
    magic, off = _read_exact(data, 0, 4, "magic")
    if magic != MAGIC_CHECKPOINT:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC_CHECKPOINT!r}")
    head, off = _read_exact(data, off, 20, "header")
    n, dim, n_classes, q_levels, hidden = struct.unpack("<IIIII", head)

    def arr(shape: tuple[int, ...], what: str, off: int) -> tuple[np.ndarray, int]:
        count = int(np.prod(shape)) * 4
        raw, off = _read_exact(data, off, count, what)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32), off

    w_in, off = arr((hidden,), "weights_in", off)
    b_in, off = arr((hidden,), "bias_hidden", off)
    w_out, off = arr((hidden, dim), "weights_out", off)
    b_out, off = arr((dim,), "bias_out", off)
    feat, off = arr((n, dim), "feature latents", off)
    cls, off = arr((n_classes, dim), "class latents", off)
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after checkpoint")
    return LdcModel(ValueBox(w_in, b_in, w_out, b_out, q_levels),
                    FeatureLayer(feat), ClassLayer(cls))
