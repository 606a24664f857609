"""Bipolar {-1,+1} vectors and their bit-packed storage.

Conventions used everywhere in this package:

* bipolar arrays are ``np.int8`` with entries in {-1, +1};
* ``sign(0) = +1``;
* packed storage maps +1 -> bit 1 and -1 -> bit 0, LSB-first within each
  byte (bit ``j`` of byte ``b`` holds element ``8*b + j``), one padded row
  of ``ceil(dim/8)`` bytes per vector.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError


def sign_pm1(x: np.ndarray) -> np.ndarray:
    """Strict sign with the sign(0)=+1 tie rule, returned as int8."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def packed_bytes(dim: int) -> int:
    """Bytes required for one packed row of ``dim`` bits."""
    return (dim + 7) // 8


def pack_bipolar(pm1: np.ndarray) -> np.ndarray:
    """Pack a (rows, dim) or (dim,) bipolar array into uint8 rows.

    Each row is padded independently to a byte boundary; padding bits are 0.
    """
    arr = np.asarray(pm1)
    bits = (arr > 0).astype(np.uint8)
    return np.packbits(bits, axis=-1, bitorder="little")


def unpack_bipolar(packed: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`pack_bipolar`; returns int8 entries in {-1,+1}."""
    packed = np.asarray(packed, dtype=np.uint8)
    if packed.shape[-1] != packed_bytes(dim):
        raise DimensionError(
            f"packed row has {packed.shape[-1]} bytes, expected {packed_bytes(dim)} for dim={dim}"
        )
    bits = np.unpackbits(packed, axis=-1, count=dim, bitorder="little")
    return (bits.astype(np.int8) * 2 - 1)


_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(np.uint8)


def hamming_packed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamming distance between packed rows via XOR + popcount.

    Broadcasts over leading axes; padding bits cancel because both sides pad
    with zeros.
    """
    x = np.bitwise_xor(np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8))
    return _POPCOUNT[x].sum(axis=-1, dtype=np.int64)


def hamming_pm1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamming distance between bipolar int8 arrays (number of differing entries)."""
    return np.count_nonzero(np.asarray(a) != np.asarray(b), axis=-1)


def dot_pm1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer dot product of bipolar arrays; equals dim - 2 * hamming."""
    return (np.asarray(a, dtype=np.int32) * np.asarray(b, dtype=np.int32)).sum(axis=-1)
