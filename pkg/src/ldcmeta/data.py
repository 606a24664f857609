"""Dataset loading and image rotation.

Loaders emit features in [0, 1]:

* MNIST comes from the classic IDX files (big-endian magic 0x803 for images,
  0x801 for labels), pixels scaled by 1/255. Gzip-compressed files are read
  transparently.
* The spoken-letter data is comma-separated reals with a trailing 1-indexed
  label, min-max scaled per feature with train-split statistics.

Rotation uses inverse-mapped bilinear interpolation about the image center
with zero fill outside the frame.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError, InputError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix in [0,1] plus integer labels."""

    features: np.ndarray  # (N, n) float32
    labels: np.ndarray    # (N,) int64
    n_classes: int
    split: str            # "train" or "test"

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def class_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(self.n_classes)]


def _open_maybe_gzip(path: str | Path):
    path = Path(path)
    with open(path, "rb") as probe:
        head = probe.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path: str | Path, expected_magic: int, what: str) -> np.ndarray:
    with _open_maybe_gzip(path) as f:
        header = f.read(4)
        if len(header) < 4:
            raise FormatError(f"{what}: truncated header")
        (magic,) = struct.unpack(">I", header)
        if magic != expected_magic:
            raise FormatError(f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
        ndim = magic & 0xFF
        raw_dims = f.read(4 * ndim)
        if len(raw_dims) < 4 * ndim:
            raise FormatError(f"{what}: truncated dimension header")
        dims = struct.unpack(f">{ndim}I", raw_dims)
        payload = f.read()
    count = int(np.prod(dims))
    if len(payload) < count:
        raise FormatError(f"{what}: expected {count} data bytes, found {len(payload)}")
    return np.frombuffer(payload[:count], dtype=np.uint8).reshape(dims)


def load_mnist(image_file: str | Path, label_file: str | Path, split: str = "train") -> Dataset:
    """Parse an IDX image/label pair into a flattened [0,1] dataset."""
    images = _read_idx(image_file, IDX_IMAGE_MAGIC, "image file")
    labels = _read_idx(label_file, IDX_LABEL_MAGIC, "label file")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    feats = (images.reshape(images.shape[0], -1).astype(np.float32)) / 255.0
    return Dataset(feats, labels.astype(np.int64), n_classes=10, split=split)


def isolet_scaling(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (min, range) statistics from a training split."""
    lo = features.min(axis=0)
    span = features.max(axis=0) - lo
    span[span == 0.0] = 1.0
    return lo, span


def load_isolet(csv_file: str | Path, split: str = "train",
                stats: tuple[np.ndarray, np.ndarray] | None = None,
                ) -> tuple[Dataset, tuple[np.ndarray, np.ndarray]]:
    """Parse spoken-letter CSV rows (reals + trailing 1-indexed label).

    With ``stats=None`` the min-max scaling statistics are computed from this
    file (the train split) and returned for reuse; a test split passes the
    train statistics back in and is clipped into [0, 1].
    """
    rows: list[np.ndarray] = []
    labels: list[int] = []
    arity: int | None = None
    with _open_maybe_gzip(csv_file) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.decode().strip().rstrip(",")
            if not line:
                continue
            parts = line.split(",")
            if arity is None:
                arity = len(parts)
            elif len(parts) != arity:
                raise FormatError(f"row {lineno}: {len(parts)} fields, expected {arity}")
            try:
                values = np.array([float(p) for p in parts], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"row {lineno}: unparseable field ({exc})") from None
            label = int(values[-1])
            if label < 1 or label != values[-1]:
                raise FormatError(f"row {lineno}: label {values[-1]} is not a positive integer")
            rows.append(values[:-1])
            labels.append(label - 1)
    if not rows:
        raise DataError(f"{csv_file}: no data rows")
    feats = np.vstack(rows)
    if stats is None:
        stats = isolet_scaling(feats)
    lo, span = stats
    scaled = np.clip((feats - lo) / span, 0.0, 1.0).astype(np.float32)
    return Dataset(scaled, np.array(labels, dtype=np.int64), n_classes=26, split=split), stats


def rotate_image(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a square [0,1] image about its center (bilinear, zero fill)."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DimensionError(f"expected a square image, got shape {image.shape}")
    grid = RotationGrid(image.shape[0], angle_deg)
    return grid.apply(image[None, :, :])[0]


class RotationGrid:
    """Precomputed bilinear sampling map for one rotation angle.

    Rebuilding the trigonometry per image is wasteful when a task rotates
    thousands of samples by the same angle, so the inverse map (four corner
    indices and weights per output pixel, with out-of-frame corners masked)
    is computed once and applied as gathers.
    """

    def __init__(self, side: int, angle_deg: float):
        if not np.isfinite(angle_deg):
            raise InputError(f"rotation angle must be finite, got {angle_deg}")
        self.side = side
        self.angle_deg = float(angle_deg)
        center = (side - 1) / 2.0
        theta = np.deg2rad(angle_deg)
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        dr = rows - center
        dc = cols - center
        # inverse map: sample the source at the point that rotates onto (r, c)
        src_r = cos_t * dr + sin_t * dc + center
        src_c = -sin_t * dr + cos_t * dc + center
        r0 = np.floor(src_r).astype(np.int64)
        c0 = np.floor(src_c).astype(np.int64)
        fr = (src_r - r0).astype(np.float32)
        fc = (src_c - c0).astype(np.float32)
        corners = []
        for dr0, dc0, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                            (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
            rr = r0 + dr0
            cc = c0 + dc0
            inside = (rr >= 0) & (rr < side) & (cc >= 0) & (cc < side)
            flat = np.where(inside, rr * side + cc, 0)
            corners.append((flat.ravel(), (w * inside).astype(np.float32).ravel()))
        self._corners = corners

    def apply(self, images: np.ndarray) -> np.ndarray:
        """Rotate a (B, side, side) or (B, side*side) batch; output clamped to [0,1]."""
        images = np.asarray(images, dtype=np.float32)
        flat = images.reshape(images.shape[0], -1)
        if flat.shape[1] != self.side * self.side:
            raise DimensionError(f"expected {self.side * self.side} pixels, got {flat.shape[1]}")
        out = np.zeros_like(flat)
        for idx, weight in self._corners:
            out += flat[:, idx] * weight[None, :]
        np.clip(out, 0.0, 1.0, out=out)
        return out.reshape(images.shape)


def subset_per_class(dataset: Dataset, total: int, seed: int) -> Dataset:
    """Deterministic stratified subset of roughly ``total`` examples."""
    if total >= len(dataset):
        return dataset
    from .numerics import make_rng

    rng = make_rng(seed, 0xda7a)
    per_class = total // dataset.n_classes
    keep: list[np.ndarray] = []
    for idx in dataset.class_indices():
        take = min(per_class, len(idx))
        keep.append(rng.permutation(idx)[:take])
    order = np.sort(np.concatenate(keep))
    return Dataset(dataset.features[order], dataset.labels[order],
                   dataset.n_classes, dataset.split)
