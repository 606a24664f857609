"""Random bit-error injection into deployed binary models.

Faults hit the baked (inference-time) bits only; real training latents are
never corrupted. Every bit in scope flips independently with probability p
from a seeded stream, so a (model, config) pair always yields the same
corrupted copy. Padding bits in the packed rows are left alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapt import restricted_argmax
from .bits import pack_bipolar, unpack_bipolar
from .errors import ConfigError
from .model import BakedModel, baked_encode
from .numerics import make_rng
from .tasks import Episode

SCOPES = ("feature-layer", "class-layer", "value-lut", "all")


@dataclass
class FaultConfig:
    flip_probability: float
    scope: str = "all"
    seed: int = 0
    trials: int = 10

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")


def _flip(packed: np.ndarray, dim: int, p: float, rng: np.random.Generator) -> np.ndarray:
    pm1 = unpack_bipolar(packed, dim)
    mask = rng.random(pm1.shape) < p
    return pack_bipolar(np.where(mask, -pm1, pm1))


def inject(baked: BakedModel, cfg: FaultConfig) -> BakedModel:
    """Corrupted copy of a baked model; the input is untouched."""
    out = baked.clone()
    rng = make_rng(cfg.seed, 0xfa17)
    # fixed array order so the stream is stable across scopes
    if cfg.scope in ("value-lut", "all"):
        out.value_lut_bits = _flip(out.value_lut_bits, out.dim, cfg.flip_probability, rng)
    if cfg.scope in ("feature-layer", "all"):
        out.feature_bits = _flip(out.feature_bits, out.dim, cfg.flip_probability, rng)
    if cfg.scope in ("class-layer", "all"):
        out.class_bits = _flip(out.class_bits, out.dim, cfg.flip_probability, rng)
    return out


def _episode_accuracy(baked: BakedModel, episode: Episode, chunk: int = 512) -> float:
    subset = None
    if episode.task.kind == "class-subset":
        subset = np.array(sorted(episode.task.classes))
    class_sign = unpack_bipolar(baked.class_bits, baked.dim).astype(np.int32)
    hits = 0
    for lo in range(0, len(episode.query_x), chunk):
        enc = baked_encode(baked, episode.query_x[lo:lo + chunk])
        pred = restricted_argmax(enc.astype(np.int32) @ class_sign.T, subset)
        hits += int(np.count_nonzero(pred == episode.query_y[lo:lo + chunk]))
    return hits / len(episode.query_x)


def fault_free_accuracy(baked: BakedModel, episodes: list[Episode]) -> float:
    return float(np.mean([_episode_accuracy(baked, ep) for ep in episodes]))


def robustness_sweep(baked: BakedModel, episodes: list[Episode], p_grid: list[float],
                     trials: int, seed: int, scope: str = "all",
                     ) -> list[tuple[float, float, float]]:
    """Mean/std accuracy under injection for each bit-error rate.

    The p = 0 row goes through the same path and therefore equals the
    fault-free accuracy exactly. Std is over trials (population).
    """
    if not p_grid:
        raise ConfigError("p_grid must be nonempty")
    rows = []
    for pi, p in enumerate(p_grid):
        accs = []
        for trial in range(trials):
            cfg = FaultConfig(p, scope=scope, seed=int(make_rng(seed, pi, trial).integers(1 << 62)))
            corrupted = inject(baked, cfg)
            accs.append(np.mean([_episode_accuracy(corrupted, ep) for ep in episodes]))
        rows.append((float(p), float(np.mean(accs)), float(np.std(accs))))
    return rows
