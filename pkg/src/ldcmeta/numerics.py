"""Dense numeric substrate: seeded RNG, Adam, and a finite-difference oracle.

Real parameters live in plain ``np.ndarray`` of float32 (training) while the
finite-difference oracle works in float64. Randomness always flows through
:func:`make_rng`, which wraps numpy's PCG64 so that a given seed reproduces
the same stream on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, InputError, NumericError

RNG_ALGORITHM = "numpy PCG64 (np.random.default_rng)"


def make_rng(*keys: int) -> np.random.Generator:
    """Deterministic generator keyed by one or more 64-bit integers.

    Multiple keys spawn independent, reproducible streams (seed, stream-id,
    task-id, ...) via numpy's ``SeedSequence``.
    """
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def uniform_init(rng: np.random.Generator, shape: Sequence[int], low: float = -0.5, high: float = 0.5) -> np.ndarray:
    """Uniform(low, high) float32 initialization used for all latent weights."""
    return rng.uniform(low, high, size=shape).astype(np.float32)


@dataclass
class AdamState:
    """Per-parameter Adam moments. Shapes must match the parameter."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=np.zeros_like(param, dtype=np.float32),
            second_moment=np.zeros_like(param, dtype=np.float32),
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )

    def clone(self) -> "AdamState":
        return AdamState(
            self.first_moment.copy(), self.second_moment.copy(), self.step_count,
            self.beta1, self.beta2, self.epsilon,
        )


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state`` and returns new params."""
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise DimensionError(
            f"adam_step shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    if lr <= 0:
        raise InputError(f"adam_step requires lr > 0, got {lr}")
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * np.square(grads)
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    return (params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(np.float32)


def finite_difference_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, entry by entry.

    Works in float64 regardless of the input dtype; this is the package's
    independent oracle for every analytic gradient.
    """
    if h <= 0:
        raise InputError(f"finite_difference_grad requires h > 0, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"finite_difference_grad: non-finite f at entry {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
