"""Adam optimizers: a dense reference step and a lazy variant for big lattices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_params(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64),
                   np.zeros_like(params, dtype=np.float64))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
    """Standard Adam update with bias correction, applied in place.

    A NaN anywhere in the gradient rejects the whole step (parameters and
    state untouched) and raises so callers can report it.
    """
    grads = np.asarray(grads)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("parameter/gradient/state shapes do not match")
    if np.isnan(grads).any():
        raise FloatingPointError("NaN gradient; Adam step rejected")
    state.step += 1
    t = state.step
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    mhat = state.m / (1.0 - beta1 ** t)
    vhat = state.v / (1.0 - beta2 ** t)
    params -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(params.dtype)
    return params


class LazyAdam:
    """Adam over a huge parameter array, touching only slots with gradient.

    Moment updates and parameter steps happen only at touched flat indices;
    bias correction uses the global step count (SparseAdam convention).
    Untouched slots keep stale moments, which is the standard trade-off for
    embedding-style training where a dense pass per step is unaffordable.
    """

    def __init__(self, params: np.ndarray, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.m = np.zeros(params.size, dtype=np.float32)
        self.v = np.zeros(params.size, dtype=np.float32)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0

    def update(self, flat_ids: np.ndarray, grads: np.ndarray, lr: float) -> None:
        """flat_ids must be unique; grads are the per-slot accumulated sums."""
        if np.isnan(grads).any():
            raise FloatingPointError("NaN gradient; Adam step rejected")
        self.step += 1
        t = self.step
        m = self.m[flat_ids] * self.beta1 + (1.0 - self.beta1) * grads
        v = self.v[flat_ids] * self.beta2 + (1.0 - self.beta2) * grads * grads
        self.m[flat_ids] = m
        self.v[flat_ids] = v
        mhat = m / (1.0 - self.beta1 ** t)
        vhat = v / (1.0 - self.beta2 ** t)
        flat = self.params.reshape(-1)
        flat[flat_ids] -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(flat.dtype)

    def state_blob(self) -> dict[str, np.ndarray]:
        return {"m": self.m, "v": self.v, "step": np.array([self.step], dtype=np.int64)}

    def load_blob(self, blob: dict[str, np.ndarray]) -> None:
        self.m[:] = blob["m"]
        self.v[:] = blob["v"]
        self.step = int(blob["step"][0])


def cosine_lr(step: int, total: int, lr_init: float, lr_final: float,
              warmup: int = 0) -> float:
    """Cosine decay between the endpoints, with optional linear warmup."""
    if warmup > 0 and step < warmup:
        return lr_init * (step + 1) / warmup
    span = max(1, total - warmup)
    u = min(1.0, max(0.0, (step - warmup) / span))
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + np.cos(np.pi * u))
