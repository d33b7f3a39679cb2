"""Counter-based uniform streams for thread-count independent sampling.

Sub-pixel jitters must depend only on (seed, pixel, sub-ray), never on how
work is batched across threads, so they come from a stateless integer hash
(splitmix64 finalizer) instead of a sequential generator.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_u64(*keys) -> np.ndarray:
    """Combine integer keys (scalars or broadcastable arrays) into u64 hashes."""
    with np.errstate(over="ignore"):
        acc = np.uint64(0x243F6A8885A308D3)
        for k in keys:
            k64 = np.asarray(k).astype(np.uint64)
            acc = _mix((acc + _GAMMA) ^ k64) * _M1 + _GAMMA
        return _mix(acc)


def hash_uniform(*keys) -> np.ndarray:
    """Uniform floats in [0, 1) keyed by the given integers."""
    return (hash_u64(*keys) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
