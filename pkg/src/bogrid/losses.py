"""Photometric and binarization losses with closed-form gradients."""

from __future__ import annotations

import numpy as np

_LN2 = float(np.log(2.0))


def loss_data(rendered: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over pixels and channels."""
    rendered = np.asarray(rendered)
    target = np.asarray(target)
    if rendered.shape != target.shape:
        raise ValueError(f"shape mismatch: {rendered.shape} vs {target.shape}")
    diff = rendered.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))


def loss_data_grad(rendered: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(MSE)/d(rendered)."""
    diff = np.asarray(rendered, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return 2.0 * diff / diff.size


def _softplus(x):
    return np.logaddexp(0.0, x)


def entropy_bits_from_logits(logits: np.ndarray) -> np.ndarray:
    """Binary entropy H(logistic(logit)) in bits, numerically stable.

    H(a) = [a * softplus(-l) + (1 - a) * softplus(l)] / ln 2 with a =
    logistic(l); exact 0 at saturation, 1 at l = 0.
    """
    l = np.abs(np.asarray(logits, dtype=np.float64))  # H(l) = H(-l)
    a = 1.0 / (1.0 + np.exp(-l))
    return (a * _softplus(-l) + (1.0 - a) * _softplus(l)) / _LN2


def loss_entropy(alphas: np.ndarray) -> float:
    """Mean binary entropy (bits) over sampled alphas; 0*log0 reads as 0."""
    a = np.clip(np.asarray(alphas, dtype=np.float64), 0.0, 1.0)
    if a.size == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -a * np.log2(a) - (1.0 - a) * np.log2(1.0 - a)
    h = np.where((a <= 0.0) | (a >= 1.0), 0.0, h)
    return float(np.mean(h))


def entropy_grad_wrt_logits(logits: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """d H(alpha) / d logit per sample: -alpha (1 - alpha) logit / ln 2."""
    logits = np.asarray(logits, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    return -alphas * (1.0 - alphas) * logits / _LN2


def binarization_fraction(alphas: np.ndarray, lo: float = 0.1, hi: float = 0.9) -> float:
    """Fraction of sampled alphas strictly inside (lo, hi)."""
    a = np.asarray(alphas)
    if a.size == 0:
        return 0.0
    return float(np.mean((a > lo) & (a < hi)))
