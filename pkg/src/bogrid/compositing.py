"""Front-to-back alpha compositing and its exact gradients."""

from __future__ import annotations

import numpy as np

from . import kernels


def composite(alphas: np.ndarray, colors: np.ndarray, background=(0.0, 0.0, 0.0)):
    """Composite one ray's samples front to back.

    Returns (rgb, weights, residual transmittance).  The accumulated color is
    sum_k w_k c_k + T_end * background with w_k = alpha_k prod_{j<k}(1 -
    alpha_j); weights and T_end always sum to one.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if alphas.ndim != 1 or len(alphas) != len(colors):
        raise ValueError("alphas and colors must be equal-length lists")
    offsets = np.array([0, len(alphas)], dtype=np.int64)
    out_color = np.empty((1, 3))
    out_tend = np.empty(1)
    out_tprev = np.empty(len(alphas))
    out_weight = np.empty(len(alphas))
    kernels.composite_forward(offsets, alphas, colors, np.asarray(background, dtype=np.float64),
                              out_color, out_tend, out_tprev, out_weight)
    return out_color[0], out_weight, float(out_tend[0])


def composite_batch(offsets, alphas, colors, background):
    """Composite packed segments; returns (color, t_end, t_prev, weights) arrays."""
    n = len(offsets) - 1
    dtype = alphas.dtype
    out_color = np.empty((n, 3), dtype=dtype)
    out_tend = np.empty(n, dtype=dtype)
    out_tprev = np.empty(len(alphas), dtype=dtype)
    out_weight = np.empty(len(alphas), dtype=dtype)
    kernels.composite_forward(offsets, alphas, colors, background, out_color,
                              out_tend, out_tprev, out_weight)
    return out_color, out_tend, out_tprev, out_weight


def composite_backward_batch(offsets, alphas, colors, background, t_prev, weights,
                             dl_dcolor):
    """Per-sample gradients (d alpha, d color) for packed segments."""
    out_dalpha = np.empty(len(alphas), dtype=alphas.dtype)
    kernels.composite_backward(offsets, alphas, colors, background, t_prev,
                               dl_dcolor, out_dalpha)
    # dL/dc_k = w_k * dL/dC broadcast over the ray's segment
    ray_ids = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    out_dcolor = weights[:, None] * dl_dcolor[ray_ids]
    return out_dalpha, out_dcolor
