"""View-dependent color decoding: spherical Gaussians and spherical harmonics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .opacity import logistic

SG_LOBES = 3


@dataclass(frozen=True)
class SGDecodeConfig:
    """Sharpness mapping for the three spherical-Gaussian lobes."""

    lambda_scale: float = 10.0

    def sharpness(self, sharpness_logit):
        return np.logaddexp(0.0, sharpness_logit) * self.lambda_scale


def decode_sg(feature: np.ndarray, view_dir: np.ndarray,
              config: SGDecodeConfig = SGDecodeConfig()) -> np.ndarray:
    """Decode 24-channel features (..., 24) at unit view directions (..., 3).

    rgb = clamp(sigmoid(diffuse) + sum_i sigmoid(color_i) * exp(lambda_i
    (dot(d, mu_i) - 1)), 0, 1) with mu_i the normalized lobe axis; lobes with
    near-zero axes contribute nothing.
    """
    feature = np.asarray(feature, dtype=np.float64)
    view_dir = np.asarray(view_dir, dtype=np.float64)
    flat_f = feature.reshape(-1, feature.shape[-1])
    flat_d = np.broadcast_to(view_dir, feature.shape[:-1] + (3,)).reshape(-1, 3)
    out = np.empty((len(flat_f), 3))
    kernels.decode_sg_forward(np.ascontiguousarray(flat_f), np.ascontiguousarray(flat_d),
                              config.lambda_scale, out)
    return out.reshape(feature.shape[:-1] + (3,))


# Real spherical harmonics basis constants up to degree 2.
_SH_C0 = 0.28209479177387814
_SH_C1 = 0.4886025119029199
_SH_C2 = (1.0925484305920792, 1.0925484305920792, 0.31539156525252005,
          1.0925484305920792, 0.5462742152960396)


def sh_basis(view_dir: np.ndarray) -> np.ndarray:
    """Degree-2 real SH basis (..., 9) at unit directions."""
    d = np.asarray(view_dir, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack([
        np.full_like(x, _SH_C0),
        -_SH_C1 * y,
        _SH_C1 * z,
        -_SH_C1 * x,
        _SH_C2[0] * x * y,
        -_SH_C2[1] * y * z,
        _SH_C2[2] * (3.0 * z * z - 1.0),
        -_SH_C2[3] * x * z,
        _SH_C2[4] * (x * x - y * y),
    ], axis=-1)


def decode_sh(feature: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Decode 27-channel SH features: per-channel basis dot, then logistic.

    Layout: 9 coefficient blocks of RGB, coefficient-major.
    """
    feature = np.asarray(feature, dtype=np.float64)
    coeffs = feature.reshape(feature.shape[:-1] + (9, 3))
    basis = sh_basis(view_dir)
    raw = np.einsum("...k,...kc->...c", basis, coeffs)
    return logistic(raw)


def decode_sh_backward(feature: np.ndarray, view_dir: np.ndarray, dl_drgb: np.ndarray) -> np.ndarray:
    """Gradients of decode_sh w.r.t. the 27 coefficients."""
    feature = np.asarray(feature, dtype=np.float64)
    coeffs = feature.reshape(feature.shape[:-1] + (9, 3))
    basis = sh_basis(view_dir)
    raw = np.einsum("...k,...kc->...c", basis, coeffs)
    sig = logistic(raw)
    draw = np.asarray(dl_drgb) * sig * (1.0 - sig)
    dcoef = basis[..., :, None] * draw[..., None, :]
    return dcoef.reshape(feature.shape)


def decode_diffuse(feature: np.ndarray) -> np.ndarray:
    """Diffuse-only decode: logistic of the first three channels."""
    return logistic(np.asarray(feature, dtype=np.float64)[..., :3])


def decode_diffuse_backward(feature: np.ndarray, dl_drgb: np.ndarray) -> np.ndarray:
    feature = np.asarray(feature, dtype=np.float64)
    out = np.zeros_like(feature)
    sig = logistic(feature[..., :3])
    out[..., :3] = np.asarray(dl_drgb) * sig * (1.0 - sig)
    return out
