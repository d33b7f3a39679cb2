"""Baked appearance parameterizations.

A 24-channel feature per query point, decoded elsewhere into diffuse color
plus three spherical-Gaussian lobes.  Two interchangeable spatial layouts:
triplanes + low-resolution voxel grid (feature = sum of three bilinear plane
samples and one trilinear grid sample), and per-vertex attributes blended
barycentrically.  Both are exactly linear in the stored features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contraction import DOMAIN_MIN, DOMAIN_SIZE, contract

FEATURE_CHANNELS = 24
# Channel layout: [0:3] diffuse logits, then per lobe (3 axis, 1 sharpness
# logit, 3 color logits) for 3 lobes.
SH_CHANNELS = 27

# Plane axis pairs: projections of the contracted point onto xy, xz, yz.
PLANE_AXES = ((0, 1), (0, 2), (1, 2))


@dataclass
class AppearanceField:
    """Triplane + low-resolution voxel grid feature field."""

    plane_resolution: int = 256
    grid_resolution: int = 64
    channels: int = FEATURE_CHANNELS
    pre_scale: float = 2.5
    dtype: np.dtype = np.float32
    planes: np.ndarray = field(init=False)
    grid: np.ndarray = field(init=False)

    def __post_init__(self):
        p, v, c = self.plane_resolution, self.grid_resolution, self.channels
        self.planes = np.zeros((3, p, p, c), dtype=self.dtype)
        self.grid = np.zeros((v, v, v, c), dtype=self.dtype)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"planes": self.planes, "grid": self.grid}


@dataclass
class VertexAttributeAppearance:
    """Per-vertex 24-channel features; surface feature is barycentric."""

    features: np.ndarray  # (n_vertices, channels)

    @classmethod
    def zeros(cls, n_vertices: int, channels: int = FEATURE_CHANNELS, dtype=np.float32):
        return cls(np.zeros((n_vertices, channels), dtype=dtype))

    def at(self, tri_vertices: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Blend features over triangles: tri_vertices (n, 3) ids, bary (n, 3)."""
        f = self.features[tri_vertices]  # (n, 3, C)
        return np.einsum("nk,nkc->nc", bary, f)


def _unit_coords(c: np.ndarray) -> np.ndarray:
    """Contracted coordinates mapped to [0, 1]."""
    return (np.asarray(c) - DOMAIN_MIN) / DOMAIN_SIZE


def _interp_1d(u: np.ndarray, res: int):
    """Texel index pair and fraction for linear interpolation along one axis.

    Texel i sits at u = i / (res - 1); queries are clamped to the domain.
    """
    pos = np.clip(u, 0.0, 1.0) * (res - 1)
    i0 = np.minimum(pos.astype(np.int64), res - 2)
    frac = pos - i0
    return i0, frac


def plane_sample_weights(c: np.ndarray, res: int):
    """Bilinear texel indices (..., 3planes, 4) and weights for contracted points."""
    u = _unit_coords(c)
    idx = np.empty(u.shape[:-1] + (3, 4, 2), dtype=np.int64)
    w = np.empty(u.shape[:-1] + (3, 4), dtype=u.dtype)
    for p, (a, b) in enumerate(PLANE_AXES):
        ia, fa = _interp_1d(u[..., a], res)
        ib, fb = _interp_1d(u[..., b], res)
        for k, (da, db) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            idx[..., p, k, 0] = ia + da
            idx[..., p, k, 1] = ib + db
            wa = fa if da else (1.0 - fa)
            wb = fb if db else (1.0 - fb)
            w[..., p, k] = wa * wb
    return idx, w


def grid_sample_weights(c: np.ndarray, res: int):
    """Trilinear texel indices (..., 8, 3) and weights for contracted points."""
    u = _unit_coords(c)
    i0 = np.empty(u.shape, dtype=np.int64)
    fr = np.empty_like(u)
    for a in range(3):
        i0[..., a], fr[..., a] = _interp_1d(u[..., a], res)
    idx = np.empty(u.shape[:-1] + (8, 3), dtype=np.int64)
    w = np.empty(u.shape[:-1] + (8,), dtype=u.dtype)
    for k in range(8):
        d = ((k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1)
        wk = np.ones(u.shape[:-1], dtype=u.dtype)
        for a in range(3):
            idx[..., k, a] = i0[..., a] + d[a]
            wk = wk * (fr[..., a] if d[a] else (1.0 - fr[..., a]))
        w[..., k] = wk
    return idx, w


def appearance_at_contracted(field: AppearanceField, c: np.ndarray) -> np.ndarray:
    """Feature lookup at contracted points (..., 3) -> (..., C)."""
    pidx, pw = plane_sample_weights(c, field.plane_resolution)
    gidx, gw = grid_sample_weights(c, field.grid_resolution)
    out = np.zeros(np.asarray(c).shape[:-1] + (field.channels,), dtype=np.result_type(field.dtype, pw.dtype))
    for p in range(3):
        tex = field.planes[p][pidx[..., p, :, 0], pidx[..., p, :, 1]]  # (..., 4, C)
        out += np.einsum("...k,...kc->...c", pw[..., p, :], tex)
    tex = field.grid[gidx[..., 0], gidx[..., 1], gidx[..., 2]]  # (..., 8, C)
    out += np.einsum("...k,...kc->...c", gw, tex)
    return out


def appearance_at(field: AppearanceField, x: np.ndarray) -> np.ndarray:
    """Feature lookup at world points: contract, then sample planes + grid."""
    return appearance_at_contracted(field, contract(x, field.pre_scale))


def scatter_feature_grads(field: AppearanceField, c: np.ndarray, dfeature: np.ndarray,
                          plane_grads: np.ndarray, grid_grads: np.ndarray) -> None:
    """Accumulate d(loss)/d(texel) for feature gradients at contracted points.

    Deterministic: uses bincount-style accumulation in a fixed order.
    """
    pidx, pw = plane_sample_weights(c, field.plane_resolution)
    gidx, gw = grid_sample_weights(c, field.grid_resolution)
    cch = field.channels
    pres = field.plane_resolution
    gres = field.grid_resolution
    dfeature = np.asarray(dfeature)
    for p in range(3):
        flat = (pidx[..., p, :, 0] * pres + pidx[..., p, :, 1]).reshape(-1)  # (N*4,)
        contrib = (pw[..., p, :, None] * dfeature[..., None, :]).reshape(-1, cch)
        acc = np.zeros((pres * pres, cch), dtype=np.float64)
        for ch in range(cch):
            acc[:, ch] = np.bincount(flat, weights=contrib[:, ch], minlength=pres * pres)
        plane_grads[p] += acc.reshape(pres, pres, cch).astype(plane_grads.dtype)
    flatg = ((gidx[..., 0] * gres + gidx[..., 1]) * gres + gidx[..., 2]).reshape(-1)
    contrib = (gw[..., None] * dfeature[..., None, :]).reshape(-1, cch)
    accg = np.zeros((gres ** 3, cch), dtype=np.float64)
    for ch in range(cch):
        accg[:, ch] = np.bincount(flatg, weights=contrib[:, ch], minlength=gres ** 3)
    grid_grads += accg.reshape(gres, gres, gres, cch).astype(grid_grads.dtype)
