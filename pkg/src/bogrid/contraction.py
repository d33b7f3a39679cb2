"""Contracted-space coordinate handling.

Unbounded world coordinates are squashed into the cube [-2, 2]^3 by a
piecewise map that is the identity (after pre-scaling) inside the unit cube
and compresses the outside with distance-dependent resolution.  All voxel
lattices in this package live in contracted space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Contracted domain bounds; every contracted coordinate lies in [-2, 2).
DOMAIN_MIN = -2.0
DOMAIN_MAX = 2.0
DOMAIN_SIZE = DOMAIN_MAX - DOMAIN_MIN


@dataclass(frozen=True)
class ContractionConfig:
    """Pre-scale factor and lattice resolution across the contracted domain."""

    pre_scale: float = 2.5
    grid_resolution: int = 256

    def __post_init__(self):
        if not (self.pre_scale > 0):
            raise ValueError(f"pre_scale must be positive, got {self.pre_scale}")
        r = self.grid_resolution
        if r < 8 or (r & (r - 1)) != 0:
            raise ValueError(f"grid_resolution must be a power of two >= 8, got {r}")

    @property
    def voxel_size(self) -> float:
        """Side length of one voxel in contracted units."""
        return DOMAIN_SIZE / self.grid_resolution


def contract(x: np.ndarray, pre_scale: float = 2.5) -> np.ndarray:
    """Map world points (..., 3) into the contracted cube [-2, 2]^3.

    The pre-scale is applied internally: with x' = pre_scale * x, the map is
    the identity where ||x'||_inf <= 1; outside, the coordinate attaining the
    infinity norm maps to (2 - 1/|x'_i|) * sign(x'_i) and the remaining
    coordinates map to x'_i / ||x'||_inf.
    """
    x = np.asarray(x, dtype=np.float64) if np.asarray(x).dtype.kind != "f" else np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("contract: input contains non-finite values")
    xs = x * x.dtype.type(pre_scale)
    absx = np.abs(xs)
    norm = np.max(absx, axis=-1, keepdims=True)
    inside = norm <= 1.0
    safe_norm = np.where(norm > 0, norm, 1.0)
    out = xs / safe_norm
    # Coordinates attaining the max norm follow the radial rule; ties all do.
    radial = (2.0 - 1.0 / safe_norm) * np.sign(xs)
    out = np.where(absx == norm, radial, out)
    return np.where(inside, xs, out)


def uncontract(c: np.ndarray, pre_scale: float = 2.5) -> np.ndarray:
    """Exact inverse of :func:`contract` on the open domain (-2, 2)^3."""
    c = np.asarray(c, dtype=np.float64) if np.asarray(c).dtype.kind != "f" else np.asarray(c)
    absc = np.abs(c)
    m = np.max(absc, axis=-1, keepdims=True)
    inside = m <= 1.0
    # |x'_max| = 1 / (2 - |c_max|); non-max coordinates were divided by it.
    r = 1.0 / np.maximum(2.0 - m, np.finfo(c.dtype).tiny)
    radial = np.sign(c) * r
    xs = np.where(absc == m, radial, c * r)
    xs = np.where(inside, c, xs)
    return xs / pre_scale


def voxel_from_contracted(c: np.ndarray, resolution: int) -> np.ndarray:
    """Quantize contracted points (..., 3) to voxel indices in [0, R-1]^3."""
    c = np.asarray(c)
    idx = np.floor((c - DOMAIN_MIN) / DOMAIN_SIZE * resolution).astype(np.int64)
    return np.clip(idx, 0, resolution - 1)


def world_to_voxel(x: np.ndarray, config: ContractionConfig) -> np.ndarray:
    """Contract world points and quantize to voxel indices."""
    return voxel_from_contracted(contract(x, config.pre_scale), config.grid_resolution)


def voxel_center_contracted(idx: np.ndarray, resolution: int) -> np.ndarray:
    """Contracted-space centers of voxel indices (..., 3).

    Exact on lattice points: for power-of-two R the center coordinates are
    binary fractions, so voxel_from_contracted(voxel_center_contracted(i)) == i
    holds without rounding slack.
    """
    idx = np.asarray(idx)
    return DOMAIN_MIN + (idx + 0.5) * (DOMAIN_SIZE / resolution)


def voxel_center_world(idx: np.ndarray, config: ContractionConfig) -> np.ndarray:
    """World-space centers of voxel indices."""
    return uncontract(voxel_center_contracted(idx, config.grid_resolution), config.pre_scale)


def world_voxel_extent(x: np.ndarray, config: ContractionConfig) -> np.ndarray:
    """Approximate world-space side length of the voxel containing world x.

    Inside the unit pre-scaled cube this is exact; outside, the radial
    stretch of the inverse contraction (r^2) dominates, giving a conservative
    per-point bound used for fusion depth tolerances.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.max(np.abs(x * config.pre_scale), axis=-1)
    base = config.voxel_size / config.pre_scale
    return base * np.maximum(1.0, r) ** 2


def linear_index(idx: np.ndarray, resolution: int) -> np.ndarray:
    """Flatten (..., 3) voxel indices x-fastest."""
    idx = np.asarray(idx)
    return (idx[..., 2] * resolution + idx[..., 1]) * resolution + idx[..., 0]


def unlinear_index(lin: np.ndarray, resolution: int) -> np.ndarray:
    """Inverse of :func:`linear_index`."""
    lin = np.asarray(lin)
    ix = lin % resolution
    iy = (lin // resolution) % resolution
    iz = lin // (resolution * resolution)
    return np.stack([ix, iy, iz], axis=-1)
