"""Ray-voxel traversal: ordered, deduplicated sample lists per ray."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .contraction import ContractionConfig, unlinear_index

_NO_MASK = np.zeros(1, dtype=np.uint8)


@dataclass
class RaySampleList:
    """Per-ray traversal output: voxel indices with strictly increasing entry t."""

    voxels: np.ndarray  # (n, 3) int
    ts: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.ts)


class TraversalBuffers:
    """Reusable per-batch scratch arrays for the march kernel."""

    def __init__(self, n_rays: int, cap: int, dtype=np.float32):
        self.cap = cap
        table = 1
        while table < 2 * cap:
            table *= 2
        self.out_voxel = np.empty((n_rays, cap), dtype=np.int32)
        self.out_t = np.empty((n_rays, cap), dtype=dtype)
        self.out_count = np.empty(n_rays, dtype=np.int64)
        self.hash_keys = np.empty((n_rays, table), dtype=np.int32)
        self.hash_stamp = np.zeros((n_rays, table), dtype=np.int32)
        self.stamp = 1

    def next_stamp(self, n_rays: int) -> int:
        if self.stamp > 2**30:
            self.hash_stamp[:] = 0
            self.stamp = 1
        s = self.stamp
        self.stamp += n_rays
        return s


def march_batch(origins, dirs, t_near, t_far, config: ContractionConfig,
                buffers: TraversalBuffers, coarse_mask=None, coarse_factor: int = 8,
                step_scale: float = 1.0):
    """Traverse a batch of rays; returns packed (voxel_lin, ts, ray_offsets)."""
    n = origins.shape[0]
    mask = _NO_MASK if coarse_mask is None else coarse_mask.ravel()
    kernels.march_rays(origins, dirs, t_near, t_far, origins.dtype.type(config.pre_scale),
                       config.grid_resolution, origins.dtype.type(step_scale),
                       mask, coarse_factor,
                       buffers.out_voxel[:n], buffers.out_t[:n], buffers.out_count[:n],
                       buffers.hash_keys[:n], buffers.hash_stamp[:n],
                       buffers.next_stamp(n))
    total = int(buffers.out_count[:n].sum())
    packed_voxel = np.empty(total, dtype=np.int32)
    packed_t = np.empty(total, dtype=buffers.out_t.dtype)
    ray_offsets = np.empty(n + 1, dtype=np.int64)
    kernels.pack_samples(buffers.out_voxel[:n], buffers.out_t[:n], buffers.out_count[:n],
                         packed_voxel, packed_t, ray_offsets)
    return packed_voxel, packed_t, ray_offsets


def traverse(origin, direction, config: ContractionConfig, t_near: float, t_far: float,
             coarse_mask=None, coarse_factor: int = 8, cap: int | None = None,
             step_scale: float = 1.0) -> RaySampleList:
    """Sample the voxels intersected by one ray between t_near and t_far.

    Positions are sampled at world steps keeping contracted spacing at or
    below half the local voxel size; each voxel is emitted once, at its first
    occurrence, so the list is sorted by entry distance with no repeats.
    """
    if not (t_near < t_far):
        raise ValueError("traverse requires t_near < t_far")
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError("degenerate ray direction")
    origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    direction = (direction / norm).reshape(1, 3)
    if cap is None:
        # generous bound: total contracted path length ~ 8 at half-voxel steps
        cap = int((8 * config.grid_resolution + 64) / min(1.0, step_scale))
    buffers = TraversalBuffers(1, cap, dtype=np.float64)
    voxels, ts, offsets = march_batch(origin, direction,
                                      np.array([t_near], dtype=np.float64),
                                      np.array([t_far], dtype=np.float64),
                                      config, buffers, coarse_mask, coarse_factor,
                                      step_scale)
    return RaySampleList(unlinear_index(voxels, config.grid_resolution), ts)
