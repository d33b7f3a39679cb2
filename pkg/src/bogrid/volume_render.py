"""Volume rendering of the opacity grid: supersampled color and depth passes.

The forward pass records everything the analytic backward needs (sample
lists, per-sample transmittance, weights), so training can reuse a single
code path that is exact at float64 for gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .appearance import AppearanceField, appearance_at_contracted
from .camera import Camera, subpixel_offsets
from .compositing import composite_batch
from .contraction import ContractionConfig, unlinear_index, voxel_center_contracted
from .opacity import OpacityGrid, logistic
from .shading import SGDecodeConfig
from .traversal import TraversalBuffers, march_batch

DEFAULT_BACKGROUND = (0.5, 0.5, 0.5)


def ray_box_range(origins, dirs, box_min, box_max):
    """Slab test: per-ray (t_near, t_far) against a world AABB, clipped at 0."""
    inv = np.where(dirs != 0, 1.0 / np.where(dirs != 0, dirs, 1.0), np.inf)
    t0 = (np.asarray(box_min) - origins) * inv
    t1 = (np.asarray(box_max) - origins) * inv
    tmin = np.minimum(t0, t1).max(axis=-1)
    tmax = np.maximum(t0, t1).min(axis=-1)
    tmin = np.maximum(tmin, 1e-4)
    hit = tmax > tmin
    return np.where(hit, tmin, 0.0), np.where(hit, tmax, 0.0)


@dataclass
class RenderTape:
    """Recorded forward pass over one ray batch."""

    voxels: np.ndarray        # (n_samples,) linear voxel ids
    ts: np.ndarray            # (n_samples,) entry distances
    offsets: np.ndarray       # (n_rays + 1,) segment offsets
    alphas: np.ndarray        # (n_samples,)
    logits: np.ndarray        # (n_samples,)
    colors: np.ndarray        # (n_samples, 3) decoded (zero where inactive)
    active: np.ndarray        # (n_samples,) bool, colors decoded here
    active_unique: np.ndarray  # unique voxel ids among active samples
    active_inverse: np.ndarray
    features: np.ndarray      # (n_active, channels) gathered features
    view_dirs: np.ndarray     # (n_active, 3)
    t_prev: np.ndarray        # (n_samples,) transmittance before each sample
    weights: np.ndarray       # (n_samples,)
    ray_colors: np.ndarray    # (n_rays, 3)
    t_end: np.ndarray         # (n_rays,)


class VolumeRenderer:
    """Renders ray batches against an opacity grid + appearance field."""

    def __init__(self, grid: OpacityGrid, field: AppearanceField,
                 sg_config: SGDecodeConfig = SGDecodeConfig(),
                 background=DEFAULT_BACKGROUND, weight_cutoff: float = 1e-5,
                 coarse_mask: np.ndarray | None = None, coarse_factor: int = 8):
        self.grid = grid
        self.field = field
        self.sg_config = sg_config
        self.background = np.asarray(background, dtype=np.float64)
        self.weight_cutoff = weight_cutoff
        self.coarse_mask = coarse_mask
        self.coarse_factor = coarse_factor
        self._buffers: TraversalBuffers | None = None

    def _get_buffers(self, n_rays: int, dtype) -> TraversalBuffers:
        cap = 3 * self.grid.resolution + 128
        b = self._buffers
        if b is None or b.out_voxel.shape[0] < n_rays or b.cap != cap or b.out_t.dtype != dtype:
            b = TraversalBuffers(n_rays, cap, dtype=dtype)
            self._buffers = b
        return b

    def forward(self, origins, dirs, t_near, t_far, record: bool = True) -> RenderTape:
        """Trace, shade, and composite one ray batch."""
        dtype = origins.dtype
        cfg = self.grid.config
        buffers = self._get_buffers(len(origins), dtype)
        voxels, ts, offsets = march_batch(origins, dirs, t_near, t_far, cfg, buffers,
                                          self.coarse_mask, self.coarse_factor)
        flat = self.grid.dense_logits().ravel()
        logits = flat[voxels].astype(dtype, copy=False)
        alphas = logistic(logits)
        bg = self.background.astype(dtype)

        zeros = np.zeros((len(voxels), 3), dtype=dtype)
        _, _, t_prev, weights = composite_batch(offsets, alphas, zeros, bg)

        active = weights > dtype.type(self.weight_cutoff) if self.weight_cutoff > 0 \
            else np.ones(len(weights), dtype=bool)
        act_vox = voxels[active]
        uniq, inv = np.unique(act_vox, return_inverse=True)
        centers = voxel_center_contracted(unlinear_index(uniq, cfg.grid_resolution),
                                          cfg.grid_resolution).astype(dtype)
        feats_u = appearance_at_contracted(self.field, centers).astype(dtype)
        feats = feats_u[inv]
        ray_ids = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
        vdirs = np.ascontiguousarray(dirs[ray_ids[active]], dtype=dtype)
        rgb_act = np.empty((len(feats), 3), dtype=dtype)
        kernels.decode_sg_forward(np.ascontiguousarray(feats), vdirs,
                                  dtype.type(self.sg_config.lambda_scale), rgb_act)
        colors = zeros
        colors[active] = rgb_act
        ray_colors, t_end, t_prev, weights = composite_batch(offsets, alphas, colors, bg)
        return RenderTape(voxels, ts, offsets, alphas, logits, colors, active,
                          uniq, inv, feats, vdirs, t_prev, weights, ray_colors, t_end)

    def render_rays(self, origins, dirs, t_near, t_far) -> np.ndarray:
        return self.forward(origins, dirs, t_near, t_far).ray_colors

    def render_pixel(self, camera: Camera, pixel: tuple[int, int], bounds,
                     n_subrays: int = 16, seed: int = 0, jitter: bool = True) -> np.ndarray:
        """Mean over sub-rays of the composited color for one pixel."""
        if n_subrays < 1:
            raise ValueError("n_subrays must be >= 1")
        i, j = pixel
        key = np.uint64(j * camera.width + i)
        ox, oy = subpixel_offsets(n_subrays, seed, key, jitter)
        origins, dirs = camera.rays_through(i + ox, j + oy)
        t0, t1 = ray_box_range(origins, dirs, *bounds)
        colors = self.render_rays(origins, dirs, t0, t1)
        return colors.mean(axis=0)

    def render_image(self, camera: Camera, bounds, n_subrays: int = 16, seed: int = 0,
                     jitter: bool = True, rows_per_batch: int = 16) -> np.ndarray:
        """Full-frame render, pixel-major sub-ray batches."""
        w, h = camera.width, camera.height
        img = np.empty((h, w, 3), dtype=np.float64)
        for j0 in range(0, h, rows_per_batch):
            j1 = min(h, j0 + rows_per_batch)
            jj, ii = np.meshgrid(np.arange(j0, j1), np.arange(w), indexing="ij")
            keys = (jj * w + ii).astype(np.uint64).reshape(-1)
            ox, oy = subpixel_offsets(n_subrays, seed, keys, jitter)
            px = ii.reshape(-1, 1) + ox
            py = jj.reshape(-1, 1) + oy
            origins, dirs = camera.rays_through(px.reshape(-1), py.reshape(-1))
            t0, t1 = ray_box_range(origins, dirs, *bounds)
            colors = self.render_rays(origins, dirs, t0, t1)
            img[j0:j1] = colors.reshape(j1 - j0, w, n_subrays, 3).mean(axis=2)
        return img


def render_depth(camera: Camera, grid: OpacityGrid, bounds, threshold: float = 0.5,
                 coarse_mask: np.ndarray | None = None, coarse_factor: int = 8) -> np.ndarray:
    """Per-pixel distance to the first voxel with alpha above the threshold.

    One center ray per pixel; +inf where no voxel along the ray clears it.
    """
    w, h = camera.width, camera.height
    jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    origins, dirs = camera.rays_through(ii.reshape(-1) + 0.5, jj.reshape(-1) + 0.5)
    t0, t1 = ray_box_range(origins, dirs, *bounds)
    flat = grid.dense_logits().ravel().astype(np.float64)
    logit_thr = float(np.log(threshold / (1.0 - threshold)))
    mask = np.zeros(1, dtype=np.uint8) if coarse_mask is None else coarse_mask.ravel()
    out = np.empty(len(origins), dtype=np.float64)
    kernels.depth_first_hit(origins, dirs, t0, t1, grid.config.pre_scale,
                            grid.resolution, logit_thr, flat, mask, coarse_factor, out)
    return out.reshape(h, w)
