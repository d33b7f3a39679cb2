"""Geometry training: photometric loss plus entropy binarization.

Each step samples a pixel batch, renders 16 sub-rays per pixel against the
opacity grid with jointly trained voxel appearance, and applies analytic
gradients.  Gradient reductions run in fixed order (bincount over sorted
unique voxel ids), so runs are bitwise reproducible for a given seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .appearance import AppearanceField, appearance_at_contracted, scatter_feature_grads
from .camera import Camera, subpixel_offsets
from .compositing import composite_backward_batch
from .contraction import unlinear_index, voxel_center_contracted
from .losses import (binarization_fraction, entropy_grad_wrt_logits, loss_data,
                     loss_data_grad, loss_entropy)
from .opacity import OpacityGrid, occupancy_mask
from .optimizers import AdamState, LazyAdam, adam_step, cosine_lr
from .shading import SGDecodeConfig
from .volume_render import DEFAULT_BACKGROUND, VolumeRenderer, ray_box_range


@dataclass
class TrainConfig:
    """Hyperparameters for opacity-grid optimization."""

    steps: int = 5000              # desk scale; 25000 at full scale
    lr_init: float = 0.01
    lr_final: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    entropy_weight: float = 0.05
    entropy_ramp_fraction: float = 0.2  # linear ramp-in over this step fraction
    entropy_delay_fraction: float = 0.35  # zero weight before this step fraction
    pixels_per_batch: int = 512
    subrays_per_pixel: int = 16
    init_logit: float = 0.0
    appearance_plane_resolution: int = 64
    appearance_grid_resolution: int = 16
    occupancy_refresh: int = 500   # steps between coarse-mask refreshes; 0 disables
    occupancy_threshold: float = 2e-3
    weight_cutoff: float = 1e-5
    background: tuple = DEFAULT_BACKGROUND
    seed: int = 0

    def __post_init__(self):
        if self.entropy_weight < 0:
            raise ValueError("entropy weight must be non-negative")
        if self.lr_init <= 0 or self.lr_final <= 0:
            raise ValueError("learning rates must be positive")

    def entropy_weight_at(self, step: int) -> float:
        delay = int(self.entropy_delay_fraction * self.steps)
        if step < delay:
            return 0.0
        ramp = max(1, int(self.entropy_ramp_fraction * self.steps))
        return self.entropy_weight * min(1.0, (step - delay + 1) / ramp)


@dataclass
class LossReport:
    step: int
    data: float
    entropy: float
    total: float
    binarization: float  # fraction of batch-sampled alphas in (0.1, 0.9)


@dataclass
class BatchGradients:
    """Gradients of the total loss for one ray batch."""

    voxel_ids: np.ndarray     # unique linear voxel ids
    logit_grads: np.ndarray   # matching accumulated gradients
    plane_grads: np.ndarray   # dense (3, P, P, C)
    grid_grads: np.ndarray    # dense (V, V, V, C)
    report_data: float
    report_entropy: float


def forward_backward(renderer: VolumeRenderer, origins, dirs, t_near, t_far,
                     targets: np.ndarray, n_sub: int, entropy_weight: float):
    """Loss and exact gradients for one pixel batch.

    Rays are pixel-major: n_sub consecutive rays per pixel.  Returns the
    (data, entropy, total, binarization) numbers and a BatchGradients with
    per-voxel logit gradients plus dense appearance-texture gradients.
    """
    tape = renderer.forward(origins, dirs, t_near, t_far)
    n_pixels = len(targets)
    pixel_colors = tape.ray_colors.reshape(n_pixels, n_sub, 3).mean(axis=1)
    data = loss_data(pixel_colors, targets)
    entropy = loss_entropy(tape.alphas)
    total = data + entropy_weight * entropy

    # d(data)/d(per-ray color)
    dl_dpixel = loss_data_grad(pixel_colors, targets)
    dl_dray = np.repeat(dl_dpixel / n_sub, n_sub, axis=0).astype(tape.alphas.dtype)

    dalpha, dcolor = composite_backward_batch(
        tape.offsets, tape.alphas, tape.colors,
        renderer.background.astype(tape.alphas.dtype), tape.t_prev, tape.weights, dl_dray)

    # logit gradients: compositing term + entropy term, reduced per voxel
    dlogit = dalpha * tape.alphas * (1.0 - tape.alphas)
    if entropy_weight > 0 and len(tape.alphas) > 0:
        dlogit = dlogit + (entropy_weight / len(tape.alphas)) * entropy_grad_wrt_logits(
            tape.logits, tape.alphas)
    uniq, inv = np.unique(tape.voxels, return_inverse=True)
    logit_grads = np.bincount(inv, weights=dlogit.astype(np.float64), minlength=len(uniq))

    # appearance gradients through the SG decode for active samples
    field_ = renderer.field
    plane_grads = np.zeros_like(field_.planes, dtype=np.float64)
    grid_grads = np.zeros_like(field_.grid, dtype=np.float64)
    if tape.active.any():
        dl_drgb_act = np.ascontiguousarray(dcolor[tape.active])
        dfeat = np.empty_like(tape.features)
        kernels.decode_sg_backward(tape.features, tape.view_dirs,
                                   tape.features.dtype.type(renderer.sg_config.lambda_scale),
                                   np.ascontiguousarray(tape.colors[tape.active]),
                                   dl_drgb_act, dfeat)
        nu = len(tape.active_unique)
        cch = field_.channels
        dfeat_u = np.empty((nu, cch), dtype=np.float64)
        for ch in range(cch):
            dfeat_u[:, ch] = np.bincount(tape.active_inverse, weights=dfeat[:, ch],
                                         minlength=nu)
        centers = voxel_center_contracted(
            unlinear_index(tape.active_unique, renderer.grid.config.grid_resolution),
            renderer.grid.config.grid_resolution)
        scatter_feature_grads(field_, centers, dfeat_u, plane_grads, grid_grads)

    grads = BatchGradients(uniq, logit_grads, plane_grads, grid_grads, data, entropy)
    report = LossReport(0, data, entropy, total, binarization_fraction(tape.alphas))
    return report, grads


@dataclass
class TrainResult:
    grid: OpacityGrid
    field: AppearanceField
    trace: list[LossReport] = field(default_factory=list)


def _sample_batch(rng: np.random.Generator, cameras: list[Camera], images: np.ndarray,
                  n_pixels: int):
    """Pick (view, pixel) pairs uniformly over all views' pixels."""
    n_views = len(cameras)
    h, w = images.shape[1], images.shape[2]
    view_ids = rng.integers(0, n_views, n_pixels)
    px = rng.integers(0, w, n_pixels)
    py = rng.integers(0, h, n_pixels)
    targets = images[view_ids, py, px]
    return view_ids, px, py, targets


def _batch_rays(cameras, view_ids, px, py, n_sub, seed, step, dtype):
    """Pixel-major sub-ray arrays for a sampled batch."""
    keys = ((np.asarray(view_ids, dtype=np.uint64) << np.uint64(40))
            + (np.asarray(py, dtype=np.uint64) << np.uint64(20))
            + np.asarray(px, dtype=np.uint64))
    ox, oy = subpixel_offsets(n_sub, (seed << 20) ^ step, keys)
    n_pixels = len(px)
    origins = np.empty((n_pixels * n_sub, 3), dtype=dtype)
    dirs = np.empty((n_pixels * n_sub, 3), dtype=dtype)
    for v in np.unique(view_ids):
        sel = np.where(view_ids == v)[0]
        cam = cameras[v]
        o, d = cam.rays_through((px[sel, None] + ox[sel]).ravel(),
                                (py[sel, None] + oy[sel]).ravel())
        rows = (sel[:, None] * n_sub + np.arange(n_sub)).ravel()
        origins[rows] = o
        dirs[rows] = d
    return origins, dirs


def train_geometry(cameras: list[Camera], images: np.ndarray, bounds,
                   grid: OpacityGrid, config: TrainConfig,
                   field_init: AppearanceField | None = None,
                   trace_path=None) -> TrainResult:
    """Optimize opacity logits (and joint appearance) on a multi-view dataset.

    images: (n_views, h, w, 3) float targets in [0, 1].  bounds: world AABB
    (min, max) limiting traversal.  Divergence (NaN loss) aborts with
    diagnostics.
    """
    if len(cameras) < 2:
        raise ValueError("training requires at least 2 views")
    if grid.sparse:
        raise ValueError("training updates logits in place and needs a dense grid")
    images = np.asarray(images, dtype=np.float32)
    appearance = field_init or AppearanceField(
        plane_resolution=config.appearance_plane_resolution,
        grid_resolution=config.appearance_grid_resolution,
        pre_scale=grid.config.pre_scale)
    renderer = VolumeRenderer(grid, appearance, SGDecodeConfig(),
                              background=config.background,
                              weight_cutoff=config.weight_cutoff)
    logit_opt = LazyAdam(grid.dense_logits(), config.beta1, config.beta2, config.eps)
    plane_state = AdamState.for_params(appearance.planes)
    grid_state = AdamState.for_params(appearance.grid)
    rng = np.random.default_rng(config.seed)
    bmin = np.asarray(bounds[0], dtype=np.float64)
    bmax = np.asarray(bounds[1], dtype=np.float64)
    trace: list[LossReport] = []

    for step in range(config.steps):
        if config.occupancy_refresh > 0 and step % config.occupancy_refresh == 0 and step > 0:
            renderer.coarse_mask = occupancy_mask(grid, renderer.coarse_factor,
                                                  config.occupancy_threshold)
        view_ids, px, py, targets = _sample_batch(rng, cameras, images,
                                                  config.pixels_per_batch)
        origins, dirs = _batch_rays(cameras, view_ids, px, py,
                                    config.subrays_per_pixel, config.seed, step,
                                    np.float32)
        t0, t1 = ray_box_range(origins.astype(np.float64), dirs.astype(np.float64),
                               bmin, bmax)
        w_ent = config.entropy_weight_at(step)
        report, grads = forward_backward(renderer, origins, dirs,
                                         t0.astype(np.float32), t1.astype(np.float32),
                                         targets, config.subrays_per_pixel, w_ent)
        report.step = step
        if not np.isfinite(report.total):
            raise FloatingPointError(
                f"training diverged at step {step}: data={report.data} entropy={report.entropy}")
        lr = cosine_lr(step, config.steps, config.lr_init, config.lr_final)
        logit_opt.update(grads.voxel_ids.astype(np.int64), grads.logit_grads, lr)
        adam_step(appearance.planes, grads.plane_grads, plane_state, lr,
                  config.beta1, config.beta2, config.eps)
        adam_step(appearance.grid, grads.grid_grads, grid_state, lr,
                  config.beta1, config.beta2, config.eps)
        trace.append(report)

    if trace_path is not None:
        write_trace(trace, trace_path)
    return TrainResult(grid, appearance, trace)


def write_trace(trace: list[LossReport], path) -> None:
    """Loss trace CSV: step, data, entropy, binarization_fraction."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "data", "entropy", "binarization_fraction"])
        for r in trace:
            w.writerow([r.step, f"{r.data:.10e}", f"{r.entropy:.10e}",
                        f"{r.binarization:.6f}"])


def read_trace(path) -> list[LossReport]:
    """Read a trace CSV; the total column is not persisted and reads as NaN."""
    out = []
    with open(path) as f:
        for row in csv.DictReader(f):
            out.append(LossReport(int(row["step"]), float(row["data"]),
                                  float(row["entropy"]), float("nan"),
                                  float(row["binarization_fraction"])))
    return out
