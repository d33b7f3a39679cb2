"""Finite-difference validation of the analytic training gradients.

The oracle side only ever runs the forward pass; the analytic side is the
production backward.  Everything runs at float64 with the weight cutoff
disabled so the comparison is exact up to the difference quotient error.
"""

import numpy as np
import pytest

from bogrid.appearance import AppearanceField
from bogrid.camera import Camera, look_at, subpixel_offsets
from bogrid.contraction import ContractionConfig
from bogrid.losses import loss_data, loss_entropy
from bogrid.opacity import OpacityGrid
from bogrid.training import forward_backward
from bogrid.volume_render import VolumeRenderer, ray_box_range

N_SUB = 4
W_ENT = 0.05
BOUNDS = (np.array([-1.3, -1.3, -1.3]), np.array([1.3, 1.3, 1.3]))


def build_problem(seed):
    rng = np.random.default_rng(seed)
    cfg = ContractionConfig(pre_scale=1.0, grid_resolution=8)
    grid = OpacityGrid(cfg, dtype=np.float64)
    grid.logits[:] = rng.normal(scale=1.5, size=grid.logits.shape)
    field = AppearanceField(plane_resolution=8, grid_resolution=4, pre_scale=1.0,
                            dtype=np.float64)
    field.planes[:] = rng.normal(scale=0.3, size=field.planes.shape)
    field.grid[:] = rng.normal(scale=0.3, size=field.grid.shape)
    # keep lobe color logits low so the [0, 1] clamp stays inactive
    field.planes[..., [7, 14, 21]] -= 1.0
    field.grid[..., [7, 14, 21]] -= 1.0
    renderer = VolumeRenderer(grid, field, background=(0.3, 0.6, 0.9),
                              weight_cutoff=0.0)
    rot = look_at([2.2, 0.4, 0.6], [0.0, 0.0, 0.0])
    cam = Camera(5.0, 5.0, 2.0, 2.0, rot, [2.2, 0.4, 0.6], 4, 4)
    jj, ii = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    keys = (jj * 4 + ii).astype(np.uint64).reshape(-1)
    ox, oy = subpixel_offsets(N_SUB, 0, keys)
    px = (ii.reshape(-1, 1) + ox).reshape(-1)
    py = (jj.reshape(-1, 1) + oy).reshape(-1)
    origins, dirs = cam.rays_through(px, py)
    t0, t1 = ray_box_range(origins, dirs, *BOUNDS)
    targets = rng.uniform(size=(16, 3))
    return renderer, origins, dirs, t0, t1, targets


def total_loss(renderer, origins, dirs, t0, t1, targets):
    tape = renderer.forward(origins, dirs, t0, t1)
    pixel = tape.ray_colors.reshape(len(targets), N_SUB, 3).mean(axis=1)
    return loss_data(pixel, targets) + W_ENT * loss_entropy(tape.alphas)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


@pytest.mark.parametrize("seed", [0, 1])
def test_logit_gradients_match_central_differences(seed):
    renderer, origins, dirs, t0, t1, targets = build_problem(seed)
    report, grads = forward_backward(renderer, origins, dirs, t0, t1, targets,
                                     N_SUB, W_ENT)
    analytic = np.zeros(8 ** 3)
    analytic[grads.voxel_ids] = grads.logit_grads
    logits = renderer.grid.logits
    flat = logits.reshape(-1)
    h = 1e-4
    worst = 0.0
    for lin in range(8 ** 3):
        keep = flat[lin]
        flat[lin] = keep + h
        lp = total_loss(renderer, origins, dirs, t0, t1, targets)
        flat[lin] = keep - h
        lm = total_loss(renderer, origins, dirs, t0, t1, targets)
        flat[lin] = keep
        num = (lp - lm) / (2 * h)
        if num == 0.0 and analytic[lin] == 0.0:
            continue  # untouched voxel: zero on both routes
        worst = max(worst, rel_err(analytic[lin], num))
    assert worst < 1e-4, f"max relative error {worst:.3e}"


@pytest.mark.parametrize("seed", [0])
def test_appearance_gradients_match_central_differences(seed):
    renderer, origins, dirs, t0, t1, targets = build_problem(seed)
    report, grads = forward_backward(renderer, origins, dirs, t0, t1, targets,
                                     N_SUB, W_ENT)
    rng = np.random.default_rng(100 + seed)
    h = 1e-4
    worst = 0.0
    checked = 0
    for arr, g in ((renderer.field.planes, grads.plane_grads),
                   (renderer.field.grid, grads.grid_grads)):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        touched = np.where(gflat != 0)[0]
        pick = rng.choice(touched, size=min(40, len(touched)), replace=False)
        for lin in pick:
            keep = flat[lin]
            flat[lin] = keep + h
            lp = total_loss(renderer, origins, dirs, t0, t1, targets)
            flat[lin] = keep - h
            lm = total_loss(renderer, origins, dirs, t0, t1, targets)
            flat[lin] = keep
            num = (lp - lm) / (2 * h)
            worst = max(worst, rel_err(gflat[lin], num))
            checked += 1
    assert checked >= 40
    assert worst < 1e-4, f"max relative error {worst:.3e}"


def test_zero_entropy_perfect_reconstruction_zero_grads():
    renderer, origins, dirs, t0, t1, _ = build_problem(3)
    tape = renderer.forward(origins, dirs, t0, t1)
    targets = tape.ray_colors.reshape(16, N_SUB, 3).mean(axis=1)
    report, grads = forward_backward(renderer, origins, dirs, t0, t1, targets,
                                     N_SUB, 0.0)
    assert report.data == 0.0
    np.testing.assert_allclose(grads.logit_grads, 0.0, atol=1e-18)
    np.testing.assert_allclose(grads.plane_grads, 0.0, atol=1e-18)


def test_single_voxel_gradient_analytic():
    # one ray, one voxel: dC/dalpha = c - background exactly
    cfg = ContractionConfig(pre_scale=1.0, grid_resolution=8)
    grid = OpacityGrid(cfg, dtype=np.float64, init_logit=-40.0)
    grid.set_logits(np.array([4, 4, 4]), 0.0)  # alpha 0.5 voxel at center
    field = AppearanceField(plane_resolution=8, grid_resolution=4, pre_scale=1.0,
                            dtype=np.float64)
    bg = np.array([0.1, 0.2, 0.3])
    renderer = VolumeRenderer(grid, field, background=bg, weight_cutoff=0.0)
    origins = np.array([[2.0, 0.1, 0.1]])
    dirs = np.array([[-1.0, 0.0, 0.0]])
    t0 = np.array([0.5])
    t1 = np.array([3.5])
    c_vox = np.full(3, 0.5)  # zero features decode to mid gray
    # only the center voxel has non-negligible alpha; target black makes
    # dL/dC = 2 C / 3 and dC/dalpha = c - bg
    targets = np.zeros((1, 3))
    report, grads = forward_backward(renderer, origins, dirs, t0, t1, targets, 1, 0.0)
    expected_color = 0.5 * c_vox + 0.5 * bg
    dl_dc = 2.0 * expected_color / 3.0
    expected_dlogit = float((dl_dc * (c_vox - bg)).sum()) * 0.5 * 0.5  # alpha (1-alpha)
    lin = (4 * 8 + 4) * 8 + 4
    got = grads.logit_grads[list(grads.voxel_ids).index(lin)]
    assert got == pytest.approx(expected_dlogit, rel=1e-9)
