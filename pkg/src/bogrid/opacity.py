"""The opacity grid: a lattice of logits whose logistic is per-voxel alpha.

Dense storage up to 512^3; above that a lazily allocated map of 16^3 blocks
where unallocated blocks read as logit -10 (alpha ~ 4.5e-5, effectively
empty free space).

Lattice convention used throughout the package: dense lattice arrays are
indexed [z, y, x] so that the C-order flat index equals the x-fastest linear
voxel id (iz * R + iy) * R + ix.  Voxel index triples in APIs are always
(ix, iy, iz).
"""

from __future__ import annotations

import struct

import numpy as np

from .contraction import ContractionConfig

CHECKPOINT_MAGIC = b"BOGR"
CHECKPOINT_VERSION = 1
SPARSE_BLOCK = 16
SPARSE_THRESHOLD = 512
EMPTY_LOGIT = -10.0


def logistic(x):
    """Numerically stable sigmoid, clamped to the open interval (0, 1).

    The clamp only replaces values float rounding saturated to exactly 0 or
    1, keeping the alpha-in-(0,1) invariant without touching gradients in
    the training range.
    """
    x = np.asarray(x)
    dt = x.dtype if x.dtype.kind == "f" else np.dtype(np.float64)
    out = np.empty_like(x, dtype=dt)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    one = dt.type(1.0)
    return np.clip(out, np.nextafter(dt.type(0.0), one), np.nextafter(one, dt.type(0.0)))


def logistic_grad(alpha):
    """d alpha / d logit evaluated at alpha."""
    return alpha * (1.0 - alpha)


class OpacityGrid:
    """Resolution-R lattice of opacity logits over the contracted domain."""

    def __init__(self, config: ContractionConfig, dtype=np.float32, init_logit: float = EMPTY_LOGIT,
                 sparse: bool | None = None):
        self.config = config
        self.resolution = config.grid_resolution
        self.dtype = np.dtype(dtype)
        self.sparse = (self.resolution > SPARSE_THRESHOLD) if sparse is None else sparse
        self.init_logit = float(init_logit)
        if self.sparse:
            if self.resolution % SPARSE_BLOCK != 0:
                raise ValueError("sparse grids require resolution divisible by 16")
            self._blocks: dict[int, np.ndarray] = {}
        else:
            r = self.resolution
            # [z, y, x] layout; see module docstring
            self.logits = np.full((r, r, r), init_logit, dtype=self.dtype)

    # -- indexing ---------------------------------------------------------

    def _check_indices(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx)
        if idx.shape[-1] != 3:
            raise ValueError("voxel indices must have trailing dimension 3")
        if np.any(idx < 0) or np.any(idx >= self.resolution):
            raise IndexError("voxel index out of range")
        return idx

    def _block_key(self, idx: np.ndarray) -> np.ndarray:
        nb = self.resolution // SPARSE_BLOCK
        b = idx // SPARSE_BLOCK
        return (b[..., 2] * nb + b[..., 1]) * nb + b[..., 0]

    def logits_at(self, idx: np.ndarray) -> np.ndarray:
        """Logit values at (..., 3) voxel index triples (ix, iy, iz)."""
        idx = self._check_indices(idx)
        if not self.sparse:
            return self.logits[idx[..., 2], idx[..., 1], idx[..., 0]]
        keys = self._block_key(idx)
        local = idx % SPARSE_BLOCK
        out = np.full(idx.shape[:-1], self.init_logit, dtype=self.dtype)
        flat_keys = keys.reshape(-1)
        flat_local = local.reshape(-1, 3)
        flat_out = out.reshape(-1)
        for key in np.unique(flat_keys):
            blk = self._blocks.get(int(key))
            if blk is None:
                continue
            sel = flat_keys == key
            li = flat_local[sel]
            flat_out[sel] = blk[li[:, 2], li[:, 1], li[:, 0]]
        return out

    def set_logits(self, idx: np.ndarray, values: np.ndarray) -> None:
        idx = self._check_indices(idx)
        values = np.broadcast_to(np.asarray(values, dtype=self.dtype), idx.shape[:-1])
        if not self.sparse:
            self.logits[idx[..., 2], idx[..., 1], idx[..., 0]] = values
            return
        keys = self._block_key(idx).reshape(-1)
        local = (idx % SPARSE_BLOCK).reshape(-1, 3)
        flat_vals = values.reshape(-1)
        for key in np.unique(keys):
            blk = self._blocks.get(int(key))
            if blk is None:
                blk = np.full((SPARSE_BLOCK,) * 3, self.init_logit, dtype=self.dtype)
                self._blocks[int(key)] = blk
            sel = keys == key
            li = local[sel]
            blk[li[:, 2], li[:, 1], li[:, 0]] = flat_vals[sel]

    def alphas_at(self, idx: np.ndarray) -> np.ndarray:
        return logistic(self.logits_at(idx).astype(np.float64))

    def dense_logits(self) -> np.ndarray:
        """Materialize the full [z, y, x] lattice (sparse grids included)."""
        if not self.sparse:
            return self.logits
        r = self.resolution
        out = np.full((r, r, r), self.init_logit, dtype=self.dtype)
        nb = r // SPARSE_BLOCK
        for key, blk in self._blocks.items():
            bx = key % nb
            by = (key // nb) % nb
            bz = key // (nb * nb)
            out[bz * SPARSE_BLOCK:(bz + 1) * SPARSE_BLOCK,
                by * SPARSE_BLOCK:(by + 1) * SPARSE_BLOCK,
                bx * SPARSE_BLOCK:(bx + 1) * SPARSE_BLOCK] = blk
        return out

    # -- checkpoint format ------------------------------------------------

    def save(self, path) -> None:
        """Write the little-endian binary checkpoint (magic BOGR)."""
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<IIB", CHECKPOINT_VERSION, self.resolution, 1 if self.sparse else 0))
            if not self.sparse:
                # x-fastest on disk == C order of the [z, y, x] lattice
                f.write(np.ascontiguousarray(self.logits.astype("<f4")).tobytes())
            else:
                for key in sorted(self._blocks):
                    f.write(struct.pack("<I", key))
                    f.write(np.ascontiguousarray(self._blocks[key].astype("<f4")).tobytes())

    @classmethod
    def load(cls, path, config: ContractionConfig | None = None, dtype=np.float32) -> "OpacityGrid":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"bad grid checkpoint magic: {magic!r}")
            version, resolution, flag = struct.unpack("<IIB", f.read(9))
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported grid checkpoint version {version}")
            if config is None:
                config = ContractionConfig(grid_resolution=resolution)
            elif config.grid_resolution != resolution:
                raise ValueError("checkpoint resolution does not match config")
            grid = cls(config, dtype=dtype, sparse=bool(flag))
            if not flag:
                raw = np.frombuffer(f.read(4 * resolution ** 3), dtype="<f4")
                grid.logits = raw.reshape((resolution,) * 3).astype(dtype)
            else:
                rec = 4 + 4 * SPARSE_BLOCK ** 3
                while True:
                    chunk = f.read(rec)
                    if not chunk:
                        break
                    if len(chunk) != rec:
                        raise ValueError("truncated sparse grid checkpoint")
                    (key,) = struct.unpack("<I", chunk[:4])
                    blk = np.frombuffer(chunk[4:], dtype="<f4")
                    grid._blocks[key] = blk.reshape((SPARSE_BLOCK,) * 3).astype(dtype)
        return grid


def opacity_at(grid: OpacityGrid, idx: np.ndarray) -> np.ndarray:
    """Alpha at voxel indices: logistic(logit), in the open interval (0, 1)."""
    return grid.alphas_at(idx)


def occupancy_mask(grid: OpacityGrid, factor: int = 8, threshold: float = 2e-3) -> np.ndarray:
    """Coarse occupancy proposal: max-pooled alpha mask at resolution R/factor.

    Cells whose max alpha is below the threshold can be skipped during
    traversal; the mask is a conservative superset of occupied space.
    """
    r = grid.resolution
    coarse = r // factor
    lat = grid.dense_logits().reshape(coarse, factor, coarse, factor, coarse, factor)
    peak = lat.max(axis=(1, 3, 5))
    thr_logit = np.log(threshold / (1.0 - threshold))
    return (peak > thr_logit).astype(np.uint8)
