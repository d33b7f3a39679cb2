"""Pinhole cameras, look-at rigs, and stratified sub-pixel ray generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rnghash import hash_uniform


@dataclass
class Camera:
    """Pinhole camera: intrinsics plus a world-from-camera rigid pose.

    Camera space is OpenCV-style: +x right, +y down, +z forward.  `rotation`
    maps camera-space vectors to world space; `origin` is the camera center
    in world coordinates.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    origin: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.2e})")

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def up(self) -> np.ndarray:
        return -self.rotation[:, 1]

    @property
    def left(self) -> np.ndarray:
        return -self.rotation[:, 0]

    def rays_through(self, px: np.ndarray, py: np.ndarray):
        """World rays through pixel-plane points (px, py) in pixel units."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        d = np.stack([(px - self.cx) / self.fx, (py - self.cy) / self.fy,
                      np.ones_like(px)], axis=-1)
        d = d @ self.rotation.T
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(self.origin, d.shape)
        return o, d

    def project(self, points: np.ndarray):
        """World points (..., 3) -> (px, py, camera-space depth z)."""
        rel = np.asarray(points, dtype=np.float64) - self.origin
        cam = rel @ self.rotation  # == rotation.T applied to rows
        z = cam[..., 2]
        safe = np.where(z != 0, z, 1.0)
        px = self.fx * cam[..., 0] / safe + self.cx
        py = self.fy * cam[..., 1] / safe + self.cy
        return px, py, z

    def with_pose(self, rotation: np.ndarray, origin: np.ndarray) -> "Camera":
        return Camera(self.fx, self.fy, self.cx, self.cy, rotation, origin,
                      self.width, self.height)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "rotation": self.rotation.tolist(), "origin": self.origin.tolist(),
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], np.array(d["rotation"]),
                   np.array(d["origin"]), d["width"], d["height"])


def look_at(origin, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-from-camera rotation for a camera at origin looking at target."""
    origin = np.asarray(origin, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - origin
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    n = np.linalg.norm(right)
    if n < 1e-9:  # forward parallel to up; pick any perpendicular
        upv = np.array([0.0, 1.0, 0.0]) if abs(fwd[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, upv)
        n = np.linalg.norm(right)
    right /= n
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


def orbit_rig(count: int, radius: float, target=(0.0, 0.0, 0.0), height: float = 0.45,
              fov_deg: float = 55.0, width: int = 128, height_px: int = 128,
              phase: float = 0.0) -> list[Camera]:
    """Ring of cameras orbiting a target, all sharing one intrinsic block."""
    target = np.asarray(target, dtype=np.float64)
    focal = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
    cams = []
    for k in range(count):
        a = phase + 2.0 * np.pi * k / count
        origin = target + np.array([radius * np.cos(a), radius * np.sin(a), height])
        rot = look_at(origin, target)
        cams.append(Camera(focal, focal, width / 2.0, height_px / 2.0, rot, origin,
                           width, height_px))
    return cams


def subpixel_offsets(n: int, seed: int, pixel_key: np.ndarray, jitter: bool = True):
    """Stratified jittered offsets in the unit pixel square.

    n must be a perfect square; offsets are one per cell of the sqrt(n) x
    sqrt(n) stratification.  Streams are keyed by (seed, pixel_key, cell) so
    results do not depend on batching or thread count.
    """
    m = int(round(np.sqrt(n)))
    if m * m != n:
        raise ValueError(f"sub-ray count must be a perfect square, got {n}")
    pixel_key = np.asarray(pixel_key, dtype=np.uint64)
    cells = np.arange(n, dtype=np.uint64)
    ax, ay = cells % m, cells // m
    if jitter:
        ux = hash_uniform(seed, pixel_key[..., None], cells, 0)
        uy = hash_uniform(seed, pixel_key[..., None], cells, 1)
    else:
        ux = uy = np.full(pixel_key.shape + (n,), 0.5)
    ox = (ax + ux) / m
    oy = (ay + uy) / m
    return ox, oy


def generate_subrays(camera: Camera, pixel: tuple[int, int], n: int = 16,
                     seed: int = 0, jitter: bool = True):
    """n stratified sub-rays through one pixel's footprint."""
    i, j = pixel
    if not (0 <= i < camera.width and 0 <= j < camera.height):
        raise ValueError(f"pixel {pixel} outside image bounds")
    key = np.uint64(j * camera.width + i)
    ox, oy = subpixel_offsets(n, seed, key, jitter)
    return camera.rays_through(i + ox, j + oy)
