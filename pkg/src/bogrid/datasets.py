"""Synthetic dataset generation with analytic ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Camera
from .images import read_raw, write_png, write_raw
from .rnghash import hash_uniform
from .scenes import SceneSpec

GT_SEED = 0x6774  # jitter stream for ground-truth supersampling


@dataclass
class DatasetManifest:
    """Cameras, image paths, and the scene spec that generated them."""

    scene: SceneSpec
    train_cameras: list[Camera]
    train_images: list[str]
    eval_cameras: list[Camera]
    eval_images: list[str]
    width: int
    height: int
    background: tuple
    gt_spp: int
    root: Path

    def load_images(self, split: str = "train") -> np.ndarray:
        paths = self.train_images if split == "train" else self.eval_images
        return np.stack([read_raw(self.root / p) for p in paths])

    def cameras(self, split: str = "train") -> list[Camera]:
        return self.train_cameras if split == "train" else self.eval_cameras

    def bounds(self):
        return self.scene.bounds()

    def save(self, path) -> None:
        d = {
            "scene": self.scene.to_dict(),
            "train": [{"camera": c.to_dict(), "image": p}
                      for c, p in zip(self.train_cameras, self.train_images)],
            "eval": [{"camera": c.to_dict(), "image": p}
                     for c, p in zip(self.eval_cameras, self.eval_images)],
            "width": self.width, "height": self.height,
            "background": list(self.background), "gt_spp": self.gt_spp,
        }
        Path(path).write_text(json.dumps(d, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        scene = SceneSpec.from_dict(d["scene"])
        manifest = cls(
            scene=scene,
            train_cameras=[Camera.from_dict(e["camera"]) for e in d["train"]],
            train_images=[e["image"] for e in d["train"]],
            eval_cameras=[Camera.from_dict(e["camera"]) for e in d["eval"]],
            eval_images=[e["image"] for e in d["eval"]],
            width=d["width"], height=d["height"],
            background=tuple(d["background"]), gt_spp=d["gt_spp"],
            root=path.parent,
        )
        for p in manifest.train_images + manifest.eval_images:
            if not (path.parent / p).exists():
                raise FileNotFoundError(f"dataset references missing image {p}")
        return manifest


def render_ground_truth(scene: SceneSpec, camera: Camera, spp: int = 64,
                        view_key: int = 0) -> np.ndarray:
    """Analytic ray trace at spp stratified samples per pixel."""
    w, h = camera.width, camera.height
    m = int(round(np.sqrt(spp)))
    if m * m != spp:
        raise ValueError("gt_spp must be a perfect square")
    jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    keys = ((np.uint64(view_key) << np.uint64(40))
            + (jj.astype(np.uint64) * np.uint64(w) + ii.astype(np.uint64)))
    cells = np.arange(spp, dtype=np.uint64)
    ox = (cells % m + hash_uniform(GT_SEED, keys[..., None], cells, 0)) / m
    oy = (cells // m + hash_uniform(GT_SEED, keys[..., None], cells, 1)) / m
    img = np.zeros((h, w, 3), dtype=np.float64)
    # trace one sub-sample layer at a time to bound memory
    for s in range(spp):
        o, d = camera.rays_through(ii + ox[..., s], jj + oy[..., s])
        img += scene.shade(o.reshape(-1, 3), d.reshape(-1, 3)).reshape(h, w, 3)
    return (img / spp).astype(np.float32)


def synth_dataset(scene: SceneSpec, out_dir, train_views: int = 32, eval_views: int = 4,
                  width: int = 128, height: int = 128, gt_spp: int = 64,
                  orbit_radius: float = 1.2, orbit_height: float = 0.45,
                  fov_deg: float = 55.0) -> DatasetManifest:
    """Ray-trace the analytic scene from an orbit rig and write the dataset.

    Writes PNG (for inspection) and raw float32 (the training source) per
    view, plus manifest.json.  Eval cameras sit between training cameras on
    a slightly different orbit so they are genuinely held out.
    """
    from .camera import orbit_rig

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cams = orbit_rig(train_views, orbit_radius, height=orbit_height,
                           fov_deg=fov_deg, width=width, height_px=height)
    eval_cams = orbit_rig(eval_views, orbit_radius * 1.05, height=orbit_height * 0.8,
                          fov_deg=fov_deg, width=width, height_px=height,
                          phase=np.pi / max(1, train_views))
    train_paths, eval_paths = [], []
    for split, cams, paths in (("train", train_cams, train_paths),
                               ("eval", eval_cams, eval_paths)):
        for k, cam in enumerate(cams):
            img = render_ground_truth(scene, cam, gt_spp,
                                      view_key=k + (10_000 if split == "eval" else 0))
            stem = f"{split}_{k:03d}"
            write_png(out_dir / f"{stem}.png", img)
            write_raw(out_dir / f"{stem}.raw", img)
            paths.append(f"{stem}.raw")
    manifest = DatasetManifest(scene, train_cams, train_paths, eval_cams, eval_paths,
                               width, height, tuple(scene.background), gt_spp, out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest
