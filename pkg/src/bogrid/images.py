"""Image I/O: 8-bit PNG plus raw float32 planar with a JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def from_u8(u8: np.ndarray) -> np.ndarray:
    return u8.astype(np.float32) / 255.0


def write_png(path, img: np.ndarray) -> None:
    """img: (h, w, 3) or (h, w) floats in [0, 1], or uint8 already."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = to_u8(arr)
    Image.fromarray(arr).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    return from_u8(np.asarray(Image.open(path)))


def write_raw(path, img: np.ndarray) -> None:
    """Planar float32 dump with width/height/channels in a .json sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(np.asarray(img, dtype="<f4"))
    h, w = arr.shape[0], arr.shape[1]
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    planar = arr if arr.ndim == 2 else np.moveaxis(arr, 2, 0)
    path.write_bytes(np.ascontiguousarray(planar).tobytes())
    sidecar = {"width": int(w), "height": int(h), "channels": int(channels),
               "dtype": "float32", "layout": "planar"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def read_raw(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    c, h, w = meta["channels"], meta["height"], meta["width"]
    if c == 1:
        return raw.reshape(h, w).copy()
    return np.moveaxis(raw.reshape(c, h, w), 0, 2).copy()
