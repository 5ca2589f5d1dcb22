"""Image preparation: central crop, rescale/resize, and seeded augmentation.

Images are numpy arrays laid out (H, W, C). Raw files are 8-bit RGB;
after :func:`rescale_and_resize` everything downstream works on float32
values in [0, 1]. All randomness comes from explicit generators, so a
fixed seed reproduces every augmented batch bit-exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "AugmentationConfig",
    "central_crop",
    "resize_bilinear",
    "rescale_and_resize",
    "rotate",
    "shift",
    "adjust_brightness",
    "augment",
    "load_image",
    "save_image",
    "worker_count",
    "map_ordered",
    "TARGET_SIZES",
]

TARGET_SIZES = (224, 256)


@dataclass(frozen=True)
class AugmentationConfig:
    """Randomized transforms applied in order: rotate, shift, flips, brightness."""

    rotation_range_deg: tuple[float, float] = (0.0, 90.0)
    shift_fraction: float = 0.10
    horizontal_flip: bool = True
    vertical_flip: bool = True
    brightness_range: tuple[float, float] = (0.9, 1.2)

    def __post_init__(self):
        lo, hi = self.rotation_range_deg
        if lo > hi:
            raise ValueError(f"rotation range {self.rotation_range_deg} is not ordered")
        if not 0.0 <= self.shift_fraction <= 1.0:
            raise ValueError(f"shift_fraction must be in [0, 1], got {self.shift_fraction}")
        blo, bhi = self.brightness_range
        if blo > bhi or blo < 0:
            raise ValueError(f"brightness range {self.brightness_range} is not ordered")

    @classmethod
    def disabled(cls) -> "AugmentationConfig":
        return cls((0.0, 0.0), 0.0, False, False, (1.0, 1.0))


def central_crop(img: np.ndarray) -> np.ndarray:
    """Keep the central quarter: half the rows and half the columns.

    A 424x424 frame becomes the 212x212 window starting at offset 106,
    i.e. the middle 2x2 cells of a 4x4 grid. Both spatial dims must be
    even so the window is exact.
    """
    if img.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, C) image, got shape {img.shape}")
    h, w = img.shape[0], img.shape[1]
    if h % 2 or w % 2:
        raise ValueError(f"central_crop needs even spatial dims, got {h}x{w}")
    return img[h // 4 : h // 4 + h // 2, w // 4 : w // 4 + w // 2].copy()


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-aligned centers and clamped edges."""
    if img.ndim == 2:
        return resize_bilinear(img[:, :, None], out_h, out_w)[:, :, 0]
    h, w, _ = img.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    if (out_h, out_w) == (h, w):
        return img.astype(np.float32, copy=True)
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    src = img.astype(np.float64, copy=False)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return (top * (1 - fy) + bottom * fy).astype(np.float32)


def rescale_and_resize(img: np.ndarray, target: int, allow_any_target: bool = False) -> np.ndarray:
    """Map 8-bit values onto [0, 1] and resample to a square target size."""
    if target not in TARGET_SIZES and not allow_any_target:
        raise ValueError(
            f"target {target} not in {TARGET_SIZES}; pass allow_any_target=True to override"
        )
    scaled = np.asarray(img, dtype=np.float32) / np.float32(255.0)
    return resize_bilinear(scaled, target, target)


def rotate(img: np.ndarray, angle_deg: float, fill: float = 0.0) -> np.ndarray:
    """Rotate counterclockwise about the image center, bilinear, constant fill."""
    if angle_deg == 0.0:
        return img.copy()
    h, w, c = img.shape
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: sample the source at the un-rotated location
    dy, dx = yy - cy, xx - cx
    sy = cy + cos_t * dy + sin_t * dx
    sx = cx - sin_t * dy + cos_t * dx
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    fy = (sy - y0)[..., None]
    fx = (sx - x0)[..., None]

    def sample(yi, xi):
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = np.full((h, w, c), fill, dtype=np.float64)
        vals[inside] = img[yi[inside], xi[inside]]
        return vals

    out = (
        sample(y0, x0) * (1 - fy) * (1 - fx)
        + sample(y0, x0 + 1) * (1 - fy) * fx
        + sample(y0 + 1, x0) * fy * (1 - fx)
        + sample(y0 + 1, x0 + 1) * fy * fx
    )
    return out.astype(img.dtype, copy=False)


def shift(img: np.ndarray, dy: int, dx: int, fill: float = 0.0) -> np.ndarray:
    """Translate by whole pixels, filling vacated area with a constant."""
    if dy == 0 and dx == 0:
        return img.copy()
    h, w = img.shape[0], img.shape[1]
    out = np.full_like(img, fill)
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    """Multiply and clamp back into [0, 1]."""
    if factor == 1.0:
        return img.copy()
    return np.clip(img * np.float32(factor), 0.0, 1.0)


def augment(img: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply the configured random transforms; input must already be in [0, 1].

    Draw order is fixed (angle, dy, dx, flips, brightness) so a seeded
    generator reproduces the exact same image.
    """
    out = img
    lo, hi = cfg.rotation_range_deg
    angle = float(rng.uniform(lo, hi))
    out = rotate(out, angle)
    h, w = out.shape[0], out.shape[1]
    dy = int(round(rng.uniform(-cfg.shift_fraction, cfg.shift_fraction) * h))
    dx = int(round(rng.uniform(-cfg.shift_fraction, cfg.shift_fraction) * w))
    out = shift(out, dy, dx)
    if cfg.horizontal_flip and rng.random() < 0.5:
        out = out[:, ::-1]
    if cfg.vertical_flip and rng.random() < 0.5:
        out = out[::-1, :]
    factor = float(rng.uniform(*cfg.brightness_range))
    out = adjust_brightness(out, factor)
    return np.ascontiguousarray(out, dtype=np.float32)


def load_image(path: str) -> np.ndarray:
    """Decode a raster file to (H, W, 3) uint8 RGB."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(path: str, img: np.ndarray) -> None:
    """Write a uint8 or [0, 1] float array as a raster file."""
    from PIL import Image

    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


def worker_count() -> int:
    """Data-pipeline parallelism cap from MORPHNET_THREADS (default 1)."""
    raw = os.environ.get("MORPHNET_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MORPHNET_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def map_ordered(fn: Callable, items: Sequence, workers: Optional[int] = None) -> list:
    """Apply ``fn`` to items, possibly in worker threads, preserving order.

    Results are identical to a sequential map for any worker count;
    only wall time changes. Each item must carry its own RNG state if
    ``fn`` is randomized.
    """
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
