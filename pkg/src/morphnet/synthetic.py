"""Procedural 7-class image set for desk-scale training checks.

Small RGB frames, one bright shape per image on a faint noisy sky:

    0 disk, 1 ellipse, 2 bar, 3 two-arm spiral,
    4 edge-on streak, 5 irregular blob, 6 ring

The classes are deliberately easy to tell apart so a tiny network can
overfit a couple hundred of them in under a minute on one CPU core.
"""

from __future__ import annotations

import numpy as np

__all__ = ["CLASS_NAMES", "make_synthetic_set"]

CLASS_NAMES = (
    "disk",
    "ellipse",
    "bar",
    "two-arm spiral",
    "edge-on streak",
    "irregular blob",
    "ring",
)


def _grid(size: int, rng: np.random.Generator):
    cy = (size - 1) / 2.0 + rng.uniform(-1.5, 1.5)
    cx = (size - 1) / 2.0 + rng.uniform(-1.5, 1.5)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return yy - cy, xx - cx


def _rotated(dy, dx, angle):
    c, s = np.cos(angle), np.sin(angle)
    return c * dy - s * dx, s * dy + c * dx


def _disk(size, rng):
    dy, dx = _grid(size, rng)
    r = np.hypot(dy, dx)
    radius = rng.uniform(0.26, 0.34) * size
    return np.clip((radius - r) / 2.0 + 1.0, 0.0, 1.0)


def _ellipse(size, rng):
    dy, dx = _grid(size, rng)
    dy, dx = _rotated(dy, dx, rng.uniform(0, np.pi))
    a = rng.uniform(0.34, 0.42) * size
    b = rng.uniform(0.12, 0.16) * size
    q = np.hypot(dx / a, dy / b)
    return np.clip((1.0 - q) * 4.0 + 0.5, 0.0, 1.0)


def _bar(size, rng):
    dy, dx = _grid(size, rng)
    dy, dx = _rotated(dy, dx, rng.uniform(0, np.pi))
    half_len = rng.uniform(0.32, 0.40) * size
    half_wid = rng.uniform(0.055, 0.08) * size
    bar = (np.abs(dx) < half_len) & (np.abs(dy) < half_wid)
    bulge = np.hypot(dy, dx) < 0.13 * size
    return np.where(bar | bulge, 1.0, 0.0)


def _spiral(size, rng):
    dy, dx = _grid(size, rng)
    r = np.hypot(dy, dx) + 1e-9
    theta = np.arctan2(dy, dx)
    pitch = rng.uniform(0.55, 0.75)
    phase = rng.uniform(0, 2 * np.pi)
    width = rng.uniform(0.30, 0.38)
    arm_angle = theta - r * pitch * (2 * np.pi / size) * 4.0 - phase
    # two arms: the angular offset pattern repeats every pi
    d = np.abs(((arm_angle + np.pi / 2) % np.pi) - np.pi / 2)
    arms = np.exp(-((d / width) ** 2)) * (r < 0.45 * size)
    bulge = np.clip((0.10 * size - r) / 1.5 + 1.0, 0.0, 1.0)
    return np.clip(arms + bulge, 0.0, 1.0)


def _streak(size, rng):
    dy, dx = _grid(size, rng)
    dy, dx = _rotated(dy, dx, rng.uniform(0, np.pi))
    sigma = rng.uniform(0.028, 0.045) * size
    profile = np.exp(-((dy / sigma) ** 2))
    return profile * (np.abs(dx) < 0.46 * size)


def _blob(size, rng):
    dy, dx = _grid(size, rng)
    out = np.zeros((size, size))
    for _ in range(int(rng.integers(4, 8))):
        oy = rng.uniform(-0.22, 0.22) * size
        ox = rng.uniform(-0.22, 0.22) * size
        s = rng.uniform(0.05, 0.11) * size
        out += np.exp(-(((dy - oy) ** 2 + (dx - ox) ** 2) / (2 * s * s)))
    return np.clip(out / out.max(), 0.0, 1.0)


def _ring(size, rng):
    dy, dx = _grid(size, rng)
    r = np.hypot(dy, dx)
    r0 = rng.uniform(0.24, 0.32) * size
    w = rng.uniform(0.045, 0.07) * size
    return np.exp(-(((r - r0) / w) ** 2))


_MAKERS = (_disk, _ellipse, _bar, _spiral, _streak, _blob, _ring)


def make_synthetic_set(
    n: int = 200, size: int = 32, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Balanced labeled set: (images (n, size, size, 3), labels (n,), ids)."""
    if n < 7:
        raise ValueError(f"need at least 7 images for 7 classes, got {n}")
    if size < 16:
        raise ValueError(f"size must be at least 16, got {size}")
    root = np.random.SeedSequence(seed)
    images = np.empty((n, size, size, 3), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    ids = [f"syn{i:05d}" for i in range(n)]
    for i, child in enumerate(root.spawn(n)):
        rng = np.random.default_rng(child)
        label = i % len(_MAKERS)
        mask = _MAKERS[label](size, rng)
        intensity = rng.uniform(0.75, 1.0)
        color = intensity * rng.uniform(0.9, 1.0, size=3)
        frame = mask[:, :, None] * color[None, None, :]
        frame += rng.normal(0.04, 0.012, size=frame.shape)
        images[i] = np.clip(frame, 0.0, 1.0)
        labels[i] = label
    return images, labels, ids
