"""Synthetic test images: smooth colour fields with a faint texture.

Every pixel neighbourhood is distinct, so true neighbours score far better
than anything else under MGC. ``flat_box`` paints a uniform rectangle to
create the degenerate patches that no metric can place.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import rng_for


def smooth_image(
    height: int,
    width: int,
    seed: int = 0,
    texture: float = 6.0,
    flat_box: tuple[int, int, int, int] | None = None,
) -> np.ndarray:
    """``height x width x 3`` uint8 image from seeded low-frequency colour fields."""
    rng = rng_for(seed, "synthetic")
    y, x = np.mgrid[0:height, 0:width].astype(float)
    y /= max(height, width)
    x /= max(height, width)
    out = np.empty((height, width, 3))
    for ch in range(3):
        field = rng.uniform(-1, 1) * x + rng.uniform(-1, 1) * y
        for _ in range(4):
            fx, fy = rng.uniform(0.3, 2.2, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            field += rng.uniform(0.2, 0.6) * np.cos(2 * np.pi * (fx * x + fy * y) + phase)
        field -= field.min()
        field /= max(field.max(), 1e-12)
        noise = gaussian_filter(rng.standard_normal((height, width)), sigma=2.5)
        noise /= max(noise.std(), 1e-12)
        out[:, :, ch] = 35 + 185 * field + texture * noise
    if flat_box is not None:
        r0, r1, c0, c1 = flat_box
        out[r0:r1, c0:c1] = out[r0:r1, c0:c1].mean(axis=(0, 1))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def corpus(count: int = 20, s: int = 28):
    """Seeded well-posed images with grids between 4x4 and 8x8.

    Yields ``(seed, image)``; image ``k`` has ``4 + k % 5`` rows and
    ``4 + 3k % 5`` columns of ``s x s`` patches.
    """
    for k in range(count):
        rows, cols = 4 + k % 5, 4 + (3 * k) % 5
        yield k, smooth_image(rows * s, cols * s, seed=k)
