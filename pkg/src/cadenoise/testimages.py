"""Deterministic synthetic test images with natural-image-like statistics.

Lena and Baboon cannot be redistributed, so experiments default to a scene
built from a smooth illumination gradient, a handful of flat and shaded
objects with sharp edges, and band-limited texture. The scene is defined in
continuous coordinates, so every size renders the same content.
"""

from __future__ import annotations

import numpy as np

from .image_core import GrayImage


def _lowpass_noise(rng: np.random.Generator, n: int, cutoff: float) -> np.ndarray:
    white = rng.standard_normal((n, n))
    fy = np.fft.fftfreq(n)[:, None]
    fx = np.fft.fftfreq(n)[None, :]
    gain = np.exp(-(fx**2 + fy**2) / (2 * cutoff**2))
    field = np.real(np.fft.ifft2(np.fft.fft2(white) * gain))
    return field / field.std()


def natural_image(size: int = 128, seed: int = 2024) -> GrayImage:
    """Square ``size x size`` scene; same ``seed`` gives the same image."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    img = 70 + 90 * x + 40 * y + 18 * np.sin(2 * np.pi * (1.3 * x + 0.7 * y))

    # disks: (cx, cy, radius, level, shading)
    for cx, cy, r, level, shade in (
        (0.30, 0.35, 0.18, 200, 30),
        (0.72, 0.28, 0.12, 45, 15),
        (0.62, 0.72, 0.20, 150, -40),
        (0.18, 0.80, 0.09, 235, 0),
    ):
        d = np.hypot(x - cx, y - cy)
        inside = d < r
        img[inside] = level + shade * (d[inside] / r)
    # rectangles: (x0, y0, x1, y1, level)
    for x0, y0, x1, y1, level in ((0.05, 0.05, 0.22, 0.15, 30), (0.80, 0.55, 0.95, 0.95, 215)):
        img[(x >= x0) & (x < x1) & (y >= y0) & (y < y1)] = level
    # stripes inside one region give fine high-contrast detail
    band = (x > 0.40) & (x < 0.55) & (y > 0.05) & (y < 0.45)
    img[band] += 35 * np.sign(np.sin(2 * np.pi * 12 * (x[band] + y[band])))

    coarse = _lowpass_noise(rng, size, cutoff=0.02)
    fine = _lowpass_noise(rng, size, cutoff=0.15)
    img = img + 12 * coarse + 9 * fine
    return GrayImage(np.clip(np.rint(img), 3, 252).astype(np.uint8))
