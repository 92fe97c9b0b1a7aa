"""Fidelity metrics between a reference image and an approximation."""

from __future__ import annotations

import math

import numpy as np

from .image_core import GrayImage

PEAK = 255.0


def _check_dims(ref: GrayImage, approx: GrayImage) -> None:
    if ref.shape != approx.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {approx.shape}")


def mse(ref: GrayImage, approx: GrayImage) -> float:
    _check_dims(ref, approx)
    diff = ref.pixels.astype(np.int64) - approx.pixels.astype(np.int64)
    return float(np.sum(diff * diff, dtype=np.float64) / diff.size)


def psnr_from_mse(err: float) -> float:
    """``10 log10(255^2 / mse)``; ``inf`` when the error is zero."""
    if err < 0:
        raise ValueError("mse must be nonnegative")
    if err == 0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / err)


def psnr(ref: GrayImage, approx: GrayImage) -> float:
    return psnr_from_mse(mse(ref, approx))


def format_psnr(value: float) -> str:
    """CSV rendering: four decimals, or the literal ``inf``."""
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"
