"""Threshold decomposition of grayscale images into stacks of binary planes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ca_engine import BinaryImage
from .image_core import GrayImage


class EmptyThresholdSetError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdSet:
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        vals = tuple(int(v) for v in self.values)
        if not vals:
            raise EmptyThresholdSetError("threshold set must be nonempty")
        if any(v < 0 or v > 255 for v in vals):
            raise ValueError("thresholds must lie in [0, 255]")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class BinaryStack:
    """One binary plane per threshold, stored as a ``(t, height, width)`` bool array."""

    thresholds: ThresholdSet
    planes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.planes, dtype=bool)
        if arr.ndim != 3:
            raise ValueError(f"planes must be a 3-D array, got shape {arr.shape}")
        if arr.shape[0] != len(self.thresholds):
            raise ValueError(
                f"{arr.shape[0]} planes for {len(self.thresholds)} thresholds"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "planes", arr)

    def __len__(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]

    def plane(self, index: int) -> BinaryImage:
        return BinaryImage(self.planes[index])

    def with_planes(self, planes: np.ndarray) -> BinaryStack:
        return BinaryStack(self.thresholds, planes)


def decompose(img: GrayImage, thresholds: ThresholdSet) -> BinaryStack:
    k = thresholds.as_array()[:, None, None]
    return BinaryStack(thresholds, img.pixels[None, :, :] >= k)


def thresholds_full(include_zero: bool = False) -> ThresholdSet:
    return ThresholdSet(tuple(range(0 if include_zero else 1, 256)))


def thresholds_stride(step: int) -> ThresholdSet:
    if not 1 <= step <= 255:
        raise ValueError(f"stride must be in [1, 255], got {step}")
    return ThresholdSet(tuple(range(1, 256, step)))


def thresholds_bitplane() -> ThresholdSet:
    return ThresholdSet(tuple(1 << b for b in range(8)))


def otsu_threshold(values: np.ndarray) -> int | None:
    """Otsu split for the rule ``pixel >= k``; ``None`` for a constant input.

    Every candidate ``k`` in 0..255 is scored by the between-class variance of
    ``{< k}`` and ``{>= k}``; ties go to the smallest ``k``.
    """
    hist = np.bincount(np.asarray(values, dtype=np.int64).ravel(), minlength=256)[:256]
    total = hist.sum()
    if total == 0 or np.count_nonzero(hist) < 2:
        return None
    levels = np.arange(256, dtype=np.float64)
    # weight/mean of the low class {< k} for k = 0..255
    w_low = np.concatenate(([0.0], np.cumsum(hist)[:-1])) / total
    m_low_sum = np.concatenate(([0.0], np.cumsum(hist * levels)[:-1])) / total
    mu_total = (hist * levels).sum() / total
    w_high = 1.0 - w_low
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * w_low - m_low_sum) ** 2 / (w_low * w_high)
    between[(w_low == 0) | (w_high == 0)] = 0.0
    best = between.max()
    # relative slack so float noise does not break exact ties
    return int(np.flatnonzero(between >= best * (1 - 1e-12))[0])


def _patch_bounds(n: int, g: int) -> list[tuple[int, int]]:
    size = n // g
    return [(i * size, n if i == g - 1 else (i + 1) * size) for i in range(g)]


def thresholds_otsu_patches(img: GrayImage, grid: int) -> ThresholdSet:
    """Union of per-patch Otsu thresholds over a ``grid x grid`` tiling.

    The last patch row and column absorb any remainder. Constant patches
    contribute nothing.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    if img.height < grid or img.width < grid:
        raise ValueError(f"image {img.width}x{img.height} too small for a {grid}x{grid} grid")
    found = set()
    for r0, r1 in _patch_bounds(img.height, grid):
        for c0, c1 in _patch_bounds(img.width, grid):
            k = otsu_threshold(img.pixels[r0:r1, c0:c1])
            if k is not None:
                found.add(k)
    if not found:
        raise EmptyThresholdSetError("every patch is constant; no Otsu thresholds")
    return ThresholdSet(tuple(sorted(found)))


def parse_strategy(text: str) -> tuple[str, int | None]:
    """Parse ``full``, ``full0``, ``bitplane``, ``stride:S`` or ``otsu:G``."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name in ("full", "full0", "bitplane"):
        if arg:
            raise ValueError(f"strategy {name!r} takes no argument")
        return name, None
    if name in ("stride", "otsu"):
        if not arg:
            raise ValueError(f"strategy {name!r} needs an integer argument, e.g. {name}:3")
        return name, int(arg)
    raise ValueError(f"unknown threshold strategy {text!r}")


def thresholds_for(strategy: str, img: GrayImage | None = None) -> ThresholdSet:
    name, arg = parse_strategy(strategy)
    if name == "full":
        return thresholds_full()
    if name == "full0":
        return thresholds_full(include_zero=True)
    if name == "bitplane":
        return thresholds_bitplane()
    if name == "stride":
        return thresholds_stride(arg)
    if img is None:
        raise ValueError("otsu strategy needs an image")
    return thresholds_otsu_patches(img, arg)
