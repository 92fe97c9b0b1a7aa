"""Two-state cellular automata over binary images.

A CA here is the usual triple: binary state set, a neighborhood ball (Moore or
von Neumann, radius ``r``) and a local rule. Updates are synchronous and edges
use replicate padding, so every cell always sees a full neighborhood.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

MOORE = "moore"
VON_NEUMANN = "von_neumann"


@dataclass(frozen=True, eq=False)
class BinaryImage:
    cells: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.cells)
        if arr.ndim != 2:
            raise ValueError(f"binary image must be 2-D, got shape {arr.shape}")
        if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
            raise ValueError("binary image cells must be 0 or 1")
        arr = np.array(arr, dtype=bool)
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.cells, other.cells))


@dataclass(frozen=True)
class NeighborhoodSpec:
    kind: str = MOORE
    radius: int = 1
    boundary: str = "replicate"

    def __post_init__(self) -> None:
        if self.kind not in (MOORE, VON_NEUMANN):
            raise ValueError(f"unknown neighborhood kind {self.kind!r}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.boundary != "replicate":
            raise ValueError(f"unsupported boundary {self.boundary!r}")

    def offsets(self) -> list[tuple[int, int]]:
        """Ball offsets ``(di, dj)`` in row-major order, center included."""
        r = self.radius
        out = []
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                if self.kind == MOORE or abs(di) + abs(dj) <= r:
                    out.append((di, dj))
        return out

    @property
    def size(self) -> int:
        r = self.radius
        return (2 * r + 1) ** 2 if self.kind == MOORE else 2 * r * (r + 1) + 1


def neighborhood_cells(
    spec: NeighborhoodSpec, center: tuple[int, int], dims: tuple[int, int]
) -> list[tuple[int, int]]:
    """Coordinates of the ball around ``center`` on a ``(height, width)`` grid.

    Out-of-range coordinates are clamped to the nearest edge cell, so corners
    produce repeated entries.
    """
    h, w = dims
    i, j = center
    if not (0 <= i < h and 0 <= j < w):
        raise IndexError(f"center {center} outside grid {dims}")
    return [
        (min(max(i + di, 0), h - 1), min(max(j + dj, 0), w - 1))
        for di, dj in spec.offsets()
    ]


def majority_rule_eval(config: Sequence[int]) -> int:
    n = len(config)
    if n % 2 == 0:
        raise ValueError(f"majority needs an odd configuration length, got {n}")
    ones = sum(1 for c in config if c)
    return int(ones > n - ones)


def _identity_eval(config: Sequence[int]) -> int:
    return int(config[len(config) // 2])


def _shifted_views(padded: np.ndarray, r: int, offsets, shape):
    h, w = shape
    for di, dj in offsets:
        yield padded[..., r + di : r + di + h, r + dj : r + dj + w]


def _identity_step(cells: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    return cells.copy()


def _majority_step(cells: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    offsets = spec.offsets()
    n = len(offsets)
    if n % 2 == 0:
        raise ValueError("majority needs an odd neighborhood size")
    r = spec.radius
    pad = [(0, 0)] * (cells.ndim - 2) + [(r, r), (r, r)]
    padded = np.pad(cells, pad, mode="edge").view(np.uint8)
    count = np.zeros(cells.shape, dtype=np.uint16)
    for view in _shifted_views(padded, r, offsets, cells.shape[-2:]):
        count += view
    return count > n // 2


@dataclass(frozen=True)
class CaRule:
    """A local rule.

    ``delta`` maps a neighborhood configuration (row-major list of 0/1 states,
    center at the middle) to the next state. ``step`` is an optional
    array-at-once equivalent; rules without one fall back to per-cell ``delta``.
    """

    id: str
    delta: Callable[[Sequence[int]], int] = field(repr=False)
    step: Optional[Callable[[np.ndarray, NeighborhoodSpec], np.ndarray]] = field(
        default=None, repr=False
    )


IDENTITY = CaRule("identity", _identity_eval, _identity_step)
MAJORITY = CaRule("majority", majority_rule_eval, _majority_step)

RULES = {rule.id: rule for rule in (IDENTITY, MAJORITY)}


def get_rule(name: str) -> CaRule:
    try:
        return RULES[name]
    except KeyError:
        raise ValueError(f"unknown rule {name!r}; choose from {sorted(RULES)}") from None


def _step_by_delta(cells: np.ndarray, rule: CaRule, spec: NeighborhoodSpec) -> np.ndarray:
    h, w = cells.shape
    out = np.empty_like(cells)
    for i in range(h):
        for j in range(w):
            config = [int(cells[c]) for c in neighborhood_cells(spec, (i, j), (h, w))]
            out[i, j] = bool(rule.delta(config))
    return out


def step_cells(cells: np.ndarray, rule: CaRule, spec: NeighborhoodSpec) -> np.ndarray:
    """One synchronous update of a boolean array; leading axes are independent planes."""
    if rule.step is not None:
        return rule.step(cells, spec)
    if cells.ndim == 2:
        return _step_by_delta(cells, rule, spec)
    flat = cells.reshape(-1, *cells.shape[-2:])
    return np.stack([_step_by_delta(c, rule, spec) for c in flat]).reshape(cells.shape)


def apply_rule_step(img: BinaryImage, rule: CaRule, spec: NeighborhoodSpec) -> BinaryImage:
    return BinaryImage(step_cells(img.cells, rule, spec))


def evolve(img: BinaryImage, rule: CaRule, spec: NeighborhoodSpec, steps: int = 1) -> BinaryImage:
    return BinaryImage(evolve_cells(img.cells, rule, spec, steps))


def evolve_cells(
    cells: np.ndarray,
    rule: CaRule,
    spec: NeighborhoodSpec,
    steps: int = 1,
    chunk: int = 32,
) -> np.ndarray:
    """``steps``-fold synchronous evolution of a 2-D image or a ``(t, h, w)`` stack.

    Stacks are processed ``chunk`` planes at a time to bound peak memory.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    cells = np.asarray(cells, dtype=bool)
    if steps == 0:
        return cells.copy()
    if cells.ndim == 3 and cells.shape[0] > chunk:
        out = np.empty_like(cells)
        for lo in range(0, cells.shape[0], chunk):
            out[lo : lo + chunk] = evolve_cells(cells[lo : lo + chunk], rule, spec, steps)
        return out
    for _ in range(steps):
        cells = step_cells(cells, rule, spec)
    return cells
