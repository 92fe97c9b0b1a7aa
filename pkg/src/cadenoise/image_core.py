"""Grayscale image model, PGM I/O, salt-and-pepper noise and pixel masks."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Union

import numpy as np

PathLike = Union[str, os.PathLike]


class PgmError(ValueError):
    """Base class for PGM decoding problems."""


class UnsupportedFormatError(PgmError):
    pass


class MalformedHeaderError(PgmError):
    pass


class UnsupportedMaxvalError(PgmError):
    pass


class TruncatedPayloadError(PgmError):
    pass


class EmptyMaskError(ValueError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image stored as a read-only ``(height, width)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D pixel array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValueError("intensities must be integers")
        object.__setattr__(self, "pixels", _frozen(np.array(arr, dtype=np.uint8)))

    @classmethod
    def from_list(cls, width: int, height: int, values) -> GrayImage:
        values = list(values)
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.int64).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True)
class NoiseSpec:
    p: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise probability must be in [0, 1], got {self.p}")


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Boolean ``(height, width)`` grid of pixels usable for regression."""

    flags: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.flags)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "flags", _frozen(np.array(arr, dtype=bool)))

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.flags.shape

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PixelMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.flags, other.flags))


# --------------------------------------------------------------------------- PGM


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next whitespace-delimited header token, skipping ``#`` comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of header")
    return data[start:pos], pos


def decode_pgm(data: bytes) -> GrayImage:
    if data[:2] != b"P5":
        raise UnsupportedFormatError(f"unsupported magic {data[:2]!r}; only binary PGM (P5) is read")
    pos = 2
    fields = []
    try:
        for _ in range(3):
            token, pos = _read_token(data, pos)
            fields.append(int(token))
    except ValueError as exc:
        if isinstance(exc, MalformedHeaderError):
            raise
        raise MalformedHeaderError(f"non-integer header field: {exc}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval must be 255, got {maxval}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval")
    pos += 1
    payload = data[pos : pos + width * height]
    if len(payload) < width * height:
        raise TruncatedPayloadError(f"expected {width * height} payload bytes, found {len(payload)}")
    return GrayImage(np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy())


def encode_pgm(img: GrayImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def load_pgm(path: PathLike) -> GrayImage:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_pgm(data)


def save_pgm(img: GrayImage, path: PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


# ------------------------------------------------------------------------- noise


def inject_spn(img: GrayImage, spec: NoiseSpec) -> GrayImage:
    """Corrupt each pixel with probability ``spec.p``; corrupted pixels become 0 or 255 evenly."""
    rng = np.random.default_rng(spec.seed)
    u = rng.random(img.shape)
    salt = rng.random(img.shape) < 0.5
    out = img.pixels.copy()
    hit = u < spec.p
    out[hit & salt] = 255
    out[hit & ~salt] = 0
    return GrayImage(out)


def uncorrupted_mask(img: GrayImage) -> PixelMask:
    """Pixels whose observed value is neither 0 nor 255."""
    px = img.pixels
    return PixelMask((px > 0) & (px < 255))


def sample_mask(
    mask: PixelMask,
    eta: float = 1.0,
    seed: int = 0,
    mode: str = "random",
    grid: int = 1,
) -> PixelMask:
    """Subsample the true set of ``mask``.

    ``mode="random"`` keeps exactly ``ceil(eta * count)`` flags chosen uniformly
    without replacement. ``mode="grid"`` keeps flags on the lattice
    ``i % grid == 0 and j % grid == 0`` (so eta is ``1 / grid**2``) and ignores ``eta``.
    """
    total = mask.count
    if total == 0:
        raise EmptyMaskError("cannot sample from an empty mask")
    if mode == "grid":
        if grid < 1:
            raise ValueError(f"grid factor must be >= 1, got {grid}")
        lattice = np.zeros(mask.shape, dtype=bool)
        lattice[::grid, ::grid] = True
        return PixelMask(mask.flags & lattice)
    if mode != "random":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1], got {eta}")
    keep = min(total, math.ceil(eta * total - 1e-9))
    if keep == total:
        return PixelMask(mask.flags.copy())
    idx = np.flatnonzero(mask.flags)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(idx, size=keep, replace=False)
    out = np.zeros(mask.flags.size, dtype=bool)
    out[chosen] = True
    return PixelMask(out.reshape(mask.shape))
