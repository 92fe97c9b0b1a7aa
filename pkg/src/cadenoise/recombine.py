"""Weighted recombination of a binary stack and least-squares fitting of the weights.

The output image is ``sum_k w_k * plane_k``. Weights are fit by minimizing the
squared error between that sum and the observed image over a mask of pixels
believed to be uncorrupted. The objective is a convex quadratic in ``w``, so
the fit works on the normal matrix ``G = A^T A`` and vector ``b = A^T y`` of the
masked design ``A`` (one column per plane) instead of touching every pixel on
every epoch.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .image_core import EmptyMaskError, GrayImage, PixelMask
from .threshold_stack import BinaryStack, ThresholdSet

PathLike = Union[str, os.PathLike]

WEIGHT_FORMAT = "cadenoise-weights"
WEIGHT_FORMAT_VERSION = 1

_CHUNK = 8192


class DivergenceError(FloatingPointError):
    """The objective became non-finite during fitting."""


class SingularSystemError(np.linalg.LinAlgError):
    """Normal equations are singular or too ill-conditioned to solve."""


class WeightFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray
    nonneg_constrained: bool = False
    thresholds: Optional[ThresholdSet] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise ValueError("weight vector must be nonempty")
        if self.nonneg_constrained and np.any(w < 0):
            raise ValueError("nonnegative weight vector has negative entries")
        if self.thresholds is not None and len(self.thresholds) != w.size:
            raise ValueError(f"{w.size} weights for {len(self.thresholds)} thresholds")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class OptimizerConfig:
    epochs: int = 7560
    step_size: Optional[float] = None  # None: 1 / (2 * Gershgorin bound of the normal matrix)
    epsilon_init: float = 0.05
    ridge: float = 0.0
    nonneg: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if not 0 <= self.epsilon_init < 1:
            raise ValueError(f"epsilon_init must be in [0, 1), got {self.epsilon_init}")
        if self.ridge < 0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge}")


@dataclass(frozen=True)
class WeightStats:
    mean: float
    median: float
    std: float
    min: float
    max: float
    sum: float

    FIELDS = ("mean", "median", "std", "min", "max", "sum")


@dataclass
class FitResult:
    weights: WeightVector
    objective_history: np.ndarray
    sampled_pixel_count: int
    step_size: float
    halvings: int = 0

    @property
    def final_objective(self) -> float:
        return float(self.objective_history[-1])


# ------------------------------------------------------------------ evaluation


def _check_lengths(stack: BinaryStack, w: WeightVector) -> None:
    if len(w) != len(stack):
        raise ValueError(f"{len(w)} weights for a stack of {len(stack)} planes")


def recombine(stack: BinaryStack, w: WeightVector, clamp: bool = True):
    """Weighted plane sum.

    With ``clamp`` the sum is clipped to [0, 255], rounded half away from zero
    and returned as a :class:`GrayImage`; otherwise the raw float array is returned.
    """
    _check_lengths(stack, w)
    out = np.zeros(stack.shape, dtype=np.float64)
    for weight, plane in zip(w.weights, stack.planes):
        if weight != 0.0:
            out += weight * plane
    if not clamp:
        return out
    out = np.clip(out, 0.0, 255.0)
    return GrayImage(np.floor(out + 0.5).astype(np.uint8))


def init_weights(t: int, epsilon: float = 0.05, seed: int = 0) -> WeightVector:
    """Uniform draws in ``[(1 - eps) * 255 / t, (1 + eps) * 255 / t]``."""
    if t < 1:
        raise ValueError(f"need at least one plane, got t={t}")
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    mu = 255.0 / t
    if epsilon == 0:
        return WeightVector(np.full(t, mu))
    rng = np.random.default_rng(seed)
    return WeightVector(rng.uniform((1 - epsilon) * mu, (1 + epsilon) * mu, size=t))


def _masked_inputs(stack: BinaryStack, noisy: GrayImage, mask: PixelMask):
    if stack.shape != noisy.shape or mask.shape != noisy.shape:
        raise ValueError(
            f"shape mismatch: stack {stack.shape}, image {noisy.shape}, mask {mask.shape}"
        )
    if mask.count == 0:
        raise EmptyMaskError("objective needs at least one masked pixel")
    design = stack.planes[:, mask.flags]
    target = noisy.pixels[mask.flags].astype(np.float64)
    return design, target


def _predict(design: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = design.shape[1]
    out = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        out[lo : lo + _CHUNK] = w @ design[:, lo : lo + _CHUNK]
    return out


def objective(stack: BinaryStack, w: WeightVector, noisy: GrayImage, mask: PixelMask) -> float:
    """Sum of squared residuals of the unclamped recombination over masked pixels."""
    _check_lengths(stack, w)
    design, target = _masked_inputs(stack, noisy, mask)
    r = _predict(design, w.weights) - target
    return float(r @ r)


def objective_gradient(
    stack: BinaryStack, w: WeightVector, noisy: GrayImage, mask: PixelMask, ridge: float = 0.0
) -> np.ndarray:
    """Gradient of ``objective + ridge * |w|^2``, evaluated from per-pixel residuals."""
    _check_lengths(stack, w)
    design, target = _masked_inputs(stack, noisy, mask)
    r = _predict(design, w.weights) - target
    grad = np.zeros(len(w))
    for lo in range(0, r.size, _CHUNK):
        grad += design[:, lo : lo + _CHUNK] @ r[lo : lo + _CHUNK]
    return 2.0 * grad + 2.0 * ridge * w.weights


@dataclass(frozen=True)
class NormalEquations:
    gram: np.ndarray  # A^T A
    rhs: np.ndarray  # A^T y
    target_sq: float  # y^T y
    count: int

    def value(self, w: np.ndarray, ridge: float = 0.0) -> float:
        return float(w @ self.gram @ w - 2.0 * self.rhs @ w + self.target_sq + ridge * (w @ w))


def normal_equations(stack: BinaryStack, noisy: GrayImage, mask: PixelMask) -> NormalEquations:
    design, target = _masked_inputs(stack, noisy, mask)
    t, n = design.shape
    gram = np.zeros((t, t))
    rhs = np.zeros(t)
    for lo in range(0, n, _CHUNK):
        # 0/1 products summed over at most _CHUNK pixels are exact in float32
        block = design[:, lo : lo + _CHUNK].astype(np.float32)
        gram += (block @ block.T).astype(np.float64)
        rhs += block.astype(np.float64) @ target[lo : lo + _CHUNK]
    return NormalEquations(gram, rhs, float(target @ target), n)


# --------------------------------------------------------------------- fitting


def default_step_size(gram: np.ndarray, ridge: float = 0.0) -> float:
    bound = float(np.abs(gram).sum(axis=1).max()) + ridge
    if bound <= 0:
        return 1.0
    return 1.0 / (2.0 * bound)


def fit_weights(
    stack: BinaryStack,
    noisy: GrayImage,
    mask: PixelMask,
    cfg: OptimizerConfig = OptimizerConfig(),
    init: Optional[WeightVector] = None,
) -> FitResult:
    """Gradient descent (projected when ``cfg.nonneg``) on the masked squared error.

    A step that would raise the objective is retried at half the step size, and
    the smaller step is kept for the remaining epochs, so the recorded history
    never increases.
    """
    eq = normal_equations(stack, noisy, mask)
    t = len(stack)
    w0 = init if init is not None else init_weights(t, cfg.epsilon_init, cfg.seed)
    _check_lengths(stack, w0)
    w = w0.weights.copy()
    if cfg.nonneg:
        np.maximum(w, 0.0, out=w)
    hess_half = eq.gram + cfg.ridge * np.eye(t)
    step = cfg.step_size if cfg.step_size is not None else default_step_size(eq.gram, cfg.ridge)

    current = eq.value(w, cfg.ridge)
    if not math.isfinite(current):
        raise DivergenceError("initial objective is not finite")
    history = np.empty(cfg.epochs)
    halvings = 0
    for epoch in range(cfg.epochs):
        grad = 2.0 * (hess_half @ w - eq.rhs)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient at epoch {epoch}")
        change = 0.0
        for _ in range(64):
            cand = w - step * grad
            if cfg.nonneg:
                np.maximum(cand, 0.0, out=cand)
            d = cand - w
            # exact change of the quadratic along d; avoids cancellation in value()
            delta = float(d @ hess_half @ d + grad @ d)
            if not math.isfinite(delta):
                raise DivergenceError(f"non-finite objective at epoch {epoch}")
            if delta <= 0.0:
                w = cand
                change = delta
                break
            step *= 0.5
            halvings += 1
        current += change
        history[epoch] = current
    if not math.isfinite(current):
        raise DivergenceError("objective diverged")
    result = WeightVector(
        w,
        nonneg_constrained=cfg.nonneg,
        thresholds=stack.thresholds,
        metadata={"epochs": cfg.epochs, "seed": cfg.seed, "ridge": cfg.ridge},
    )
    return FitResult(result, history, eq.count, step, halvings)


def _gauss_solve(a: np.ndarray, b: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Gaussian elimination with partial pivoting on a copy of ``a``."""
    a = np.array(a, dtype=np.float64)
    x = np.array(b, dtype=np.float64)
    n = a.shape[0]
    scale = np.abs(a).max() if a.size else 0.0
    if scale == 0.0:
        raise SingularSystemError("zero matrix")
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= rtol * scale:
            raise SingularSystemError(f"pivot {a[piv, col]:.3g} at column {col} is numerically zero")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            x[[col, piv]] = x[[piv, col]]
        factors = a[col + 1 :, col] / a[col, col]
        a[col + 1 :, col:] -= np.outer(factors, a[col, col:])
        x[col + 1 :] -= factors * x[col]
    for row in range(n - 1, -1, -1):
        x[row] = (x[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def solve_least_squares_oracle(
    stack: BinaryStack,
    noisy: GrayImage,
    mask: PixelMask,
    nonneg: bool = False,
    ridge: float = 0.0,
) -> WeightVector:
    """Direct minimizer of the masked squared error, for checking :func:`fit_weights`.

    Builds the dense design matrix explicitly and solves the normal equations
    by Gaussian elimination. With ``nonneg`` an active-set loop (Lawson-Hanson)
    solves the free subproblem repeatedly until the KKT conditions hold.
    """
    if len(stack) > 512:
        raise ValueError("oracle is limited to t <= 512 planes")
    if mask.count == 0:
        raise EmptyMaskError("oracle needs at least one masked pixel")
    design = stack.planes[:, mask.flags].T.astype(np.float64)
    y = noisy.pixels[mask.flags].astype(np.float64)
    t = design.shape[1]
    a = design.T @ design + ridge * np.eye(t)
    rhs = design.T @ y
    if not nonneg:
        return WeightVector(_gauss_solve(a, rhs), thresholds=stack.thresholds)
    return WeightVector(_active_set_nnls(a, rhs), nonneg_constrained=True, thresholds=stack.thresholds)


def _active_set_nnls(a: np.ndarray, rhs: np.ndarray, max_iter: int = 1000) -> np.ndarray:
    t = a.shape[0]
    x = np.zeros(t)
    free = np.zeros(t, dtype=bool)
    tol = 1e-10 * max(1.0, float(np.abs(rhs).max()))
    for _ in range(max_iter):
        grad = rhs - a @ x  # negative half-gradient
        candidates = ~free & (grad > tol)
        if not candidates.any():
            break
        free[np.flatnonzero(candidates)[np.argmax(grad[candidates])]] = True
        while free.any():
            idx = np.flatnonzero(free)
            z = np.zeros(t)
            z[idx] = _gauss_solve(a[np.ix_(idx, idx)], rhs[idx])
            if np.all(z[idx] > 0):
                x = z
                break
            # step toward z until the first free coordinate hits zero
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            free &= x > tol
            x[~free] = 0.0
    return np.maximum(x, 0.0)


# ------------------------------------------------------------------ statistics


def weight_stats(w: WeightVector) -> WeightStats:
    v = np.sort(w.weights)
    return WeightStats(
        mean=float(v.mean()),
        median=float(v[(v.size - 1) // 2]),
        std=float(v.std()),
        min=float(v[0]),
        max=float(v[-1]),
        sum=float(v.sum()),
    )


# ------------------------------------------------------------------- file I/O


def _meta_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def _meta_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_weights(path: PathLike, w: WeightVector, thresholds: Optional[ThresholdSet] = None, **metadata) -> None:
    """Write a self-describing text weight file.

    Layout: a header line ``cadenoise-weights <version> <t>``, a ``thresholds``
    line, ``t`` weight lines (shortest round-trip repr), then ``key=value``
    metadata lines.
    """
    thresholds = thresholds if thresholds is not None else w.thresholds
    if thresholds is None:
        raise ValueError("a threshold set is required to save weights")
    if len(thresholds) != len(w):
        raise ValueError(f"{len(w)} weights for {len(thresholds)} thresholds")
    meta = {**w.metadata, **metadata, "nonneg": w.nonneg_constrained}
    lines = [
        f"{WEIGHT_FORMAT} {WEIGHT_FORMAT_VERSION} {len(w)}",
        "thresholds " + " ".join(str(k) for k in thresholds.values),
    ]
    lines += [repr(float(x)) for x in w.weights]
    for key in sorted(meta):
        value = meta[key]
        if value is None:
            continue
        if any(c in str(key) for c in "=\n") or "\n" in _meta_text(value):
            raise ValueError(f"metadata entry {key!r} cannot be serialized")
        lines.append(f"{key}={_meta_text(value)}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path: PathLike) -> WeightVector:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise WeightFormatError("empty weight file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != WEIGHT_FORMAT:
        raise WeightFormatError(f"not a weight file: {lines[0]!r}")
    if head[1] != str(WEIGHT_FORMAT_VERSION):
        raise WeightFormatError(f"unsupported weight format version {head[1]}")
    t = int(head[2])
    if len(lines) < 2 + t or not lines[1].startswith("thresholds"):
        raise WeightFormatError("truncated weight file")
    thresholds = ThresholdSet(tuple(int(k) for k in lines[1].split()[1:]))
    if len(thresholds) != t:
        raise WeightFormatError(f"header says t={t}, found {len(thresholds)} thresholds")
    weights = np.array([float(x) for x in lines[2 : 2 + t]])
    meta = {}
    for line in lines[2 + t :]:
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise WeightFormatError(f"bad metadata line {line!r}")
        meta[key] = _meta_value(value)
    nonneg = bool(meta.pop("nonneg", False))
    return WeightVector(weights, nonneg_constrained=nonneg, thresholds=thresholds, metadata=meta)
