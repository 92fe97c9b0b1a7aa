"""End-to-end denoising, baselines and the experiment harnesses behind the CLI."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import ca_engine
from .ca_engine import NeighborhoodSpec
from .image_core import GrayImage, NoiseSpec, PixelMask, inject_spn, sample_mask, uncorrupted_mask
from .metrics import format_psnr, psnr
from .recombine import (
    FitResult,
    OptimizerConfig,
    WeightStats,
    WeightVector,
    fit_weights,
    recombine,
    weight_stats,
)
from .threshold_stack import BinaryStack, ThresholdSet, decompose, thresholds_for

CSV_SCHEMA_VERSION = 1


class ThresholdMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    thresholds: str = "full"
    rule: str = "majority"
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    ca_steps: int = 1
    eta: float = 0.1
    sample_mode: str = "random"
    grid: int = 1
    sample_seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        ca_engine.get_rule(self.rule)
        if self.ca_steps < 0:
            raise ValueError(f"ca_steps must be >= 0, got {self.ca_steps}")
        if self.sample_mode not in ("random", "grid"):
            raise ValueError(f"unknown sample mode {self.sample_mode!r}")
        if self.sample_mode == "random" and not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.sample_mode == "grid" and self.grid < 1:
            raise ValueError(f"grid factor must be >= 1, got {self.grid}")

    @property
    def effective_eta(self) -> float:
        return 1.0 / self.grid**2 if self.sample_mode == "grid" else self.eta


@dataclass
class DenoiseResult:
    image: GrayImage
    weights: WeightVector
    fit: Optional[FitResult]  # None when weights were supplied
    mask: Optional[PixelMask] = None


def process_stack(noisy: GrayImage, cfg: PipelineConfig) -> BinaryStack:
    """Threshold decomposition followed by CA evolution of every plane."""
    stack = decompose(noisy, thresholds_for(cfg.thresholds, noisy))
    rule = ca_engine.get_rule(cfg.rule)
    return stack.with_planes(ca_engine.evolve_cells(stack.planes, rule, cfg.neighborhood, cfg.ca_steps))


def regression_mask(noisy: GrayImage, cfg: PipelineConfig) -> PixelMask:
    return sample_mask(
        uncorrupted_mask(noisy), eta=cfg.eta, seed=cfg.sample_seed, mode=cfg.sample_mode, grid=cfg.grid
    )


def _check_thresholds(stack: BinaryStack, weights: WeightVector) -> None:
    if weights.thresholds is not None and weights.thresholds != stack.thresholds:
        raise ThresholdMismatchError(
            f"weights were fit for {len(weights.thresholds)} thresholds "
            f"{weights.thresholds.values[:3]}..., pipeline produced {len(stack.thresholds)}"
        )
    if len(weights) != len(stack):
        raise ThresholdMismatchError(f"{len(weights)} weights for {len(stack)} planes")


def denoise_pipeline(
    noisy: GrayImage,
    cfg: PipelineConfig = PipelineConfig(),
    weights: Optional[WeightVector] = None,
    stack: Optional[BinaryStack] = None,
) -> DenoiseResult:
    """Decompose, evolve, fit weights on the sampled uncorrupted pixels, recombine.

    Supplying ``weights`` skips the fit. ``stack`` may carry a precomputed
    :func:`process_stack` result for the same image and config.
    """
    if stack is None:
        stack = process_stack(noisy, cfg)
    if weights is not None:
        _check_thresholds(stack, weights)
        return DenoiseResult(recombine(stack, weights, clamp=True), weights, None)
    mask = regression_mask(noisy, cfg)
    fit = fit_weights(stack, noisy, mask, cfg.optimizer)
    meta = dict(fit.weights.metadata, eta=cfg.effective_eta)
    w = replace(fit.weights, metadata=meta)
    fit.weights = w
    return DenoiseResult(recombine(stack, w, clamp=True), w, fit, mask)


def unit_weights(thresholds: ThresholdSet) -> WeightVector:
    return WeightVector(np.ones(len(thresholds)), thresholds=thresholds)


def unit_weight_baseline(
    noisy: GrayImage, cfg: PipelineConfig = PipelineConfig(), stack: Optional[BinaryStack] = None
) -> GrayImage:
    if stack is None:
        stack = process_stack(noisy, cfg)
    return recombine(stack, unit_weights(stack.thresholds), clamp=True)


def median_filter(img: GrayImage, window: int = 3) -> GrayImage:
    """Sliding-window median with replicate padding."""
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    r = window // 2
    padded = np.pad(img.pixels, r, mode="edge")
    h, w = img.shape
    views = [padded[i : i + h, j : j + w] for i in range(window) for j in range(window)]
    # odd window count, so the median is an actual sample value
    return GrayImage(np.median(np.stack(views), axis=0).astype(np.uint8))


# ----------------------------------------------------------------- experiments


def derive_seed(*keys: float) -> int:
    """Stable 64-bit seed from integer or decimal keys."""
    ints = [int(round(k * 1_000_000)) if isinstance(k, float) else int(k) for k in keys]
    return int(np.random.SeedSequence([abs(v) for v in ints]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentRow:
    image: str
    p: float
    method: str
    eta: float
    seed: int
    psnr: float
    ms: Optional[float] = None

    HEADER = ("image", "p", "method", "eta", "seed", "psnr_db", "ms")

    def cells(self) -> list[str]:
        ms = "" if self.ms is None else f"{self.ms:.1f}"
        return [self.image, f"{self.p:g}", self.method, f"{self.eta:g}", str(self.seed), format_psnr(self.psnr), ms]


@dataclass(frozen=True)
class SweepRow:
    image: str
    p: float
    factor: int
    method: str
    eta: float
    seed: int
    samples: int
    psnr: float
    ms: Optional[float] = None

    HEADER = ("image", "p", "factor", "method", "eta", "seed", "samples", "psnr_db", "ms")

    def cells(self) -> list[str]:
        ms = "" if self.ms is None else f"{self.ms:.1f}"
        return [
            self.image, f"{self.p:g}", str(self.factor), self.method, f"{self.eta:g}",
            str(self.seed), str(self.samples), format_psnr(self.psnr), ms,
        ]


@dataclass(frozen=True)
class StatsRow:
    image: str
    p: float
    seed: int
    t: int
    stats: WeightStats
    final_objective: float

    HEADER = ("image", "p", "seed", "t", *WeightStats.FIELDS, "objective")

    def cells(self) -> list[str]:
        vals = [f"{getattr(self.stats, name):.6g}" for name in WeightStats.FIELDS]
        return [self.image, f"{self.p:g}", str(self.seed), str(self.t), *vals, f"{self.final_objective:.6g}"]


METHODS = ("median3x3", "unit_weights", "fit_eta1", "fit_eta0.1")


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - start) * 1000.0


def run_noise_table(
    clean: GrayImage,
    p_values: Sequence[float],
    seeds: Sequence[int],
    cfg: PipelineConfig = PipelineConfig(),
    image_id: str = "image",
    timing: bool = False,
) -> list[ExperimentRow]:
    """Median, unit-weight and fitted (eta = 1 and 0.1) PSNR per (p, seed).

    All four methods see the same noise realization for a given (p, seed).
    """
    rows = []
    for p in p_values:
        for seed in seeds:
            noisy = inject_spn(clean, NoiseSpec(p, derive_seed(seed, float(p))))
            stack, stack_ms = _timed(process_stack, noisy, cfg)

            def row(method: str, eta: float, out: GrayImage, ms: float) -> ExperimentRow:
                return ExperimentRow(image_id, p, method, eta, seed, psnr(clean, out), ms if timing else None)

            med, ms = _timed(median_filter, noisy, 3)
            rows.append(row("median3x3", 1.0, med, ms))
            unit, ms = _timed(unit_weight_baseline, noisy, cfg, stack)
            rows.append(row("unit_weights", 1.0, unit, ms + stack_ms))
            for label, eta in (("fit_eta1", 1.0), ("fit_eta0.1", 0.1)):
                run_cfg = replace(cfg, eta=eta, sample_mode="random", sample_seed=seed)
                res, ms = _timed(denoise_pipeline, noisy, run_cfg, None, stack)
                rows.append(row(label, eta, res.image, ms + stack_ms))
    order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (r.p, order.get(r.method, len(order)), r.seed))
    return rows


def run_eta_sweep(
    clean: GrayImage,
    factors: Sequence[int],
    p: float,
    seeds: Sequence[int],
    cfg: PipelineConfig = PipelineConfig(),
    image_id: str = "image",
    timing: bool = False,
) -> list[SweepRow]:
    """Grid-subsampled fits per segmentation factor, each on its own noise realization.

    Every (factor, seed) cell also reports the all-pixel fit on the same
    realization as the ``reference`` row.
    """
    rows = []
    for factor in factors:
        if factor < 1:
            raise ValueError(f"segmentation factor must be >= 1, got {factor}")
        for seed in seeds:
            noisy = inject_spn(clean, NoiseSpec(p, derive_seed(seed, float(p), factor)))
            stack = process_stack(noisy, cfg)
            for method, run_cfg in (
                ("grid", replace(cfg, sample_mode="grid", grid=factor, sample_seed=seed)),
                ("reference", replace(cfg, sample_mode="random", eta=1.0, sample_seed=seed)),
            ):
                res, ms = _timed(denoise_pipeline, noisy, run_cfg, None, stack)
                rows.append(
                    SweepRow(
                        image_id, p, factor, method, run_cfg.effective_eta, seed,
                        res.fit.sampled_pixel_count, psnr(clean, res.image), ms if timing else None,
                    )
                )
    rows.sort(key=lambda r: (r.factor, r.method, r.seed))
    return rows


def run_weight_stability(
    clean: GrayImage,
    p_values: Sequence[float],
    seeds: Sequence[int],
    cfg: PipelineConfig = PipelineConfig(),
    image_id: str = "image",
) -> list[StatsRow]:
    rows = []
    for p in p_values:
        for seed in seeds:
            noisy = inject_spn(clean, NoiseSpec(p, derive_seed(seed, float(p))))
            res = denoise_pipeline(noisy, replace(cfg, sample_seed=seed))
            rows.append(
                StatsRow(image_id, p, seed, len(res.weights), weight_stats(res.weights), res.fit.final_objective)
            )
    rows.sort(key=lambda r: (r.p, r.seed))
    return rows


def rows_to_csv(rows: Iterable, header: Sequence[str], kind: str) -> str:
    buf = io.StringIO()
    buf.write(f"# cadenoise {kind} v{CSV_SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow(r.cells())
    return buf.getvalue()
