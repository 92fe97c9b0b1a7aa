"""Salt-and-pepper denoising with threshold decomposition, binary cellular
automata and least-squares recombination weights."""

__version__ = "0.1.0"

from .ca_engine import BinaryImage, CaRule, NeighborhoodSpec, apply_rule_step, evolve
from .image_core import GrayImage, NoiseSpec, PixelMask, inject_spn, load_pgm, save_pgm
from .metrics import mse, psnr
from .pipeline import PipelineConfig, denoise_pipeline, median_filter, unit_weight_baseline
from .recombine import OptimizerConfig, WeightVector, fit_weights, recombine
from .threshold_stack import BinaryStack, ThresholdSet, decompose

__all__ = [
    "BinaryImage", "BinaryStack", "CaRule", "GrayImage", "NeighborhoodSpec", "NoiseSpec",
    "OptimizerConfig", "PipelineConfig", "PixelMask", "ThresholdSet", "WeightVector",
    "apply_rule_step", "decompose", "denoise_pipeline", "evolve", "fit_weights", "inject_spn",
    "load_pgm", "median_filter", "mse", "psnr", "recombine", "save_pgm", "unit_weight_baseline",
]
