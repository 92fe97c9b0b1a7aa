"""Command-line interface: ``cadenoise <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .ca_engine import MOORE, VON_NEUMANN, NeighborhoodSpec
from .image_core import GrayImage, NoiseSpec, inject_spn, load_pgm, save_pgm
from .metrics import format_psnr, psnr
from .pipeline import (
    ExperimentRow,
    PipelineConfig,
    StatsRow,
    SweepRow,
    denoise_pipeline,
    median_filter,
    rows_to_csv,
    run_eta_sweep,
    run_noise_table,
    run_weight_stability,
)
from .recombine import OptimizerConfig, load_weights, save_weights, weight_stats
from .testimages import natural_image


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_pipeline_args(p: argparse.ArgumentParser, eta_default: float = 0.1) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--thresholds", default="full", help="full | full0 | bitplane | stride:S | otsu:G (default: full)")
    g.add_argument("--rule", default="majority", choices=["majority", "identity"])
    g.add_argument("--neighborhood", default=MOORE, choices=[MOORE, VON_NEUMANN])
    g.add_argument("--radius", type=int, default=1)
    g.add_argument("--ca-steps", type=int, default=1)
    g.add_argument("--eta", type=float, default=eta_default, help="fraction of uncorrupted pixels used for the fit")
    g.add_argument("--grid", type=int, default=None, help="grid subsampling factor k (eta = 1/k^2); overrides --eta")
    o = p.add_argument_group("optimizer")
    o.add_argument("--epochs", type=int, default=7560)
    o.add_argument("--step-size", type=float, default=None)
    o.add_argument("--epsilon", type=float, default=0.05, help="relative spread of the initial weights")
    o.add_argument("--ridge", type=float, default=0.0)
    o.add_argument("--nonneg", action="store_true", help="constrain weights to be >= 0")


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    sample = {"sample_mode": "grid", "grid": args.grid} if args.grid else {"sample_mode": "random"}
    return PipelineConfig(
        thresholds=args.thresholds,
        rule=args.rule,
        neighborhood=NeighborhoodSpec(args.neighborhood, args.radius),
        ca_steps=args.ca_steps,
        eta=args.eta,
        sample_seed=args.seed,
        optimizer=OptimizerConfig(
            epochs=args.epochs,
            step_size=args.step_size,
            epsilon_init=args.epsilon,
            ridge=args.ridge,
            nonneg=args.nonneg,
            seed=args.seed,
        ),
        **sample,
    )


def _source_image(args: argparse.Namespace) -> tuple[GrayImage, str]:
    if args.image:
        return load_pgm(args.image), Path(args.image).stem
    return natural_image(args.synthetic), f"synthetic{args.synthetic}"


def _add_source_args(p: argparse.ArgumentParser, size: int) -> None:
    p.add_argument("--image", help="clean reference PGM (default: built-in synthetic scene)")
    p.add_argument("--synthetic", type=int, default=size, help=f"synthetic scene size when --image is absent (default: {size})")
    p.add_argument("--out", help="CSV destination (default: stdout)")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fit_log(res, out_path: str) -> str:
    s = weight_stats(res.weights)
    lines = [
        f"output={out_path}",
        f"planes={len(res.weights)}",
        f"sampled_pixels={res.fit.sampled_pixel_count}",
        f"epochs={len(res.fit.objective_history)}",
        f"step_size={res.fit.step_size!r}",
        f"initial_objective={res.fit.objective_history[0]!r}",
        f"final_objective={res.fit.final_objective!r}",
    ]
    lines += [f"weight_{name}={getattr(s, name)!r}" for name in s.FIELDS]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ commands


def cmd_add_noise(args) -> int:
    save_pgm(inject_spn(load_pgm(args.input), NoiseSpec(args.p, args.seed)), args.output)
    return 0


def cmd_psnr(args) -> int:
    print(format_psnr(psnr(load_pgm(args.reference), load_pgm(args.approx))))
    return 0


def cmd_median(args) -> int:
    save_pgm(median_filter(load_pgm(args.input), args.window), args.output)
    return 0


def cmd_denoise(args) -> int:
    cfg = _pipeline_config(args)
    weights = load_weights(args.weights_in) if args.weights_in else None
    res = denoise_pipeline(load_pgm(args.input), cfg, weights)
    save_pgm(res.image, args.output)
    if res.fit is not None:
        log = args.log or f"{args.output}.log"
        Path(log).write_text(_fit_log(res, args.output))
        print(f"fit: {res.fit.sampled_pixel_count} pixels, objective {res.fit.final_objective:.6g}; log -> {log}",
              file=sys.stderr)
    if args.weights_out:
        save_weights(args.weights_out, res.weights, noise_p=args.noise_p, seed=args.seed)
    return 0


def cmd_fit_weights(args) -> int:
    cfg = _pipeline_config(args)
    res = denoise_pipeline(load_pgm(args.input), cfg)
    save_weights(args.weights, res.weights, noise_p=args.noise_p, seed=args.seed)
    print(f"wrote {len(res.weights)} weights to {args.weights}", file=sys.stderr)
    return 0


def cmd_apply_weights(args) -> int:
    w = load_weights(args.weights)
    cfg = _pipeline_config(args)
    if w.thresholds is not None and args.thresholds == "full":
        cfg = replace(cfg, thresholds=_strategy_for(w))
    res = denoise_pipeline(load_pgm(args.input), cfg, w)
    save_pgm(res.image, args.output)
    return 0


def _strategy_for(w) -> str:
    vals = w.thresholds.values
    if vals == tuple(range(1, 256)):
        return "full"
    if vals == tuple(range(0, 256)):
        return "full0"
    if vals == tuple(1 << b for b in range(8)):
        return "bitplane"
    if len(vals) > 1 and vals[0] == 1:
        step = vals[1] - vals[0]
        if vals == tuple(range(1, 256, step)):
            return f"stride:{step}"
    raise ValueError("cannot infer a threshold strategy from the weight file; pass --thresholds")


def cmd_table1(args) -> int:
    clean, name = _source_image(args)
    rows = run_noise_table(clean, args.p, args.seeds, _pipeline_config(args), image_id=name, timing=args.timing)
    _emit(rows_to_csv(rows, ExperimentRow.HEADER, "table1"), args.out)
    return 0


def cmd_eta_sweep(args) -> int:
    clean, name = _source_image(args)
    rows = run_eta_sweep(clean, args.factors, args.p, args.seeds, _pipeline_config(args), image_id=name, timing=args.timing)
    _emit(rows_to_csv(rows, SweepRow.HEADER, "eta-sweep"), args.out)
    return 0


def cmd_weight_stats(args) -> int:
    clean, name = _source_image(args)
    rows = run_weight_stability(clean, args.p, args.seeds, _pipeline_config(args), image_id=name)
    _emit(rows_to_csv(rows, StatsRow.HEADER, "weight-stats"), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cadenoise",
        description="Salt-and-pepper denoising by threshold decomposition, binary CA and fitted recombination.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("add-noise", help="inject salt-and-pepper noise")
    p.add_argument("--p", type=float, required=True, help="corruption probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("psnr", help="print PSNR in dB (or 'inf')")
    p.add_argument("reference")
    p.add_argument("approx")
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("median", help="median-filter baseline")
    p.add_argument("--window", type=int, default=3)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_median)

    p = sub.add_parser("denoise", help="full pipeline on a noisy PGM")
    _add_pipeline_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights-in", help="recombine with these weights instead of fitting")
    p.add_argument("--weights-out", help="also save the fitted weights")
    p.add_argument("--noise-p", type=float, default=None, help="noise level recorded in saved weight metadata")
    p.add_argument("--log", help="fit log path (default: OUTPUT.log)")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("fit-weights", help="fit recombination weights and write a weight file")
    _add_pipeline_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-p", type=float, default=None, help="noise level recorded in the weight file")
    p.add_argument("input")
    p.add_argument("weights")
    p.set_defaults(func=cmd_fit_weights)

    p = sub.add_parser("apply-weights", help="denoise with a precomputed weight file")
    _add_pipeline_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("weights")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_apply_weights)

    p = sub.add_parser("table1", help="PSNR of median / unit weights / fitted weights across noise levels")
    _add_source_args(p, 128)
    _add_pipeline_args(p)
    p.add_argument("--p", type=_float_list, default=[0.06, 0.08, 0.10, 0.12, 0.14])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.add_argument("--timing", action="store_true", help="fill the ms column (makes output non-deterministic)")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("eta-sweep", help="PSNR versus grid segmentation factor")
    _add_source_args(p, 512)
    _add_pipeline_args(p)
    p.add_argument("--factors", type=_int_list, default=[1, 2, 4, 6, 8, 10])
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_eta_sweep)

    p = sub.add_parser("weight-stats", help="summary statistics of fitted weights per noise level")
    _add_source_args(p, 256)
    _add_pipeline_args(p)
    p.add_argument("--p", type=_float_list, default=[0.09, 0.10, 0.11])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_weight_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"cadenoise {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
