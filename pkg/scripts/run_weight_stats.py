"""Statistics of fitted weights across noise levels (Table 2 layout)."""

import argparse
from pathlib import Path

from cadenoise.image_core import load_pgm
from cadenoise.pipeline import PipelineConfig, StatsRow, rows_to_csv, run_weight_stability
from cadenoise.recombine import OptimizerConfig
from cadenoise.testimages import natural_image

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--image")
    ap.add_argument("--p", default="0.09,0.10,0.11")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--epochs", type=int, default=7560)
    ap.add_argument("--out", default="results/weight_stats.csv")
    args = ap.parse_args()

    clean = load_pgm(args.image) if args.image else natural_image(256)
    name = Path(args.image).stem if args.image else "synthetic256"
    cfg = PipelineConfig(eta=0.1, optimizer=OptimizerConfig(epochs=args.epochs))
    rows = run_weight_stability(
        clean, [float(v) for v in args.p.split(",")], [int(v) for v in args.seeds.split(",")], cfg, image_id=name
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(rows_to_csv(rows, StatsRow.HEADER, "weight-stats"))
    print(f"{'p':<6}{'seed':<6}" + "".join(f"{f.upper():>10}" for f in ("mean", "median", "std", "min", "max", "sum")))
    for r in rows:
        s = r.stats
        print(f"{r.p:<6g}{r.seed:<6}" + "".join(f"{v:>10.4f}" for v in (s.mean, s.median, s.std, s.min, s.max, s.sum)))
