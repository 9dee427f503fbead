#!/usr/bin/env python3
"""Auxiliary-loss weight sweep: trains the desk model at several lambda values
across a few seeds and reports mean val mIoU_f per lambda."""

import argparse
import json
from pathlib import Path

import numpy as np

from avafford.config import desk_profile
from avafford.data import SynthConfig, generate_synthetic
from avafford.training import apply_overrides, evaluate, train


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/lambda_sweep"))
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 0.1, 0.5, 1.0])
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--samples-per-category", type=int, default=16)
    parser.add_argument("--categories", type=int, default=6)
    args = parser.parse_args()

    synth = SynthConfig(
        image_size=64,
        n_samples=args.categories * args.samples_per_category,
        n_categories=args.categories,
        sample_rate=8000,
    )
    table = {}
    for lam in args.lambdas:
        vals = []
        for seed in args.seeds:
            samples = generate_synthetic(synth, seed=100 + seed)
            cfg = apply_overrides(desk_profile(seed=seed, epochs=args.epochs),
                                  {"loss": {"lambda_aux": lam}})
            result = train(cfg, samples)
            report = evaluate(result.best_model(), result.val_samples, cfg)
            vals.append(report.miou_f)
            print(f"lambda={lam} seed={seed}: val mIoU_f {report.miou_f:.4f}")
        table[lam] = {"per_seed": vals, "mean": float(np.mean(vals))}

    print(f"\n{'lambda':>8} {'mean val mIoU_f':>16}")
    for lam, row in table.items():
        print(f"{lam:>8} {100 * row['mean']:>16.2f}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "lambda_sweep.json").write_text(json.dumps(table, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
