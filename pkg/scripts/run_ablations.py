#!/usr/bin/env python3
"""Ablation sweep on synthetic data: fusion directions, mixer variant,
squeeze-excitation, mask-conditioned attention, dual-head structure, and the
auxiliary-loss weight grid. One shared seed across cells."""

import argparse
import json
from pathlib import Path

from avafford.config import desk_profile
from avafford.data import SynthConfig, generate_synthetic
from avafford.training import format_ablation_table, run_ablation_suite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/ablations"))
    parser.add_argument("--seed", type=int, default=0)
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
    samples = generate_synthetic(synth, seed=args.seed)
    cfg = desk_profile(seed=args.seed, epochs=args.epochs)

    rows = run_ablation_suite(cfg, samples, log_fn=print)
    table = format_ablation_table(rows)
    print("\n" + table)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "ablations.json").write_text(json.dumps(rows, indent=2))
    (args.out / "ablations.txt").write_text(table + "\n")
    print(f"\nwritten to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
