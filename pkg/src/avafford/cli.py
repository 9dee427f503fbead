"""Command-line interface: train, eval, s4eval, predict, ablate, synth, dedup."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .data import (
    SynthConfig,
    dedup_perceptual_hash,
    generate_synthetic,
    load_image,
    load_manifest_samples,
    parse_manifest,
    write_synthetic_dataset,
)
from .training import (
    evaluate,
    format_ablation_table,
    load_checkpoint,
    predict,
    run_ablation_suite,
    s4_protocol_eval,
    train,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument("--profile", choices=("desk", "full"), default="desk")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--manifest", type=Path, default=None)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--ckpt", type=Path, default=None)
    parser.add_argument("--split", choices=("val", "unseen"), default="val")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avafford",
                                     description="Audio-conditioned affordance segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a manifest")
    _add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the val or unseen split")
    _add_common(p_eval)

    p_s4 = sub.add_parser("s4eval", help="5-frame repeat protocol evaluation")
    _add_common(p_s4)

    p_pred = sub.add_parser("predict", help="predict masks for one image + audio pair")
    _add_common(p_pred)
    p_pred.add_argument("--image", type=Path, required=True)
    p_pred.add_argument("--audio", type=Path, required=True)

    p_abl = sub.add_parser("ablate", help="run the ablation grid")
    _add_common(p_abl)

    p_synth = sub.add_parser("synth", help="emit a synthetic dataset with a manifest")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--samples", type=int, default=32)
    p_synth.add_argument("--categories", type=int, default=4)
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--sample-rate", type=int, default=16000)
    p_synth.add_argument("--dep-less-every", type=int, default=0)
    p_synth.add_argument("--seed", type=int, default=0)

    p_dedup = sub.add_parser("dedup", help="drop perceptual-hash duplicates from a manifest")
    p_dedup.add_argument("--manifest", type=Path, required=True)
    p_dedup.add_argument("--max-hamming", type=int, default=4)
    p_dedup.add_argument("--out", type=Path, default=None, help="write the deduped manifest here")

    return parser


def _load_cfg(args) -> "TrainConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, profile=args.profile, **overrides)


def _require(value, flag: str):
    if value is None:
        raise SystemExit(f"error: {flag} is required for this command")
    return value


def _load_split_samples(args, cfg):
    manifest = parse_manifest(_require(args.manifest, "--manifest"))
    return load_manifest_samples(manifest, image_size=cfg.image_size, sample_rate=cfg.sample_rate)


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    samples = _load_split_samples(args, cfg)
    out = _require(args.out, "--out")
    result = train(cfg, samples, out_dir=out, log_fn=print)
    print(f"best epoch {result.best_epoch} (val score {result.best_score:.4f})")
    print(f"checkpoints written to {out}")
    if result.best_report is not None:
        print(result.best_report.format_table())
    return 0


def _eval_common(args, protocol):
    cfg_cli = _load_cfg(args)
    model, cfg, payload = load_checkpoint(_require(args.ckpt, "--ckpt"))
    cfg.seed = cfg_cli.seed if args.seed is not None else cfg.seed
    samples = _load_split_samples(args, cfg)
    from .data import SplitSpec, split_dataset
    spec = SplitSpec(unseen_categories=frozenset(cfg.unseen_categories),
                     train_fraction=cfg.train_fraction, seed=cfg.seed)
    train_s, val_s, unseen_s = split_dataset(samples, spec, allow_missing_unseen=True)
    subset = val_s if args.split == "val" else unseen_s
    if not subset:
        raise SystemExit(f"error: the {args.split} split is empty")
    report = protocol(model, subset, cfg)
    print(report.to_json())
    print(report.format_table())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"report_{args.split}.json").write_text(report.to_json())
    return 0


def cmd_eval(args) -> int:
    return _eval_common(args, evaluate)


def cmd_s4eval(args) -> int:
    return _eval_common(args, s4_protocol_eval)


def cmd_predict(args) -> int:
    cfg_cli = _load_cfg(args)
    model, cfg, _ = load_checkpoint(_require(args.ckpt, "--ckpt"))
    paths = predict(model, cfg, args.image, args.audio, _require(args.out, "--out"))
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    samples = _load_split_samples(args, cfg)
    rows = run_ablation_suite(cfg, samples, log_fn=None)
    table = format_ablation_table(rows)
    print(table)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "ablations.json").write_text(json.dumps(rows, indent=2))
        (args.out / "ablations.txt").write_text(table + "\n")
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        image_size=args.size,
        n_samples=args.samples,
        n_categories=args.categories,
        sample_rate=args.sample_rate,
        dep_less_every=args.dep_less_every,
    )
    samples = generate_synthetic(cfg, seed=args.seed)
    manifest = write_synthetic_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples, manifest at {manifest}")
    return 0


def cmd_dedup(args) -> int:
    manifest = parse_manifest(args.manifest)
    images = [load_image(manifest.root / rec.image_path) for rec in manifest.records]
    kept = dedup_perceptual_hash(images, max_hamming=args.max_hamming)
    dropped = sorted(set(range(len(images))) - set(kept))
    print(f"kept {len(kept)} / {len(images)} records (dropped {len(dropped)})")
    if args.out is not None:
        lines = manifest.records
        text = "\n".join(
            "\t".join([r.image_path, r.audio_path, r.mask_func_path, r.mask_dep_path or "-", r.category])
            for i, r in enumerate(lines) if i in set(kept)
        )
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text + ("\n" if text else ""), encoding="utf-8")
        print(f"deduped manifest written to {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "s4eval": cmd_s4eval,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "dedup": cmd_dedup,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(all="warn")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
