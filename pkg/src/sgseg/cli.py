"""Command-line entry point.

Subcommands: ``gen-data`` (write a phantom dataset), ``train``, ``evaluate``,
``ablate`` (the 4-way component grid) and ``gradcheck`` (finite-difference
verification of all analytic gradients). Every experiment is driven by one
JSON config file; ``--seed`` overrides the config's seed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .ablate import run_ablation
from .config import ExperimentConfig
from .evaluate import evaluate_checkpoint
from .gradcheck import run_gradient_checks
from .phantom import generate_dataset
from .train import train_experiment


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    n = args.n if args.n is not None else cfg.dataset.n
    phantom_cfg = replace(cfg.phantom, seed=cfg.seed)
    out = Path(args.out)
    manifest = generate_dataset(n, phantom_cfg, cfg.dataset.split, out)
    counts = {s: sum(1 for e in manifest["samples"] if e["split"] == s) for s in ("train", "val", "test")}
    print(f"wrote {n} cases to {out} (splits: {counts})")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    result = train_experiment(
        cfg,
        args.out,
        deterministic=args.deterministic,
        resume_from=args.resume,
        manifest_path=args.manifest,
    )
    print(f"training log: {result.log_path}")
    print(f"last checkpoint: {result.last_checkpoint}")
    print(f"best checkpoint: {result.best_checkpoint} (val DSC {result.best_val_dsc:.4f})")
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_checkpoint(
        args.checkpoint,
        args.manifest,
        args.split,
        args.out,
        overlays=args.overlays,
    )
    aggregate = report.aggregate()
    for class_id, stats in sorted(aggregate.items()):
        dsc_mean = stats["dsc_mean"]
        asd_mean = stats["asd_mean"]
        asd_text = f"{asd_mean:.3f}" if asd_mean is not None else "undefined"
        print(f"class {class_id}: DSC {dsc_mean:.4f}  ASD {asd_text} mm")
    print(f"reports written to {args.out}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    summary = run_ablation(cfg, args.out, seeds=args.seeds, deterministic=args.deterministic)
    deltas = summary["deltas"]
    sg = deltas["sg_effect_dsc_blurry"]
    soft = deltas["soft_contour_effect_asd_blurry"]
    print(f"blurry-class DSC delta from skip gating: {sg['mean']:+.4f} "
          f"(consistent sign: {sg['consistent_sign']})")
    print(f"blurry-class ASD delta from soft contours: {soft['mean']:+.4f} mm "
          f"(consistent sign: {soft['consistent_sign']})")
    print(f"table: {Path(args.out) / 'ablation.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    report = run_gradient_checks(seed=args.seed if args.seed is not None else 0)
    for line in report.format_lines():
        print(line)
    if args.out:
        report.to_json(args.out)
        print(f"report written to {args.out}")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgseg",
        description="Gated-skip 3D segmentation with boundary supervision: "
        "data generation, training, evaluation, ablation and gradient checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom dataset + manifest")
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    p.add_argument("--n", type=int, help="number of cases (default from config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--manifest", type=Path, help="dataset manifest (default from config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--resume", type=Path, help="checkpoint to resume from")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, bit-reproducible run")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--overlays", action="store_true", help="write mid-slice PGM overlays")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run the 4-way ablation grid")
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, help="randomization seed (default 0)")
    p.add_argument("--out", type=Path, help="write the JSON report here")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
