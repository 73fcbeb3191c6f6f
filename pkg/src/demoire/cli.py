"""Command-line interface.

Subcommands:

- ``train --config <file>``: train from a YAML config (keys mirror
  TrainConfig; nested ``model:``, ``data:``, ``loss:`` sections).
- ``evaluate --ckpt <file> --data <dir> [--single-frame] [--metrics list]``:
  score a checkpoint over a dataset split; writes JSONL, CSV, and figures.
- ``demo-swap <a.png> <b.png> <out>``: cross-combine the spectra of two
  images (amplitude of one, phase of the other) and write both results.
- ``synth-data --n ... --seed ...``: render the synthetic benchmark.
- ``ablate --model {1..6} --config <file>``: train and score one switch
  combination of the controlled component study.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import replace
from pathlib import Path

import yaml

from .data import DatasetSpec, make_synthetic_benchmark
from .reporting import write_ablation_table, write_report, write_training_curves
from .training import (
    ablate,
    config_from_dict,
    demo_swap,
    evaluate_checkpoint,
    train,
)


def load_config(path) -> "TrainConfig":
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return config_from_dict(raw)


def _print_summary(report) -> None:
    agg = report.aggregate()
    width = max((len(k) for k in agg), default=6)
    print(f"{'metric':<{width}}  {'mean':>10}  {'std':>10}")
    for k, (mean, std) in sorted(agg.items()):
        print(f"{k:<{width}}  {mean:>10.4f}  {std:>10.4f}")
    for k, v in sorted(report.per_sequence.items()):
        print(f"{k:<{width}}  {v:>10.4f}")
    print(report.comparability_label())


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    result = train(cfg, resume=args.resume)
    write_training_curves(result.log, result.out_dir)
    print(f"final checkpoint: {result.checkpoint}")
    return 0


def _cmd_evaluate(args) -> int:
    out_dir = Path(args.out) if args.out else Path(args.ckpt).parent / "eval"
    spec = DatasetSpec(
        root=args.data,
        split=args.split,
        mode="single" if args.single_frame else "triplet",
        crop=0,
        batch=args.batch,
    )
    report = evaluate_checkpoint(
        args.ckpt,
        spec,
        metrics=args.metrics,
        out_dir=out_dir,
        save_images=args.save_images,
    )
    paths = write_report(report, out_dir)
    _print_summary(report)
    print(f"report files: {', '.join(str(p) for p in paths.values())}")
    return 0


def _cmd_demo_swap(args) -> int:
    result = demo_swap(args.image_a, args.image_b, args.out)
    print(json.dumps(result, indent=2))
    return 0


def _cmd_synth_data(args) -> int:
    root = make_synthetic_benchmark(
        args.root,
        n_sequences=args.n,
        frames_per_seq=args.frames,
        size=args.size,
        seed=args.seed,
        split=args.split,
    )
    print(f"dataset written to {root}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    row = ablate(cfg, args.model)
    write_report(row.pop("report"), row["out_dir"], prefix=f"model_{args.model}")
    write_ablation_table([row], row["out_dir"])
    print(json.dumps({k: v for k, v in row.items() if k != "report"}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demoire",
        description="Video demoireing: training, evaluation, and demos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a YAML config")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--split", default="test")
    p.add_argument("--single-frame", action="store_true",
                   help="replicate the middle frame instead of using neighbors")
    p.add_argument("--metrics", default=None,
                   help="comma-separated subset, e.g. psnr,ssim,fsim,lpips,fvd")
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--save-images", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("demo-swap", help="amplitude/phase cross-combination demo")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("out", help="output directory")
    p.set_defaults(func=_cmd_demo_swap)

    p = sub.add_parser("synth-data", help="render the synthetic benchmark")
    p.add_argument("--n", type=int, required=True, help="number of sequences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--root", default="synthetic_data")
    p.add_argument("--split", default="train")
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("ablate", help="train and score one ablation variant")
    p.add_argument("--model", type=int, required=True, choices=range(1, 7))
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
