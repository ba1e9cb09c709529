"""Command-line entry point: ``gesturediff {prepare,train,synthesize,evaluate,ablate}``."""

import argparse
import logging
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .dataset import DatasetError
from .model import CheckpointError
from . import pipeline


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_updates(seed=args.seed)
    return cfg


def _n_list(text):
    try:
        values = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("step counts must be positive")
    return values


def build_parser():
    p = argparse.ArgumentParser(prog="gesturediff",
                                description="Speech-driven gesture synthesis with a diffusion model.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="run configuration (TOML or JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("prepare", help="build a training dataset from BVH/WAV pairs")
    common(sp, "dataset directory to write")

    sp = sub.add_parser("train", help="train a model on a prepared dataset")
    common(sp, "run directory for the checkpoint and logs")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--epochs", type=int, help="override train.max_epochs")

    sp = sub.add_parser("synthesize", help="generate a BVH clip for a WAV file")
    common(sp, "output BVH path or directory")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--audio", required=True, help="input WAV")
    sp.add_argument("--frames", type=int, help="number of 20 fps frames (default: whole clip)")

    sp = sub.add_parser("evaluate", help="score a checkpoint on the configured eval takes")
    common(sp, "report directory")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--runs", type=int)

    sp = sub.add_parser("ablate", help="train and time one model per diffusion step count")
    common(sp, "directory for ablation.tsv")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--n-steps", type=_n_list, required=True, help="e.g. 1,100,500")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--frames", type=int, default=40, help="frames per timed synthesis")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "prepare":
            print(pipeline.cmd_prepare(_config(args), args.out))
        elif args.command == "train":
            print(pipeline.cmd_train(_config(args), args.dataset, args.out, args.epochs))
        elif args.command == "synthesize":
            cfg = load_config(args.config) if args.config else None
            seed = 0 if args.seed is None else args.seed
            print(pipeline.cmd_synthesize(args.checkpoint, args.audio, args.out, args.frames,
                                          seed, cfg))
        elif args.command == "evaluate":
            cfg = _config(args) if args.config else None
            seed = 0 if args.seed is None else args.seed
            pipeline.cmd_evaluate(args.checkpoint, args.out, cfg, runs=args.runs, seed=seed)
            print(os.path.join(args.out, "report.txt"))
        elif args.command == "ablate":
            pipeline.cmd_ablate(_config(args), args.dataset, args.out, args.n_steps,
                                args.epochs, args.frames)
            print(os.path.join(args.out, "ablation.tsv"))
    except (ConfigError, DatasetError, CheckpointError, pipeline.PipelineError, OSError) as exc:
        print(f"gesturediff {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
