"""Command-line entry point: ``fastfca {simulate,train,separate,evaluate,bench}``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
import argparse
import json
import os
import sys

from .bench import machine_fingerprint, neural_vs_fastmnmf, write_bench
from .config import load_config
from .exceptions import ConfigError, FastFCAError
from .neural.model import NeuralFastFCAModel
from .pipeline import (
    evaluate_estimates,
    separate_manifest,
    simulate_dataset,
    train_from_manifest,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _common(p):
    p.add_argument("--config", metavar="PATH", help="INI file overriding the profile")
    p.add_argument("--seed", type=int, help="overrides scene and training seeds")
    p.add_argument("--out", metavar="DIR", required=True, help="output directory")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")


def build_parser():
    parser = argparse.ArgumentParser(prog="fastfca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a dataset of simulated scenes")
    _common(p)

    p = sub.add_parser("train", help="unsupervised training on a manifest's training split")
    _common(p)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("separate", help="separate a manifest's scenes into estimate WAVs")
    _common(p)
    p.add_argument("--manifest", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint", help="trained neural model")
    group.add_argument("--baseline", choices=("fastmnmf",))
    p.add_argument("--split", default="test", choices=("train", "test"))

    p = sub.add_parser("evaluate", help="SI-SDR report of estimates against references")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--estimates", required=True, help="estimates.jsonl written by separate")

    p = sub.add_parser("bench", help="time neural inference against FastMNMF")
    _common(p)
    p.add_argument("--checkpoint", help="trained neural model (default: untrained)")
    return parser


def run(args):
    cfg = load_config(args.config, args.profile, args.seed)
    os.makedirs(args.out, exist_ok=True)
    cfg.write(os.path.join(args.out, f"{args.command}_config.ini"))
    if args.command == "simulate":
        print(simulate_dataset(cfg, args.out))
    elif args.command == "train":
        ckpt, history = train_from_manifest(cfg, args.manifest, args.out)
        print(f"{ckpt}: {len(history)} steps, final ELBO {history[-1]['elbo']:.4f}")
    elif args.command == "separate":
        print(separate_manifest(cfg, args.manifest, args.out, checkpoint=args.checkpoint,
                                baseline=args.baseline, split=args.split))
    elif args.command == "evaluate":
        path, rows = evaluate_estimates(cfg, args.manifest, args.estimates, args.out)
        print(path)
    elif args.command == "bench":
        model = NeuralFastFCAModel.load(args.checkpoint) if args.checkpoint else None
        rows, ratio = neural_vs_fastmnmf(cfg, model)
        write_bench(os.path.join(args.out, "bench.tsv"), rows, ratio)
        with open(os.path.join(args.out, "machine.json"), "w") as fh:
            json.dump(machine_fingerprint(), fh, indent=2, sort_keys=True)
        for r in rows:
            print(f"{r.pipeline:<18}{r.scene_id:<12}{r.median:.4f} s")
        print(f"speed ratio (fastmnmf / neural): {ratio:.2f}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FastFCAError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
