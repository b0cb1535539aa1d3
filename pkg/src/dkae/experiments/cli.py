"""Command-line entry point: ``dkae <command> [--config FILE] [--out DIR] ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ExperimentConfig, apply_overrides, load_config
from .runners import (
    run_code_size_sweep,
    run_denoising,
    run_ideal_kernel_table,
    run_kpca_comparison,
    run_lambda_sweep,
)

COMMANDS = {
    "lambda-sweep": (run_lambda_sweep, "validation losses across the lambda grid"),
    "code-sweep": (run_code_size_sweep, "validation losses across code sizes"),
    "ideal-table": (run_ideal_kernel_table, "code loss of P, K_AE and C against the ideal kernel"),
    "kpca-compare": (run_kpca_comparison, "rank-m kPCA approximations of P vs the dkAE"),
    "denoise": (run_denoising, "kPCA+KRR vs dkAE+PCA denoising"),
}

# CLI flag -> config key
OVERRIDES = {
    "seed": "seed",
    "lam": "lam",
    "code_dim": "code_dim",
    "components": "components",
    "noise_std": "noise_std",
    "mnist_images": "mnist_images",
    "mnist_labels": "mnist_labels",
    "checkpoint": "checkpoint",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dkae", description="Deep kernelized autoencoder experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file (a previous run's manifest.txt also works)")
        p.add_argument("--out", default=f"results/{name}", help="output directory (default: %(default)s)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--lambda", dest="lam", type=float, help="alignment weight in [0, 1]")
        p.add_argument("--code-dim", type=int, help="code layer size")
        p.add_argument("--components", type=int, help="principal components for denoising")
        p.add_argument("--noise-std", type=float, help="test-set Gaussian noise std")
        p.add_argument("--mnist-images", help="IDX image file (uses MNIST instead of blobs)")
        p.add_argument("--mnist-labels", help="IDX label file")
        p.add_argument("--checkpoint", help="trained model to reuse (kpca-compare)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key; repeatable")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    values = {}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    for flag, key in OVERRIDES.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = v
    if "seed" in values and not 0 <= int(values["seed"]) < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    cfg = apply_overrides(cfg, values)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        run, _ = COMMANDS[args.command]
        run(cfg, args.out)
    except (ValueError, OSError) as exc:
        print(f"dkae {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
