"""Command-line front end for the synthetic benchmark.

Subcommands:
  synth            train one (experiment, normalizer) cell over seeded runs
  ablate-lambda    adaptive search vs the fixed-strength grid
  ablate-batchsize batch-size sensitivity sweep
  gen-data         write dataset splits plus a manifest
  verify           run the fast oracle/property suites

Worker-pool size is taken from the REGBN_WORKERS environment variable
(default: one worker per CPU, capped at the run count).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import (
    ExperimentSpec,
    ablation_batchsize,
    ablation_lambda,
    run_matrix,
)
from .mlp import TrainConfig
from .synthetic import SynthParams, export_dataset


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {v}")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--experiment", choices=("I", "II"), default="I")
    p.add_argument("--runs", type=_positive_int, default=10)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--epochs", type=_nonneg_int, default=15)
    p.add_argument("--batch-size", type=_positive_int, default=50)
    p.add_argument("--lr", type=_nonneg_float, default=1e-3,
                   help="host model learning rate")
    p.add_argument("--lr-decay", type=_positive_float, default=1.0,
                   help="per-epoch learning-rate multiplier")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--n-per-group", type=_positive_int, default=5000,
                   help="training samples per group (test adds 10%%)")
    p.add_argument("--noise-std", type=_nonneg_float, default=0.1)
    p.add_argument("--out", required=True, help="output directory")


def _spec_from_args(args: argparse.Namespace, normalizer: str,
                    fixed_lambda: float | None = None) -> ExperimentSpec:
    train = TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        optimizer=args.optimizer,
    )
    synth = SynthParams(
        experiment=args.experiment,
        n_per_group=args.n_per_group,
        noise_std=args.noise_std,
    )
    return ExperimentSpec(
        experiment=args.experiment,
        normalizer=normalizer,
        fixed_lambda=fixed_lambda,
        runs=args.runs,
        base_seed=args.seed,
        train=train,
        synth=synth,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regbn", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="train one normalizer cell")
    _add_common(p_synth)
    p_synth.add_argument("--normalizer", choices=("none", "bn", "regbn", "regbn-fixed"),
                         default="none")
    p_synth.add_argument("--lambda", dest="fixed_lambda", type=_positive_float,
                         default=None, help="fixed strength for regbn-fixed")

    p_abl = sub.add_parser("ablate-lambda", help="adaptive vs fixed strengths")
    _add_common(p_abl)

    p_abs = sub.add_parser("ablate-batchsize", help="batch-size sweep")
    _add_common(p_abs)

    p_gen = sub.add_parser("gen-data", help="write dataset splits and a manifest")
    p_gen.add_argument("--experiment", choices=("I", "II"), default="I")
    p_gen.add_argument("--seed", type=_nonneg_int, default=0)
    p_gen.add_argument("--n-per-group", type=_positive_int, default=5000)
    p_gen.add_argument("--noise-std", type=_nonneg_float, default=0.1)
    p_gen.add_argument("--out", required=True)

    sub.add_parser("verify", help="run the oracle/property suites")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "verify":
        from .verify import run_all

        return 0 if run_all() else 1

    if args.command == "gen-data":
        params = SynthParams(
            experiment=args.experiment,
            n_per_group=args.n_per_group,
            noise_std=args.noise_std,
            rng_seed=args.seed,
        )
        manifest = export_dataset(args.out, params)
        print(f"wrote {manifest['train_count']} train / {manifest['test_count']} test "
              f"samples to {args.out} (reference accuracy "
              f"{manifest['reference_accuracy']:.3f})")
        return 0

    if args.command == "synth":
        if args.normalizer == "regbn-fixed" and args.fixed_lambda is None:
            print("error: --normalizer regbn-fixed requires --lambda", file=sys.stderr)
            return 2
        spec = _spec_from_args(args, args.normalizer, args.fixed_lambda)
        agg = run_matrix(spec, args.out)
        mean = agg["accuracy_mean"]
        std = agg["accuracy_std"]
        print(f"cell {spec.experiment}/{spec.normalizer}: "
              f"accuracy {mean:.4f} +- {std:.4f} over {agg['n_completed']} runs "
              f"(reference {agg['reference_accuracy']:.3f}); "
              f"{agg['n_failed']} failed")
        return 0 if agg["n_failed"] == 0 else 1

    if args.command == "ablate-lambda":
        spec = _spec_from_args(args, "regbn")
        report = ablation_lambda(spec, args.out)
        for name, cell in report["cells"].items():
            print(f"{name}: accuracy {cell['accuracy_mean']:.4f} +- {cell['accuracy_std']:.4f}")
        failed = sum(cell["n_failed"] for cell in report["cells"].values())
        return 0 if failed == 0 else 1

    if args.command == "ablate-batchsize":
        spec = _spec_from_args(args, "regbn")
        report = ablation_batchsize(spec, args.out)
        for name, cell in report["cells"].items():
            print(f"batch {name}: accuracy {cell['accuracy_mean']:.4f} "
                  f"+- {cell['accuracy_std']:.4f}")
        failed = sum(cell["n_failed"] for cell in report["cells"].values())
        return 0 if failed == 0 else 1

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
