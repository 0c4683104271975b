"""Utility CLI for the GP prior: synthesize data, train, predict.

Typical flow for standing up the lab service with a GP-backed prior:

    fatiguelab-gp synth --seed 7 --out steels.csv
    fatiguelab-gp train --data steels.csv --out gp_model.json
    GP_MODEL_PATH=gp_model.json fatiguelab-serve
"""

from __future__ import annotations

import argparse
import sys

from .gp import (
    FatigueDataset,
    GpModel,
    LoadType,
    MaterialFeatures,
    synthesize_training_data,
    train_pipeline,
)
from .model import DomainError


def _cmd_synth(args) -> int:
    dataset = synthesize_training_data(args.seed, n=args.n, noise_std=args.noise)
    dataset.to_csv(args.out)
    print(f"wrote {len(dataset)} rows to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = FatigueDataset.from_csv(args.data)
    model, report = train_pipeline(
        dataset, seed=args.seed, folds=args.folds, restarts=args.restarts
    )
    model.save(args.out)
    best = report.cv.best
    print(
        f"selected {best.kernel.label()} (fold {best.fold}, cv R^2 {best.r2:.3f}); "
        f"held-out R^2 = {report.test_r2:.3f} on {report.n_test} rows"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = GpModel.load(args.model)
    features = MaterialFeatures(
        v90=args.v90,
        edge_hardness=args.hardness,
        load_type=LoadType(args.load_type),
        load_ratio_r=args.load_ratio,
    )
    pred = model.predict(features)
    print(
        f"log10 mean strength: {pred.mean_log10:.4f} +/- {pred.std_log10:.4f} "
        f"(mode {pred.mode_load:.1f} N)"
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fatiguelab-gp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic training dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=114)
    p.add_argument("--noise", type=float, default=0.015)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="cross-validate kernels and train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--v90", type=float, required=True)
    p.add_argument("--hardness", type=float, required=True)
    p.add_argument("--load-type", choices=[t.value for t in LoadType], required=True)
    p.add_argument("--load-ratio", type=float, default=-1.0)
    p.set_defaults(func=_cmd_predict)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
