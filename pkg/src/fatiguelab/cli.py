"""Command-line runner for the convergence studies.

Subcommands
-----------
study run             one study cell -> summary/trajectory CSVs + manifest
study discretization  paired rounded/unrounded cell with shared random numbers
study failure-curve   tabulate the ground-truth failure-probability curve

``--profile paper`` uses publication-scale defaults (100 runs, 100k-point
grid); ``--profile ci`` is the desk-scale profile (20 runs, 10,001-point
grid) that preserves the ordinal findings in minutes.  Explicit flags beat
profile defaults.  Exit codes: 0 success, 2 configuration error, 3 degenerate
posterior abort when running with --strict-posterior.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from .inference import DegeneratePosteriorError, Discretization, EntropyEstimator, WidthMapping
from .model import DomainError, MaterialParams
from .study import (
    Method,
    StudyConfig,
    emit_failure_curve,
    run_discretization_study,
    run_study,
)


@dataclass(frozen=True)
class Profile:
    grid_points: int
    n_runs: int
    run_iters: int
    disc_iters: int
    entropy_samples: int
    acq_restarts: int
    map_restarts: int


PROFILES = {
    "paper": Profile(100_000, 100, 30, 25, 10_000, 8, 8),
    "ci": Profile(10_001, 20, 30, 25, 10_000, 4, 4),
}


def _add_common(p: argparse.ArgumentParser, default_method: bool = True) -> None:
    if default_method:
        p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--mu", type=float, default=400.0, help="ground-truth mean strength (N)")
    p.add_argument("--sigma", type=float, default=10.0**0.03, help="ground-truth scatter (>1)")
    p.add_argument("--misspec-pct", type=float, default=0.0)
    p.add_argument("--prior-width", type=float, default=10.0, help="prior width as a load in N")
    p.add_argument("--discretize", choices=["none", "ten"], default="none")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--entropy-samples", type=int, default=None)
    p.add_argument("--acq-restarts", type=int, default=None)
    p.add_argument("--map-restarts", type=int, default=None)
    p.add_argument(
        "--width-mapping", choices=[w.value for w in WidthMapping], default="load_delta"
    )
    p.add_argument(
        "--estimator",
        choices=[e.value for e in EntropyEstimator],
        default="importance",
        help="entropy estimator for the entropy acquisition",
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over runs")
    p.add_argument(
        "--strict-posterior",
        action="store_true",
        help="abort on degenerate posteriors instead of flagging the run",
    )
    p.add_argument("--profile", choices=sorted(PROFILES), default="ci")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--label", default=None, help="file-name stem override")


def _build_config(args, disc_study: bool = False) -> StudyConfig:
    profile = PROFILES[args.profile]
    default_iters = profile.disc_iters if disc_study else profile.run_iters
    return StudyConfig(
        truth=MaterialParams(args.mu, args.sigma),
        method=Method(args.method),
        mean_misspec_pct=args.misspec_pct,
        prior_width=args.prior_width,
        discretization=Discretization(args.discretize),
        n_runs=args.runs if args.runs is not None else profile.n_runs,
        n_iterations=args.iters if args.iters is not None else default_iters,
        seed=args.seed,
        grid_points=args.grid_points if args.grid_points is not None else profile.grid_points,
        entropy_samples=(
            args.entropy_samples
            if args.entropy_samples is not None
            else profile.entropy_samples
        ),
        acq_restarts=args.acq_restarts if args.acq_restarts is not None else profile.acq_restarts,
        map_restarts=args.map_restarts if args.map_restarts is not None else profile.map_restarts,
        width_mapping=WidthMapping(args.width_mapping),
        estimator=EntropyEstimator(args.estimator),
        allow_degenerate=not args.strict_posterior,
        n_jobs=args.jobs,
    )


def _cmd_run(args) -> int:
    config = _build_config(args)
    result = run_study(config)
    path = result.write(args.out, args.label)
    final = result.residual_mean[-1]
    print(
        f"{config.label()}: mean residual after {config.n_iterations} iterations = "
        f"{final:.2f} N ({int(result.divergent.sum())}/{config.n_runs} divergent runs)"
    )
    print(f"wrote {path}")
    return 0


def _cmd_discretization(args) -> int:
    config = _build_config(args, disc_study=True)
    result = run_discretization_study(config)
    path = result.write(args.out, args.label)
    print(
        f"{config.method.value}: final-iteration |mean diff| = "
        f"{abs(result.mean_diff[-1]):.3f} N"
    )
    print(f"wrote {path}")
    return 0


def _cmd_failure_curve(args) -> int:
    params = MaterialParams(args.mu, args.sigma)
    rows = emit_failure_curve(params, (args.lo, args.hi), args.n, path=args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="study", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one study cell")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_disc = sub.add_parser(
        "discretization", help="paired discretization study with common random numbers"
    )
    _add_common(p_disc)
    p_disc.set_defaults(func=_cmd_discretization)

    p_curve = sub.add_parser("failure-curve", help="tabulate the failure-probability curve")
    p_curve.add_argument("--mu", type=float, default=400.0)
    p_curve.add_argument("--sigma", type=float, default=10.0**0.03)
    p_curve.add_argument("--lo", type=float, default=300.0)
    p_curve.add_argument("--hi", type=float, default=530.0)
    p_curve.add_argument("--n", type=int, default=24)
    p_curve.add_argument("--out", required=True, help="output CSV file")
    p_curve.set_defaults(func=_cmd_failure_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegeneratePosteriorError as exc:
        print(f"degenerate posterior: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
