"""Convergence studies: sequential estimation methods vs the staircase benchmark.

A study cell fixes ground truth, a method, a prior misspecification, a prior
width, and a discretization rule, then repeats seeded campaigns and records
the absolute estimation error after every experiment.  Bayesian methods
iterate acquire -> discretize -> simulate -> append -> re-estimate; the
staircase arm follows its own protocol and re-analyzes the growing series
after every experiment (falling back to the initial load while the series is
not yet analyzable).

Prior means are the truth shifted by the misspecification percentage; prior
widths are quoted as loads in N and mapped to log10 standard deviations via
the configured ``WidthMapping``.  Runs that hit a degenerate posterior are
flagged divergent but stay in the statistics with their last usable
estimate, mirroring how such campaigns would be reported.

For the staircase arm under discretization, the protocol walks and analyzes
the nominal lattice levels while the *applied* (simulated) load is the
discretized value; discretization therefore perturbs outcomes, not the
level bookkeeping, which is how a rounded test rig behaves.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .inference import (
    DegeneratePosteriorError,
    Discretization,
    EntropyEstimator,
    FixedSigma,
    PriorSpec,
    WidthMapping,
    acquire_entropy,
    acquire_map,
    discretize_load,
    evaluate_grid,
    map_estimate,
)
from .model import DomainError, ExperimentSeries, MaterialParams, failure_probability
from .rng import derive_seed
from .simulator import SimulatorState, simulate
from .staircase import EstimatorMode, LevelLattice, StaircaseConfig, analyze_staircase, next_level


class Method(Enum):
    STAIRCASE = "staircase"
    ENTROPY = "entropy"
    MAP = "map"


@dataclass(frozen=True)
class StudyConfig:
    """One study cell plus the numerical knobs of the estimation stack."""

    truth: MaterialParams = MaterialParams(400.0, 10.0**0.03)
    method: Method = Method.MAP
    mean_misspec_pct: float = 0.0
    prior_width: float = 10.0
    discretization: Discretization = Discretization.NONE
    n_runs: int = 100
    n_iterations: int = 30
    seed: int = 0
    grid_points: int = 100_000
    entropy_samples: int = 10_000
    acq_restarts: int = 8
    map_restarts: int = 8
    width_mapping: WidthMapping = WidthMapping.LOAD_DELTA
    estimator: EntropyEstimator = EntropyEstimator.IMPORTANCE
    staircase_estimator: EstimatorMode = EstimatorMode.GEOMETRIC
    allow_degenerate: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_runs < 1 or self.n_iterations < 1:
            raise DomainError("n_runs and n_iterations must be >= 1")
        if self.mean_misspec_pct <= -100.0:
            raise DomainError("mean misspecification must keep the prior mean positive")
        if self.grid_points < 3:
            raise DomainError("grid_points must be >= 3")

    @property
    def prior_mean_n(self) -> float:
        return self.truth.mu_l * (1.0 + self.mean_misspec_pct / 100.0)

    def prior(self) -> PriorSpec:
        return PriorSpec.from_load_scale(
            self.prior_mean_n,
            self.prior_width,
            FixedSigma(self.truth.sigma_l),
            mapping=self.width_mapping,
        )

    def label(self) -> str:
        return (
            f"{self.method.value}_misspec{self.mean_misspec_pct:+g}"
            f"_width{self.prior_width:g}_disc-{self.discretization.value}"
        )


@dataclass
class ConvergenceResult:
    """Per-iteration residual statistics across the runs of one cell."""

    config: StudyConfig
    residual_mean: np.ndarray
    residual_std: np.ndarray
    trajectories: np.ndarray  # (n_runs, n_iterations) residuals
    mu_hats: np.ndarray  # (n_runs, n_iterations) estimates in N
    divergent: np.ndarray  # (n_runs,) bool
    wall_time_s: float

    def write(self, outdir, label: str | None = None) -> Path:
        """Write summary CSV, per-run trajectories CSV, and a JSON manifest."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        label = label or self.config.label()
        summary = outdir / f"{label}_summary.csv"
        with open(summary, "w") as fh:
            fh.write("iteration,mean_residual,std_residual\n")
            for i, (m, s) in enumerate(zip(self.residual_mean, self.residual_std), start=1):
                fh.write(f"{i},{m!r},{s!r}\n")
        with open(outdir / f"{label}_trajectories.csv", "w") as fh:
            fh.write("run,iteration,residual,mu_hat\n")
            for r in range(self.trajectories.shape[0]):
                for i in range(self.trajectories.shape[1]):
                    fh.write(f"{r},{i + 1},{self.trajectories[r, i]!r},{self.mu_hats[r, i]!r}\n")
        manifest = {
            "label": label,
            "method": self.config.method.value,
            "truth": {"mu_l": self.config.truth.mu_l, "sigma_l": self.config.truth.sigma_l},
            "mean_misspec_pct": self.config.mean_misspec_pct,
            "prior_width": self.config.prior_width,
            "width_mapping": self.config.width_mapping.value,
            "discretization": self.config.discretization.value,
            "n_runs": self.config.n_runs,
            "n_iterations": self.config.n_iterations,
            "seed": self.config.seed,
            "grid_points": self.config.grid_points,
            "entropy_samples": self.config.entropy_samples,
            "divergent_runs": int(self.divergent.sum()),
            "wall_time_s": self.wall_time_s,
        }
        (outdir / f"{label}_manifest.json").write_text(json.dumps(manifest, indent=1))
        return summary


def _run_bayesian(config: StudyConfig, run_idx: int):
    prior = config.prior()
    sim = SimulatorState(config.truth, derive_seed(config.seed, run_idx, 0))
    series = ExperimentSeries.empty(f"run{run_idx}")
    residuals = np.empty(config.n_iterations)
    mu_hats = np.empty(config.n_iterations)
    divergent = False

    est = map_estimate(prior, series, restarts=config.map_restarts)
    for t in range(config.n_iterations):
        if config.method is Method.MAP:
            load = acquire_map(est)
        else:
            try:
                grid = evaluate_grid(
                    prior, series, n_points=config.grid_points,
                    allow_degenerate=config.allow_degenerate,
                )
                if grid.is_degenerate:
                    raise DegeneratePosteriorError("degenerate acquisition grid")
                load = acquire_entropy(
                    prior,
                    series,
                    est,
                    grid=grid,
                    n_entropy_samples=config.entropy_samples,
                    estimator=config.estimator,
                    rng_seed=derive_seed(config.seed, run_idx, 1, t),
                    restarts=config.acq_restarts,
                )
            except DegeneratePosteriorError:
                if not config.allow_degenerate:
                    raise
                divergent = True
                load = est.mu_hat  # keep experimenting at the last estimate
        load = discretize_load(load, config.discretization)
        outcome, sim = simulate(sim, load)
        series = series.with_record(load, outcome)
        try:
            est = map_estimate(prior, series, restarts=config.map_restarts)
        except DegeneratePosteriorError:
            if not config.allow_degenerate:
                raise
            divergent = True  # keep the previous estimate
        residuals[t] = abs(config.truth.mu_l - est.mu_hat)
        mu_hats[t] = est.mu_hat
    return residuals, mu_hats, divergent


def _run_staircase(config: StudyConfig, run_idx: int):
    stair_cfg = StaircaseConfig(l_ini=config.prior_mean_n, d=config.truth.sigma_l)
    lattice = LevelLattice(stair_cfg)
    sim = SimulatorState(config.truth, derive_seed(config.seed, run_idx, 0))
    series = ExperimentSeries.empty(f"run{run_idx}")
    residuals = np.empty(config.n_iterations)
    mu_hats = np.empty(config.n_iterations)

    index = 0
    for t in range(config.n_iterations):
        nominal = lattice.level(index)
        applied = discretize_load(nominal, config.discretization)
        outcome, sim = simulate(sim, applied)
        series = series.with_record(nominal, outcome)
        index = next_level(index, outcome)
        analysis = analyze_staircase(series, stair_cfg, estimator=config.staircase_estimator)
        residuals[t] = abs(config.truth.mu_l - analysis.mu_hat)
        mu_hats[t] = analysis.mu_hat
    return residuals, mu_hats, False


def _run_one(config: StudyConfig, run_idx: int):
    if config.method is Method.STAIRCASE:
        return _run_staircase(config, run_idx)
    return _run_bayesian(config, run_idx)


def run_study(config: StudyConfig) -> ConvergenceResult:
    """Execute every run of one cell; bit-reproducible for a fixed config.

    Runs are independent (each owns its derived seed) and execute in
    parallel when ``config.n_jobs > 1``; the aggregation order is fixed, so
    parallelism does not change the result.
    """
    t0 = time.perf_counter()
    if config.n_jobs > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_one)(config, r) for r in range(config.n_runs)
        )
    else:
        rows = [_run_one(config, r) for r in range(config.n_runs)]
    trajectories = np.vstack([r[0] for r in rows])
    mu_hats = np.vstack([r[1] for r in rows])
    divergent = np.array([r[2] for r in rows], dtype=bool)
    return ConvergenceResult(
        config=config,
        residual_mean=trajectories.mean(axis=0),
        residual_std=trajectories.std(axis=0),
        trajectories=trajectories,
        mu_hats=mu_hats,
        divergent=divergent,
        wall_time_s=time.perf_counter() - t0,
    )


@dataclass
class DiscretizationStudyResult:
    """Common-random-number comparison of undiscretized vs rounded loads."""

    none_result: ConvergenceResult
    ten_result: ConvergenceResult
    mean_diff: np.ndarray  # per-iteration mean of paired residual differences
    se_diff: np.ndarray  # standard error of the paired differences

    def band(self, z: float = 2.0):
        return self.mean_diff - z * self.se_diff, self.mean_diff + z * self.se_diff

    def write(self, outdir, label: str | None = None) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        label = label or f"{self.none_result.config.method.value}_discretization"
        self.none_result.write(outdir, f"{label}_none")
        self.ten_result.write(outdir, f"{label}_ten")
        lo, hi = self.band()
        path = outdir / f"{label}_difference.csv"
        with open(path, "w") as fh:
            fh.write("iteration,mean_diff,se_diff,band_lo,band_hi\n")
            for i in range(self.mean_diff.size):
                fh.write(
                    f"{i + 1},{self.mean_diff[i]!r},{self.se_diff[i]!r},"
                    f"{lo[i]!r},{hi[i]!r}\n"
                )
        return path


def run_discretization_study(config: StudyConfig) -> DiscretizationStudyResult:
    """Run the same cell with and without rounding, sharing random numbers.

    Both arms use identical run seeds, so their simulator streams coincide
    draw-for-draw and the per-iteration residual differences isolate the
    effect of the rounding rule.
    """
    none_cfg = replace(config, discretization=Discretization.NONE)
    ten_cfg = replace(config, discretization=Discretization.TEN)
    none_res = run_study(none_cfg)
    ten_res = run_study(ten_cfg)
    diffs = none_res.trajectories - ten_res.trajectories
    mean_diff = diffs.mean(axis=0)
    se_diff = diffs.std(axis=0, ddof=1) / math.sqrt(config.n_runs) if config.n_runs > 1 else (
        np.zeros(config.n_iterations)
    )
    return DiscretizationStudyResult(none_res, ten_res, mean_diff, se_diff)


def emit_failure_curve(
    params: MaterialParams, load_range: tuple[float, float], n: int, path=None
):
    """Tabulate the failure-probability curve on an equidistant load grid.

    Returns the (load, probability) rows; when ``path`` is given they are
    also written as CSV with header ``load,failure_probability``.
    """
    lo, hi = load_range
    if n < 2:
        raise DomainError("need at least 2 points")
    if not (0 < lo < hi and math.isfinite(hi)):
        raise DomainError(f"invalid load range ({lo}, {hi})")
    loads = np.linspace(lo, hi, n)
    probs = failure_probability(params, loads)
    rows = list(zip(loads.tolist(), probs.tolist()))
    if path is not None:
        with open(path, "w") as fh:
            fh.write("load,failure_probability\n")
            for load, p in rows:
                fh.write(f"{load!r},{p!r}\n")
    return rows
