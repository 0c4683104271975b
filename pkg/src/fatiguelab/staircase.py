"""Up-and-down (staircase) test protocol, series validity rules, and estimators.

Load levels form a geometric lattice ``L_i = L_ini * d**i`` for integer
``i``.  In ``SEQUENTIAL_INTEGER`` mode each level is derived from the
previous *rounded* level (multiply or divide by ``d``, then round to the
nearest integer newton), which is how lab load tables are commonly built; in
``EXACT_GEOMETRIC`` mode levels are the exact powers.  Testing starts at
``i = 0``; a failure lowers the next level index by one, a runout raises it
by one.

A series is analyzable only if, after trimming a leading ramp, it (a)
revisits its first load level, (b) touches at least three levels, and
(c) contains at least two turning points.  Invalid series fall back to
``mu_hat = l_ini``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .model import DomainError, ExperimentSeries, Outcome
from .simulator import SimulatorState, simulate


class LevelRounding(Enum):
    EXACT_GEOMETRIC = "exact_geometric"
    SEQUENTIAL_INTEGER = "sequential_integer"


class EstimatorMode(Enum):
    """How the mean level index k_bar maps back to a load.

    GEOMETRIC places the estimate on the level lattice, ``L0 * d**k_bar``;
    LEVEL_RATIO multiplies the lowest level by the dimensionless mean index,
    ``L0 * k_bar``.  GEOMETRIC is the default: it is the variant whose
    estimates actually sit inside the tested load band (LEVEL_RATIO can fall
    below the lowest visited level whenever k_bar < 1).
    """

    GEOMETRIC = "geometric"
    LEVEL_RATIO = "level_ratio"


class InvalidityReason(Enum):
    INITIAL_LOAD_NOT_REVISITED = "initial_load_not_revisited"
    FEWER_THAN_THREE_LEVELS = "fewer_than_three_levels"
    FEWER_THAN_TWO_TURNING_POINTS = "fewer_than_two_turning_points"


@dataclass(frozen=True)
class StaircaseConfig:
    """Lattice definition: initial load, step factor > 1, rounding mode."""

    l_ini: float
    d: float
    level_rounding: LevelRounding = LevelRounding.SEQUENTIAL_INTEGER

    def __post_init__(self):
        if not (self.l_ini > 0 and math.isfinite(self.l_ini)):
            raise DomainError(f"l_ini must be positive, got {self.l_ini}")
        if not (self.d > 1 and math.isfinite(self.d)):
            raise DomainError(f"step factor d must exceed 1, got {self.d}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class LevelLattice:
    """Lazy bidirectional level table for a staircase configuration."""

    _MAX_INDEX = 100_000

    def __init__(self, config: StaircaseConfig):
        self.config = config
        if config.level_rounding is LevelRounding.SEQUENTIAL_INTEGER:
            self._levels = {0: float(_round_half_up(config.l_ini))}
        else:
            self._levels = {0: config.l_ini}
        self._lo = 0
        self._hi = 0

    def level(self, index: int) -> float:
        if abs(index) > self._MAX_INDEX:
            raise DomainError(f"level index {index} out of range")
        if self.config.level_rounding is LevelRounding.EXACT_GEOMETRIC:
            return self.config.l_ini * self.config.d ** index
        while self._hi < index:
            cur = self._levels[self._hi]
            nxt = _round_half_up(cur * self.config.d)
            if nxt <= cur:  # keep the lattice strictly increasing
                nxt = int(cur) + 1
            self._hi += 1
            self._levels[self._hi] = float(nxt)
        while self._lo > index:
            cur = self._levels[self._lo]
            nxt = _round_half_up(cur / self.config.d)
            if nxt >= cur:
                nxt = int(cur) - 1
            if nxt <= 0:
                raise DomainError("sequential lattice walked below 1 N")
            self._lo -= 1
            self._levels[self._lo] = float(nxt)
        return self._levels[index]

    def index_of(self, load: float) -> int:
        """Map a load back to its level index, within the rounding tolerance.

        Tolerance is 0.5 N for integer lattices and a relative 1e-9 for
        exact geometric ones; anything farther off-lattice is a domain error.
        """
        if load <= 0:
            raise DomainError(f"load must be positive, got {load}")
        guess = round(math.log(load / self.config.l_ini) / math.log(self.config.d))
        guess = max(-self._MAX_INDEX, min(self._MAX_INDEX, guess))
        if self.config.level_rounding is LevelRounding.EXACT_GEOMETRIC:
            for idx in (guess, guess - 1, guess + 1):
                if math.isclose(self.level(idx), load, rel_tol=1e-9):
                    return idx
        else:
            # rounding drift can shift the lattice a few steps from the
            # closed-form guess, so scan outward from it
            for offset in range(0, 64):
                for idx in {guess - offset, guess + offset}:
                    try:
                        level = self.level(idx)
                    except DomainError:
                        continue
                    if abs(level - load) <= 0.5:
                        return idx
        raise DomainError(f"load {load} N does not sit on the staircase lattice")


def generate_levels(config: StaircaseConfig, index_range: tuple[int, int]) -> list[float]:
    """Loads for every index in the inclusive ``index_range`` (must contain 0)."""
    lo, hi = index_range
    if lo > hi:
        raise DomainError("empty index range")
    if not (lo <= 0 <= hi):
        raise DomainError("index range must contain 0")
    lattice = LevelLattice(config)
    return [lattice.level(i) for i in range(lo, hi + 1)]


def next_level(current_level_index: int, outcome: Outcome) -> int:
    """Protocol rule: failure steps one level down, runout one level up."""
    return current_level_index - 1 if outcome is Outcome.FAILURE else current_level_index + 1


def run_staircase(
    config: StaircaseConfig,
    sim: SimulatorState,
    n_experiments: int,
    material_id: str = "staircase",
) -> tuple[ExperimentSeries, SimulatorState]:
    """Execute the protocol for ``n_experiments`` starting at level index 0."""
    if n_experiments < 1:
        raise DomainError("n_experiments must be >= 1")
    lattice = LevelLattice(config)
    series = ExperimentSeries.empty(material_id)
    index = 0
    for _ in range(n_experiments):
        load = lattice.level(index)
        outcome, sim = simulate(sim, load)
        series = series.with_record(load, outcome)
        index = next_level(index, outcome)
    return series, sim


@dataclass(frozen=True)
class StaircaseAnalysis:
    """Validity verdict and mean-strength estimate for one series."""

    l0: float
    level_counts: dict[int, int]
    mu_hat: float
    valid: bool
    invalidity_reasons: tuple[InvalidityReason, ...]
    mean_level_index: float = math.nan


def _trim_leading_ramp(indices: list[int]) -> int:
    """Smallest start offset whose first level index recurs later on.

    This is the cut applied to series whose initial levels were so far from
    the region of interest that they are never revisited (e.g. the monotone
    climb after starting far below the true strength).
    """
    for start in range(len(indices)):
        first = indices[start]
        if first in indices[start + 1 :]:
            return start
    return len(indices)


def analyze_staircase(
    series: ExperimentSeries,
    config: StaircaseConfig,
    estimator: EstimatorMode = EstimatorMode.GEOMETRIC,
) -> StaircaseAnalysis:
    """Check the validity rules and estimate the mean fatigue strength.

    Invalid series keep ``mu_hat = l_ini`` and carry the reasons; valid ones
    are trimmed to the revisited region, ``L0`` is the lowest level reached,
    ``l_k`` counts how often level ``k`` (indexed up from ``L0``) was tested,
    and the estimate follows the configured ``EstimatorMode`` applied to the
    count-weighted mean index ``k_bar = sum(k*l_k) / sum(l_k)``.
    """
    if len(series) == 0:
        raise DomainError("cannot analyze an empty series")
    lattice = LevelLattice(config)
    indices = [lattice.index_of(rec.load) for rec in series.records]

    start = _trim_leading_ramp(indices)
    if start >= len(indices):
        # nothing is revisited; report every rule the raw series also breaks
        outcomes = [rec.outcome for rec in series.records]
        reasons = [InvalidityReason.INITIAL_LOAD_NOT_REVISITED]
        if len(set(indices)) < 3:
            reasons.append(InvalidityReason.FEWER_THAN_THREE_LEVELS)
        if sum(1 for a, b in zip(outcomes, outcomes[1:]) if a is not b) < 2:
            reasons.append(InvalidityReason.FEWER_THAN_TWO_TURNING_POINTS)
        return StaircaseAnalysis(
            l0=config.l_ini,
            level_counts={},
            mu_hat=config.l_ini,
            valid=False,
            invalidity_reasons=tuple(reasons),
        )
    sub_idx = indices[start:]
    sub_out = [rec.outcome for rec in series.records[start:]]

    reasons: list[InvalidityReason] = []
    if len(set(sub_idx)) < 3:
        reasons.append(InvalidityReason.FEWER_THAN_THREE_LEVELS)
    turning_points = sum(1 for a, b in zip(sub_out, sub_out[1:]) if a is not b)
    if turning_points < 2:
        reasons.append(InvalidityReason.FEWER_THAN_TWO_TURNING_POINTS)
    if reasons:
        return StaircaseAnalysis(
            l0=config.l_ini,
            level_counts={},
            mu_hat=config.l_ini,
            valid=False,
            invalidity_reasons=tuple(reasons),
        )

    base = min(sub_idx)
    counts: dict[int, int] = {}
    for idx in sub_idx:
        counts[idx - base] = counts.get(idx - base, 0) + 1
    l0 = lattice.level(base)
    total = sum(counts.values())
    k_bar = sum(k * c for k, c in counts.items()) / total
    if estimator is EstimatorMode.GEOMETRIC:
        mu_hat = l0 * config.d ** k_bar
    else:
        mu_hat = l0 * k_bar
    return StaircaseAnalysis(
        l0=l0,
        level_counts=counts,
        mu_hat=mu_hat,
        valid=True,
        invalidity_reasons=(),
        mean_level_index=k_bar,
    )
