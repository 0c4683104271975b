"""Stochastic oracle for fatigue experiments.

Given ground-truth material parameters, an experiment at load ``l`` is a
Bernoulli draw with success (= failure) probability equal to the model's
failure probability at ``l``.  State is a value: each call consumes exactly
one uniform from a counter-based SplitMix64 stream and returns the advanced
state, so a fixed (seed, load sequence) always reproduces the same outcome
sequence and any prefix can be replayed for audit purposes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import DomainError, MaterialParams, Outcome, failure_probability
from .rng import uniform


@dataclass(frozen=True)
class SimulatorState:
    """Immutable simulator state: truth, stream seed, and draw counter."""

    truth: MaterialParams
    rng_seed: int
    draws: int = 0

    def __post_init__(self):
        if self.draws < 0:
            raise DomainError("draw counter must be non-negative")


def simulate(state: SimulatorState, load: float) -> tuple[Outcome, SimulatorState]:
    """Sample the outcome of one experiment at ``load`` (N).

    Draws u ~ Uniform(0, 1) from the state's stream; the specimen fails iff
    u < P(failure | load).  Returns the outcome and the advanced state.
    """
    p = failure_probability(state.truth, load)
    u = uniform(state.rng_seed, state.draws)
    outcome = Outcome.FAILURE if u < p else Outcome.RUNOUT
    return outcome, replace(state, draws=state.draws + 1)
