"""Domain types and the log-normal failure-probability model.

A material's fatigue strength is modeled as log-normal with median ``mu_l``
(in N) and multiplicative scatter ``sigma_l`` (dimensionless, > 1, usually
written as a power of ten such as ``10**0.03``).  The chance that a specimen
breaks under cyclic load ``l`` is

    P(failure | l) = NormalCDF( (log10 l - log10 mu_l) / log10 sigma_l )

which every other module treats as the single canonical convention.  All
types here are immutable value objects and all functions are pure, so they
are safe under unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.special import ndtr as _ndtr


class DomainError(ValueError):
    """Raised when an argument violates a documented precondition."""


class Outcome(Enum):
    """The two possible results of a fatigue experiment."""

    FAILURE = "failure"
    RUNOUT = "runout"

    @classmethod
    def from_string(cls, text: str) -> "Outcome":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DomainError(f"unknown outcome {text!r}") from None


@dataclass(frozen=True)
class MaterialParams:
    """Log-normal fatigue-strength parameters.

    Attributes
    ----------
    mu_l : float
        Median fatigue strength in N, > 0.
    sigma_l : float
        Multiplicative scatter, > 1 (so ``log10(sigma_l) > 0``).
    """

    mu_l: float
    sigma_l: float

    def __post_init__(self):
        if not (self.mu_l > 0 and math.isfinite(self.mu_l)):
            raise DomainError(f"mu_l must be positive and finite, got {self.mu_l}")
        if not (self.sigma_l > 1 and math.isfinite(self.sigma_l)):
            raise DomainError(f"sigma_l must exceed 1, got {self.sigma_l}")

    @property
    def log10_mu(self) -> float:
        return math.log10(self.mu_l)

    @property
    def log10_sigma(self) -> float:
        return math.log10(self.sigma_l)


@dataclass(frozen=True)
class ExperimentRecord:
    """One (load, outcome) observation; ``index`` is its position in the series."""

    load: float
    outcome: Outcome
    index: int

    def __post_init__(self):
        if not (self.load > 0 and math.isfinite(self.load)):
            raise DomainError(f"load must be positive and finite, got {self.load}")
        if self.index < 0:
            raise DomainError("record index must be non-negative")


@dataclass(frozen=True)
class ExperimentSeries:
    """An ordered, append-only testing campaign for one material."""

    records: tuple[ExperimentRecord, ...] = ()
    material_id: str = "unnamed"

    def __post_init__(self):
        for pos, rec in enumerate(self.records):
            if rec.index != pos:
                raise DomainError(
                    f"record indices must be consecutive from 0, got {rec.index} at {pos}"
                )

    @classmethod
    def empty(cls, material_id: str = "unnamed") -> "ExperimentSeries":
        return cls((), material_id)

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[float, Outcome]], material_id: str = "unnamed"
    ) -> "ExperimentSeries":
        records = tuple(
            ExperimentRecord(load, outcome, i) for i, (load, outcome) in enumerate(pairs)
        )
        return cls(records, material_id)

    def with_record(self, load: float, outcome: Outcome) -> "ExperimentSeries":
        rec = ExperimentRecord(load, outcome, len(self.records))
        return ExperimentSeries(self.records + (rec,), self.material_id)

    def __len__(self) -> int:
        return len(self.records)

    def loads(self) -> np.ndarray:
        return np.array([r.load for r in self.records], dtype=float)

    def failure_mask(self) -> np.ndarray:
        return np.array(
            [r.outcome is Outcome.FAILURE for r in self.records], dtype=bool
        )

    def to_dict(self) -> dict:
        return {
            "material_id": self.material_id,
            "records": [
                {"load": r.load, "outcome": r.outcome.value, "index": r.index}
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSeries":
        records = tuple(
            ExperimentRecord(
                float(r["load"]), Outcome.from_string(r["outcome"]), int(r["index"])
            )
            for r in data.get("records", [])
        )
        return cls(records, str(data.get("material_id", "unnamed")))


def std_normal_cdf(z):
    """Standard normal CDF via the Cephes erf/erfc formulas (scipy.special).

    Scalar in, scalar out; ndarray in, ndarray out.  Full double precision on
    |z| <= 8; the lower tail stays representable down to z ~ -37.5, while the
    complement ``1 - cdf`` underflows to exactly 0 once z exceeds ~8.3.
    Callers treat those exact zeros as representable zero-probability events
    rather than errors.  Every module (including the compiled kernels) calls
    this same implementation, so probability underflow boundaries agree
    everywhere bit-for-bit.
    """
    if isinstance(z, np.ndarray):
        return _ndtr(z)
    return float(_ndtr(z))


def failure_probability(params: MaterialParams, load):
    """P(failure) at ``load`` (N) under ``params``; strictly increasing in load.

    Accepts a scalar or ndarray of loads.  P(runout) is ``1 -`` this value,
    exactly, so the two outcome probabilities always sum to 1.
    """
    if isinstance(load, np.ndarray):
        if np.any(load <= 0) or not np.all(np.isfinite(load)):
            raise DomainError("loads must be positive and finite")
        z = (np.log10(load) - params.log10_mu) / params.log10_sigma
        return std_normal_cdf(z)
    if not (load > 0 and math.isfinite(load)):
        raise DomainError(f"load must be positive and finite, got {load}")
    # np.log10 so scalar and array evaluations agree bit-for-bit
    z = (float(np.log10(load)) - params.log10_mu) / params.log10_sigma
    return std_normal_cdf(z)


def log_outcome_probability(params: MaterialParams, load: float, outcome: Outcome) -> float:
    """log P(outcome | load); -inf when the probability underflows to zero."""
    p = failure_probability(params, load)
    if outcome is Outcome.FAILURE:
        return math.log(p) if p > 0.0 else -math.inf
    return math.log1p(-p) if p < 1.0 else -math.inf


def series_log_terms(
    loads_log10: np.ndarray,
    failure_mask: np.ndarray,
    mu_log10: float,
    sigma_log10: float,
) -> np.ndarray:
    """Per-record outcome log-probabilities for pre-extracted series arrays.

    The array form shared by the likelihood, the posterior optimizer, and
    the grid backends; zero-probability outcomes yield -inf entries.
    """
    z = (loads_log10 - mu_log10) / sigma_log10
    p = _ndtr(z)
    with np.errstate(divide="ignore"):
        return np.where(failure_mask, np.log(p), np.log1p(-p))


def series_log_likelihood(series: ExperimentSeries, params: MaterialParams) -> float:
    """Joint log-likelihood of every outcome in ``series`` under ``params``.

    The empty series has log-likelihood 0.  Accumulation happens in log
    space; an outcome whose probability underflows to exactly zero makes the
    result -inf (a value, not an exception), so callers can detect
    contradictions between data and parameters.
    """
    if len(series) == 0:
        return 0.0
    terms = series_log_terms(
        np.log10(series.loads()),
        series.failure_mask(),
        params.log10_mu,
        params.log10_sigma,
    )
    return float(terms.sum())
