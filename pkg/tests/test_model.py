"""Failure-probability model against a high-precision oracle, plus invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fatiguelab.model import (
    DomainError,
    ExperimentSeries,
    MaterialParams,
    Outcome,
    failure_probability,
    series_log_likelihood,
)

PARAMS = MaterialParams(400.0, 10.0**0.03)

# frozen from mpmath (50 digits): ncdf((log10(l) - log10(400)) / 0.03)
ORACLE_P_429 = 0.84452803334376714446
ORACLE_P_373 = 0.15583948618705065581
ORACLE_LOGLIK_F429_R373 = -0.33838996831404740717


def test_median_is_half():
    assert failure_probability(PARAMS, 400.0) == 0.5


def test_oracle_values():
    assert failure_probability(PARAMS, 429.0) == pytest.approx(ORACLE_P_429, rel=1e-12)
    assert failure_probability(PARAMS, 373.0) == pytest.approx(ORACLE_P_373, rel=1e-12)


def test_cdf_limits():
    assert failure_probability(PARAMS, 1e-12) == 0.0
    assert failure_probability(PARAMS, 1e12) == 1.0


def test_invalid_inputs_raise():
    with pytest.raises(DomainError):
        failure_probability(PARAMS, 0.0)
    with pytest.raises(DomainError):
        failure_probability(PARAMS, -3.0)
    with pytest.raises(DomainError):
        MaterialParams(-1.0, 10.0**0.03)
    with pytest.raises(DomainError):
        MaterialParams(400.0, 1.0)


@given(
    st.floats(min_value=1.0, max_value=1e5),
    st.floats(min_value=1.001, max_value=1e4),
)
@settings(max_examples=200)
def test_strictly_increasing_in_load(load, factor):
    p_lo = failure_probability(PARAMS, load)
    p_hi = failure_probability(PARAMS, load * factor)
    if 0.0 < p_lo and p_hi < 1.0:  # strict away from the saturated tails
        assert p_hi > p_lo
    else:
        assert p_hi >= p_lo


@given(st.floats(min_value=1.0, max_value=1e5))
@settings(max_examples=100)
def test_complement_is_exact(load):
    p = failure_probability(PARAMS, load)
    assert p + (1.0 - p) == 1.0


@given(
    st.floats(min_value=10.0, max_value=1e4),
    st.floats(min_value=0.01, max_value=100.0),
)
@settings(max_examples=100)
def test_scale_equivariance(load, c):
    scaled = MaterialParams(PARAMS.mu_l * c, PARAMS.sigma_l)
    assert failure_probability(PARAMS, load) == pytest.approx(
        failure_probability(scaled, load * c), rel=1e-9
    )


def test_empty_series_loglik_is_zero():
    assert series_log_likelihood(ExperimentSeries.empty(), PARAMS) == 0.0


def test_single_failure_at_median():
    series = ExperimentSeries.from_pairs([(400.0, Outcome.FAILURE)])
    assert series_log_likelihood(series, PARAMS) == pytest.approx(math.log(0.5), rel=1e-12)


def test_two_record_series_matches_oracle():
    series = ExperimentSeries.from_pairs(
        [(429.0, Outcome.FAILURE), (373.0, Outcome.RUNOUT)]
    )
    assert series_log_likelihood(series, PARAMS) == pytest.approx(
        ORACLE_LOGLIK_F429_R373, rel=1e-12
    )


def test_zero_probability_term_gives_neg_inf():
    # a runout at a load the model considers a certain failure
    series = ExperimentSeries.from_pairs([(1e9, Outcome.RUNOUT)])
    assert series_log_likelihood(series, PARAMS) == -math.inf


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=300.0, max_value=520.0), st.sampled_from(list(Outcome))
        ),
        max_size=8,
    )
)
@settings(max_examples=100)
def test_likelihood_factorizes_over_concatenation(pairs):
    k = len(pairs) // 2
    full = ExperimentSeries.from_pairs(pairs)
    left = ExperimentSeries.from_pairs(pairs[:k])
    right = ExperimentSeries.from_pairs(pairs[k:])
    assert series_log_likelihood(full, PARAMS) == pytest.approx(
        series_log_likelihood(left, PARAMS) + series_log_likelihood(right, PARAMS),
        rel=1e-12,
        abs=1e-12,
    )


def test_series_is_append_only_value_object():
    s0 = ExperimentSeries.empty("m1")
    s1 = s0.with_record(400.0, Outcome.FAILURE)
    assert len(s0) == 0 and len(s1) == 1
    assert s1.records[0].index == 0
    with pytest.raises(DomainError):
        ExperimentSeries.from_dict(
            {"material_id": "x", "records": [{"load": 5.0, "outcome": "failure", "index": 3}]}
        )


def test_series_dict_round_trip():
    s = ExperimentSeries.from_pairs(
        [(400.0, Outcome.FAILURE), (373.0, Outcome.RUNOUT)], material_id="steel-7"
    )
    assert ExperimentSeries.from_dict(s.to_dict()) == s


def test_array_evaluation_matches_scalar():
    loads = np.array([325.0, 373.0, 400.0, 429.0, 493.0])
    vec = failure_probability(PARAMS, loads)
    for load, p in zip(loads, vec):
        assert p == failure_probability(PARAMS, float(load))
