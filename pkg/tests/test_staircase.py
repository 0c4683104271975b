"""Staircase protocol, level lattices, validity rules, estimators."""

import itertools

import pytest

from fatiguelab.model import DomainError, ExperimentSeries, MaterialParams, Outcome
from fatiguelab.simulator import SimulatorState
from fatiguelab.staircase import (
    EstimatorMode,
    InvalidityReason,
    LevelLattice,
    LevelRounding,
    StaircaseConfig,
    analyze_staircase,
    generate_levels,
    next_level,
    run_staircase,
)

TRUTH = MaterialParams(400.0, 10.0**0.03)
SEQ_CONFIG = StaircaseConfig(400.0, 10.0**0.03, LevelRounding.SEQUENTIAL_INTEGER)

# frozen from mpmath: 400 * 10**(0.03 * i)
GEO_LEVELS_0_2 = [400.0, 428.60772209504256696, 459.26144859875310062]


def test_sequential_integer_levels_reproduce_reference_set():
    levels = generate_levels(SEQ_CONFIG, (-3, 3))
    assert levels == [325.0, 348.0, 373.0, 400.0, 429.0, 460.0, 493.0]


def test_exact_geometric_powers_of_two():
    cfg = StaircaseConfig(400.0, 2.0, LevelRounding.EXACT_GEOMETRIC)
    assert generate_levels(cfg, (-1, 1)) == [200.0, 400.0, 800.0]


def test_exact_geometric_against_oracle():
    cfg = StaircaseConfig(400.0, 10.0**0.03, LevelRounding.EXACT_GEOMETRIC)
    levels = generate_levels(cfg, (0, 2))
    for got, want in zip(levels, GEO_LEVELS_0_2):
        assert got == pytest.approx(want, rel=1e-12)


def test_index_range_must_contain_zero():
    with pytest.raises(DomainError):
        generate_levels(SEQ_CONFIG, (1, 3))
    with pytest.raises(DomainError):
        generate_levels(SEQ_CONFIG, (2, 1))


def test_next_level_rules():
    assert next_level(0, Outcome.FAILURE) == -1
    assert next_level(0, Outcome.RUNOUT) == 1
    assert next_level(5, Outcome.FAILURE) == 4


def test_run_staircase_single_experiment_starts_at_initial_load():
    series, state = run_staircase(SEQ_CONFIG, SimulatorState(TRUTH, 3), 1)
    assert len(series) == 1
    assert series.records[0].load == 400.0
    assert state.draws == 1


def test_protocol_soundness_on_simulated_series():
    series, _ = run_staircase(SEQ_CONFIG, SimulatorState(TRUTH, 17), 25)
    lattice = LevelLattice(SEQ_CONFIG)
    indices = [lattice.index_of(r.load) for r in series.records]
    assert indices[0] == 0
    for idx, nxt, rec in zip(indices, indices[1:], series.records):
        assert nxt == next_level(idx, rec.outcome)
    reference = {325.0, 348.0, 373.0, 400.0, 429.0, 460.0, 493.0}
    assert set(r.load for r in series.records) <= reference | {
        lattice.level(i) for i in range(-10, 11)
    }


def test_all_runouts_walk_monotonically_up():
    far_truth = MaterialParams(1e6, 10.0**0.03)
    series, _ = run_staircase(SEQ_CONFIG, SimulatorState(far_truth, 1), 10)
    loads = [r.load for r in series.records]
    assert loads == sorted(loads) and len(set(loads)) == 10


def _walk_series(outcomes, config=SEQ_CONFIG):
    """Build the series the protocol would generate for an outcome pattern."""
    lattice = LevelLattice(config)
    series = ExperimentSeries.empty()
    idx = 0
    for o in outcomes:
        series = series.with_record(lattice.level(idx), o)
        idx = next_level(idx, o)
    return series


def _brute_force_valid(outcomes):
    """Independent validity checker: trims the leading never-revisited ramp,
    then requires a revisited first level, >= 3 levels, >= 2 turning points."""
    idx = 0
    indices = []
    for o in outcomes:
        indices.append(idx)
        idx += 1 if o is Outcome.RUNOUT else -1
    start = None
    for s in range(len(indices)):
        if indices[s] in indices[s + 1 :]:
            start = s
            break
    if start is None:
        return False
    sub_i = indices[start:]
    sub_o = outcomes[start:]
    levels_ok = len(set(sub_i)) >= 3
    turns = sum(1 for a, b in zip(sub_o, sub_o[1:]) if a is not b)
    return levels_ok and turns >= 2


@pytest.mark.parametrize("length", range(1, 9))
def test_validity_matches_exhaustive_oracle(length):
    for bits in itertools.product([Outcome.FAILURE, Outcome.RUNOUT], repeat=length):
        series = _walk_series(list(bits))
        analysis = analyze_staircase(series, SEQ_CONFIG)
        assert analysis.valid == _brute_force_valid(list(bits)), bits
        if not analysis.valid:
            assert analysis.mu_hat == SEQ_CONFIG.l_ini
            assert analysis.invalidity_reasons


def test_two_level_series_is_invalid():
    # alternating failure/runout bounces between two levels only
    outcomes = [Outcome.RUNOUT, Outcome.FAILURE] * 3
    analysis = analyze_staircase(_walk_series(outcomes), SEQ_CONFIG)
    assert not analysis.valid
    assert InvalidityReason.FEWER_THAN_THREE_LEVELS in analysis.invalidity_reasons
    assert analysis.mu_hat == 400.0


def test_monotone_series_has_no_turning_points():
    outcomes = [Outcome.RUNOUT] * 5
    analysis = analyze_staircase(_walk_series(outcomes), SEQ_CONFIG)
    assert not analysis.valid
    assert InvalidityReason.FEWER_THAN_TWO_TURNING_POINTS in analysis.invalidity_reasons
    assert InvalidityReason.INITIAL_LOAD_NOT_REVISITED in analysis.invalidity_reasons


def test_estimator_modes_on_pinned_counts():
    # walk: R R F F R F -> levels 0,1,2,1,0,1 from the lowest visited level
    outcomes = [
        Outcome.RUNOUT,
        Outcome.RUNOUT,
        Outcome.FAILURE,
        Outcome.FAILURE,
        Outcome.RUNOUT,
        Outcome.FAILURE,
    ]
    cfg = StaircaseConfig(373.0, 10.0**0.03, LevelRounding.SEQUENTIAL_INTEGER)
    series = _walk_series(outcomes, cfg)
    analysis = analyze_staircase(series, cfg, estimator=EstimatorMode.LEVEL_RATIO)
    assert analysis.valid
    assert analysis.l0 == 373.0
    assert analysis.level_counts == {0: 2, 1: 3, 2: 1}
    k_bar = 5.0 / 6.0
    assert analysis.mu_hat == pytest.approx(373.0 * k_bar)  # ~310.8, below L0
    geo = analyze_staircase(series, cfg, estimator=EstimatorMode.GEOMETRIC)
    assert geo.mu_hat == pytest.approx(373.0 * (10.0**0.03) ** k_bar)


def test_analysis_is_deterministic():
    series, _ = run_staircase(SEQ_CONFIG, SimulatorState(TRUTH, 23), 20)
    a = analyze_staircase(series, SEQ_CONFIG)
    b = analyze_staircase(series, SEQ_CONFIG)
    assert a == b


def test_off_lattice_load_rejected():
    series = ExperimentSeries.from_pairs([(387.0, Outcome.FAILURE)])
    with pytest.raises(DomainError):
        analyze_staircase(series, SEQ_CONFIG)


def test_empty_series_rejected():
    with pytest.raises(DomainError):
        analyze_staircase(ExperimentSeries.empty(), SEQ_CONFIG)
