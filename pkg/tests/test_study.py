"""Study harness: reproducibility, paired discretization runs, curve export, CLI."""

import json

import numpy as np
import pytest

import fatiguelab.cli as cli
from fatiguelab.inference import DegeneratePosteriorError, Discretization, WidthMapping
from fatiguelab.model import DomainError, MaterialParams
from fatiguelab.study import (
    ConvergenceResult,
    Method,
    StudyConfig,
    emit_failure_curve,
    run_discretization_study,
    run_study,
)

TRUTH = MaterialParams(400.0, 10.0**0.03)


def _fast(method, **kw):
    base = dict(
        truth=TRUTH,
        method=method,
        n_runs=3,
        n_iterations=5,
        seed=42,
        grid_points=1001,
        entropy_samples=1000,
        acq_restarts=2,
        map_restarts=2,
    )
    base.update(kw)
    return StudyConfig(**base)


@pytest.mark.parametrize("method", list(Method))
def test_result_shapes_and_nonnegativity(method):
    res = run_study(_fast(method))
    assert res.residual_mean.shape == (5,)
    assert res.residual_std.shape == (5,)
    assert res.trajectories.shape == (3, 5)
    assert (res.trajectories >= 0).all()
    assert res.divergent.shape == (3,)


@pytest.mark.parametrize("method", list(Method))
def test_bit_identical_reproducibility(method, tmp_path):
    a = run_study(_fast(method))
    b = run_study(_fast(method))
    np.testing.assert_array_equal(a.trajectories, b.trajectories)
    np.testing.assert_array_equal(a.mu_hats, b.mu_hats)
    pa = a.write(tmp_path / "a")
    pb = b.write(tmp_path / "b")
    assert pa.read_bytes() == pb.read_bytes()


def test_parallel_execution_matches_serial():
    serial = run_study(_fast(Method.MAP))
    parallel = run_study(_fast(Method.MAP, n_jobs=2))
    np.testing.assert_array_equal(serial.trajectories, parallel.trajectories)


def test_write_outputs(tmp_path):
    res = run_study(_fast(Method.STAIRCASE))
    res.write(tmp_path)
    label = res.config.label()
    summary = (tmp_path / f"{label}_summary.csv").read_text().splitlines()
    assert summary[0] == "iteration,mean_residual,std_residual"
    assert len(summary) == 6
    manifest = json.loads((tmp_path / f"{label}_manifest.json").read_text())
    assert manifest["n_runs"] == 3
    traj = (tmp_path / f"{label}_trajectories.csv").read_text().splitlines()
    assert len(traj) == 1 + 3 * 5


def test_discretization_pair_uses_common_random_numbers(tmp_path):
    cfg = _fast(Method.MAP, n_runs=2, n_iterations=4)
    result = run_discretization_study(cfg)
    assert result.none_result.config.discretization is Discretization.NONE
    assert result.ten_result.config.discretization is Discretization.TEN
    assert result.mean_diff.shape == (4,)
    # same seeds on both arms
    assert result.none_result.config.seed == result.ten_result.config.seed
    lo, hi = result.band()
    assert (lo <= result.mean_diff).all() and (result.mean_diff <= hi).all()
    path = result.write(tmp_path)
    assert path.exists()


def test_staircase_discretized_arm_still_analyzes():
    res = run_study(_fast(Method.STAIRCASE, discretization=Discretization.TEN,
                          n_iterations=12))
    assert np.isfinite(res.trajectories).all()


def test_misspecification_moves_the_prior():
    cfg = _fast(Method.MAP, mean_misspec_pct=75.0)
    assert cfg.prior_mean_n == pytest.approx(700.0)
    cfg = _fast(Method.MAP, mean_misspec_pct=-75.0)
    assert cfg.prior_mean_n == pytest.approx(100.0)
    with pytest.raises(DomainError):
        _fast(Method.MAP, mean_misspec_pct=-100.0)


def test_width_mapping_is_configurable():
    cfg = _fast(Method.MAP, width_mapping=WidthMapping.LOG10, prior_width=10.0)
    assert cfg.prior().mu_prior.std_log10 == pytest.approx(1.0)
    cfg = _fast(Method.MAP, width_mapping=WidthMapping.LOAD_DELTA, prior_width=10.0)
    assert cfg.prior().mu_prior.std_log10 == pytest.approx(np.log10(1.025))


def test_failure_curve_rows(tmp_path):
    path = tmp_path / "curve.csv"
    rows = emit_failure_curve(TRUTH, (300.0, 530.0), 231, path=path)
    assert len(rows) == 231
    by_load = dict(rows)
    assert by_load[400.0] == 0.5
    assert by_load[429.0] == pytest.approx(0.84452803334376714446, rel=1e-12)
    probs = [p for _, p in rows]
    assert all(b > a for a, b in zip(probs, probs[1:]))
    header = path.read_text().splitlines()[0]
    assert header == "load,failure_probability"


def test_failure_curve_validation():
    with pytest.raises(DomainError):
        emit_failure_curve(TRUTH, (300.0, 530.0), 1)
    with pytest.raises(DomainError):
        emit_failure_curve(TRUTH, (530.0, 300.0), 10)
    with pytest.raises(DomainError):
        emit_failure_curve(TRUTH, (-10.0, 300.0), 10)


# --------------------------------------------------------------------------
# CLI


def test_cli_run_staircase(tmp_path, capsys):
    rc = cli.main(
        [
            "run",
            "--method", "staircase",
            "--runs", "2",
            "--iters", "4",
            "--seed", "1",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "mean residual" in out
    assert list(tmp_path.glob("*_summary.csv"))


def test_cli_failure_curve(tmp_path):
    out = tmp_path / "curve.csv"
    rc = cli.main(["failure-curve", "--n", "24", "--out", str(out)])
    assert rc == 0
    assert out.exists()


def test_cli_discretization(tmp_path):
    rc = cli.main(
        [
            "discretization",
            "--method", "map",
            "--runs", "2",
            "--iters", "3",
            "--grid-points", "501",
            "--map-restarts", "2",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    assert list(tmp_path.glob("*_difference.csv"))


def test_cli_configuration_error_exit_code(tmp_path):
    rc = cli.main(
        [
            "run",
            "--method", "map",
            "--misspec-pct", "-100",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 2


def test_cli_unknown_method_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--method", "bogus", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_cli_degenerate_abort_exit_code(tmp_path, monkeypatch):
    def boom(config):
        raise DegeneratePosteriorError("forced by test")

    monkeypatch.setattr(cli, "run_study", boom)
    rc = cli.main(
        ["run", "--method", "map", "--strict-posterior", "--out", str(tmp_path)]
    )
    assert rc == 3
