"""Lab service: API flow, persistence replay, idempotency, state machine."""

import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from fatiguelab.gp import GpModel, KernelHyperparams, synthesize_training_data
from fatiguelab.inference import FixedSigma, PriorSpec, evaluate_grid, map_estimate, posterior_std
from fatiguelab.gp import PredictiveNormal
from fatiguelab.model import ExperimentSeries
from fatiguelab.service import create_app

GRID = 4001  # fast but still larger than the curve cap


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=tmp_path / "sessions")
    with TestClient(app) as c:
        yield c


def _create(client, **overrides):
    body = {
        "prior": {"mean_log10": math.log10(400.0), "std_log10": 0.05,
                  "sigma_fixed": 10**0.03},
        "config": {"grid_points": GRID, "entropy_samples": 2000,
                   "acq_restarts": 2, "map_restarts": 2},
        "material_id": "steel-x",
    }
    body.update(overrides)
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_create_session_initial_state(client):
    snap = _create(client)
    assert snap["status"] == "active"
    assert snap["n_experiments"] == 0
    assert snap["map_estimate"]["mu_hat_n"] == pytest.approx(400.0, rel=1e-6)
    assert snap["posterior_std"]["std_log10"] > 0
    curve = snap["posterior_curve"]
    assert 2 <= len(curve) <= 1000
    dens = [p["density"] for p in curve]
    peak = max(curve, key=lambda p: p["density"])
    assert peak["mu_log10"] == pytest.approx(math.log10(400.0), abs=2e-4)
    assert dens[0] < peak["density"]


def test_create_requires_exactly_one_prior_source(client):
    resp = client.post("/sessions", json={"material_id": "x"})
    assert resp.status_code == 422
    resp = client.post(
        "/sessions",
        json={
            "prior": {"mean_log10": 2.6, "std_log10": 0.05},
            "features": {"v90": 100, "edge_hardness": 300, "load_type": "stress",
                         "load_ratio_r": -1.0},
        },
    )
    assert resp.status_code == 422


def test_width_based_prior(client):
    snap = _create(
        client,
        prior={"mean_n": 400.0, "width_n": 10.0, "sigma_fixed": 10**0.03},
    )
    assert snap["prior"]["std_log10"] == pytest.approx(math.log10(1.025))


def test_features_without_model_is_conflict(client):
    resp = client.post(
        "/sessions",
        json={
            "features": {"v90": 100, "edge_hardness": 300, "load_type": "stress",
                         "load_ratio_r": -1.0},
            "config": {"grid_points": GRID},
        },
    )
    assert resp.status_code == 409
    assert "prior" in resp.json()["detail"]


def test_features_path_with_model(tmp_path):
    dataset = synthesize_training_data(3, n=20)
    hp = KernelHyperparams((0.4,) * 6, 1.0, 1.0, 1e-6)
    model_path = tmp_path / "gp.json"
    GpModel.condition(dataset, hp).save(model_path)
    app = create_app(data_dir=tmp_path / "sessions", gp_model_path=model_path)
    with TestClient(app) as client:
        f = dataset.features[0]
        resp = client.post(
            "/sessions",
            json={
                "features": {
                    "v90": f.v90,
                    "edge_hardness": f.edge_hardness,
                    "load_type": f.load_type.value,
                    "load_ratio_r": f.load_ratio_r,
                },
                "config": {"grid_points": GRID, "map_restarts": 2},
            },
        )
        assert resp.status_code == 201, resp.text
        snap = resp.json()
        # prior mean at a (nearly noiseless) training point ~ its target
        assert snap["prior"]["mean_log10"] == pytest.approx(
            math.log10(dataset.mu_l[0]), abs=5e-3
        )
        assert snap["provenance"]["type"] == "gp_prediction"


def test_malformed_features_rejected(tmp_path):
    dataset = synthesize_training_data(4, n=15)
    hp = KernelHyperparams((0.4,) * 6, 1.0, 1.0, 1e-6)
    model_path = tmp_path / "gp.json"
    GpModel.condition(dataset, hp).save(model_path)
    app = create_app(data_dir=tmp_path / "sessions", gp_model_path=model_path)
    with TestClient(app) as client:
        resp = client.post(
            "/sessions",
            json={
                "features": {"v90": -5.0, "edge_hardness": 300,
                             "load_type": "stress", "load_ratio_r": -1.0}
            },
        )
        assert resp.status_code == 422


def test_recommend_map_then_record_flow(client):
    snap = _create(client)
    sid = snap["id"]

    rec = client.post(f"/sessions/{sid}/recommend", params={"method": "map"})
    assert rec.status_code == 200
    load = rec.json()["recommended_load"]
    assert load == pytest.approx(400.0, rel=1e-6)
    assert rec.json()["discretized_load"] == load  # discretization none

    # a second recommendation while one is pending is a conflict
    assert client.post(f"/sessions/{sid}/recommend").status_code == 409

    out = client.post(
        f"/sessions/{sid}/outcomes",
        json={"load": load, "outcome": "failure", "idempotency_key": "k1"},
    )
    assert out.status_code == 200
    snap2 = out.json()
    assert snap2["n_experiments"] == 1
    assert snap2["pending"] is None
    assert snap2["history"][0]["outcome"] == "failure"
    assert snap2["history"][0]["override"] is False
    assert snap2["map_estimate"]["mu_hat_n"] < 400.0  # failure pushes down


def test_recommend_entropy(client):
    snap = _create(client)
    sid = snap["id"]
    rec = client.post(f"/sessions/{sid}/recommend", params={"method": "entropy"})
    assert rec.status_code == 200
    lo = 10 ** (math.log10(400.0) - 0.1)
    hi = 10 ** (math.log10(400.0) + 0.1)
    assert lo <= rec.json()["recommended_load"] <= hi


def test_discretization_in_session(client):
    snap = _create(
        client,
        prior={"mean_log10": math.log10(404.9), "std_log10": 0.05,
               "sigma_fixed": 10**0.03},
        config={"grid_points": GRID, "discretization": "ten", "map_restarts": 2},
    )
    sid = snap["id"]
    rec = client.post(f"/sessions/{sid}/recommend", params={"method": "map"}).json()
    assert rec["discretized_load"] == 400.0


def test_idempotent_outcome_recording(client):
    sid = _create(client)["id"]
    body = {"load": 400.0, "outcome": "runout", "idempotency_key": "abc"}
    first = client.post(f"/sessions/{sid}/outcomes", json=body).json()
    second = client.post(f"/sessions/{sid}/outcomes", json=body).json()
    assert first["n_experiments"] == second["n_experiments"] == 1


def test_override_outcome_is_flagged(client):
    sid = _create(client)["id"]
    client.post(f"/sessions/{sid}/recommend", params={"method": "map"})
    out = client.post(
        f"/sessions/{sid}/outcomes", json={"load": 390.0, "outcome": "runout"}
    )
    snap = out.json()
    # the pending recommendation was not answered; the override is separate
    assert snap["pending"] is not None
    assert snap["history"][-1]["override"] is True


def test_runout_far_below_support_barely_moves_map(client):
    sid = _create(client)["id"]
    before = client.get(f"/sessions/{sid}").json()["map_estimate"]["mu_hat_n"]
    snap = client.post(
        f"/sessions/{sid}/outcomes", json={"load": 1.0, "outcome": "runout"}
    ).json()
    grid_step_n = 400.0 * (10 ** (4 * 0.05 / (GRID - 1)) - 1)
    assert abs(snap["map_estimate"]["mu_hat_n"] - before) <= grid_step_n


def test_failure_above_support_never_raises_map(client):
    sid = _create(client)["id"]
    before = client.get(f"/sessions/{sid}").json()["map_estimate"]["mu_hat_n"]
    snap = client.post(
        f"/sessions/{sid}/outcomes", json={"load": 500.0, "outcome": "failure"}
    ).json()
    assert snap["map_estimate"]["mu_hat_n"] <= before + 1e-9


def test_contradictory_outcome_yields_actionable_conflict(client):
    sid = _create(
        client,
        prior={"mean_log10": math.log10(400.0), "std_log10": 0.002,
               "sigma_fixed": 10**0.03},
    )["id"]
    resp = client.post(
        f"/sessions/{sid}/outcomes", json={"load": 800.0, "outcome": "runout"}
    )
    assert resp.status_code == 409
    assert "wider prior" in resp.json()["detail"]
    # the contradictory outcome was not persisted
    assert client.get(f"/sessions/{sid}").json()["n_experiments"] == 0


def test_close_blocks_mutations(client):
    sid = _create(client)["id"]
    assert client.post(f"/sessions/{sid}/close").status_code == 200
    assert client.post(f"/sessions/{sid}/recommend").status_code == 409
    assert (
        client.post(
            f"/sessions/{sid}/outcomes", json={"load": 400.0, "outcome": "failure"}
        ).status_code
        == 409
    )
    assert client.get(f"/sessions/{sid}").json()["status"] == "closed"


def test_unknown_session_is_404(client):
    assert client.get("/sessions/nope").status_code == 404


def test_persisted_session_replays_identically(tmp_path):
    data_dir = tmp_path / "sessions"
    app = create_app(data_dir=data_dir)
    with TestClient(app) as client:
        sid = _create(client)["id"]
        client.post(f"/sessions/{sid}/recommend", params={"method": "map"})
        rec = client.get(f"/sessions/{sid}").json()["pending"]["discretized_load"]
        client.post(f"/sessions/{sid}/outcomes", json={"load": rec, "outcome": "failure"})
        client.post(
            f"/sessions/{sid}/outcomes", json={"load": 380.0, "outcome": "runout"}
        )
        snap = client.get(f"/sessions/{sid}").json()

    # simulate a restart: a fresh app over the same data directory
    app2 = create_app(data_dir=data_dir)
    with TestClient(app2) as client2:
        replayed = client2.get(f"/sessions/{sid}").json()
    assert replayed["map_estimate"]["mu_hat_n"] == pytest.approx(
        snap["map_estimate"]["mu_hat_n"], abs=1e-9
    )
    assert replayed["posterior_std"]["std_log10"] == pytest.approx(
        snap["posterior_std"]["std_log10"], abs=1e-9
    )

    # and the persisted document recomputes to the same numbers directly
    doc = json.loads((data_dir / f"{sid}.json").read_text())
    prior = PriorSpec(
        PredictiveNormal(doc["prior"]["mean_log10"], doc["prior"]["std_log10"]),
        FixedSigma(doc["prior"]["sigma_fixed"]),
    )
    series = ExperimentSeries.from_dict(doc["series"])
    est = map_estimate(prior, series, restarts=doc["config"]["map_restarts"])
    spread = posterior_std(evaluate_grid(prior, series, doc["config"]["grid_points"]))
    assert est.mu_hat == pytest.approx(snap["map_estimate"]["mu_hat_n"], abs=1e-9)
    assert spread.std_log10 == pytest.approx(
        snap["posterior_std"]["std_log10"], abs=1e-9
    )


def test_posterior_curve_is_capped_and_keeps_mode(client):
    sid = _create(client)["id"]
    client.post(f"/sessions/{sid}/outcomes", json={"load": 405.0, "outcome": "failure"})
    snap = client.get(f"/sessions/{sid}").json()
    curve = snap["posterior_curve"]
    assert len(curve) <= 1000
    # the snapshot's mode must be on the curve: its density is the maximum
    dens = np.array([p["density"] for p in curve])
    mus = np.array([p["mu_log10"] for p in curve])
    assert mus[int(np.argmax(dens))] == pytest.approx(
        math.log10(snap["map_estimate"]["mu_hat_n"]), abs=1e-4
    )


def test_atomic_persistence_leaves_no_temp_files(tmp_path):
    data_dir = tmp_path / "sessions"
    app = create_app(data_dir=data_dir)
    with TestClient(app) as client:
        sid = _create(client)["id"]
        client.post(f"/sessions/{sid}/outcomes", json={"load": 400.0, "outcome": "failure"})
    assert not list(data_dir.glob("*.tmp"))
    assert (data_dir / f"{sid}.json").exists()
