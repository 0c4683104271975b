"""HTTP service for live fatigue-testing campaigns.

Wraps the inference engine for lab use: create a session from an explicit
prior or from material features (when a GP model is loaded), ask for the
next recommended load, record real outcomes, and inspect the posterior
state.  Sessions persist as one JSON document each (write-ahead temp file +
atomic rename), and every response is recomputed from the persisted series,
so a crash never leaves derived numbers ahead of the recorded data.

Endpoints
---------
POST /sessions                       create (201)
POST /sessions/{id}/recommend        next load, ?method=entropy|map
POST /sessions/{id}/outcomes         record failure/runout
GET  /sessions/{id}                  snapshot
POST /sessions/{id}/close            finish the campaign
GET  /healthz                        liveness

Environment: DATA_DIR (session storage), BIND_ADDR (host:port for
``fatiguelab-serve``), GP_MODEL_PATH (optional, enables feature-based
priors).  Loads are decimal numbers in N; log-space quantities carry a
``_log10`` suffix.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .gp import GpModel, LoadType, MaterialFeatures, PredictiveNormal
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
    posterior_std,
)
from .model import DomainError, ExperimentSeries, Outcome
from .rng import derive_seed

SCHEMA_VERSION = 1
MAX_CURVE_POINTS = 1000
_LOAD_MATCH_RTOL = 1e-9


# --------------------------------------------------------------------------
# request bodies


class PriorBody(BaseModel):
    """Explicit prior: give (mean_log10, std_log10) or (mean_n, width_n)."""

    mean_log10: Optional[float] = None
    std_log10: Optional[float] = None
    mean_n: Optional[float] = None
    width_n: Optional[float] = None
    width_mapping: Literal["load_delta", "log10"] = "load_delta"
    sigma_fixed: float = Field(default=10.0**0.03, description="fixed scatter, > 1")


class FeaturesBody(BaseModel):
    v90: float
    edge_hardness: float
    load_type: Literal["bending", "stress", "strain"]
    load_ratio_r: float


class SessionConfigBody(BaseModel):
    discretization: Literal["none", "ten"] = "none"
    grid_points: int = Field(default=100_000, ge=3)
    entropy_samples: int = Field(default=10_000, ge=1)
    estimator: Literal["importance", "cross_entropy", "exact"] = "importance"
    acq_restarts: int = Field(default=8, ge=1)
    map_restarts: int = Field(default=8, ge=1)
    seed: int = 0


class CreateSessionBody(BaseModel):
    prior: Optional[PriorBody] = None
    features: Optional[FeaturesBody] = None
    sigma_fixed: Optional[float] = None  # used with the features path
    config: SessionConfigBody = SessionConfigBody()
    material_id: str = "unnamed"


class OutcomeBody(BaseModel):
    load: float
    outcome: Literal["failure", "runout"]
    idempotency_key: Optional[str] = None


# --------------------------------------------------------------------------
# persistence


class SessionStore:
    """One JSON document per session with per-session mutual exclusion."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry:
            return self._locks.setdefault(session_id, threading.Lock())

    def path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.json"

    def load(self, session_id: str) -> dict:
        path = self.path(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return json.loads(path.read_text())

    def save(self, doc: dict) -> None:
        path = self.path(doc["id"])
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc))
        os.replace(tmp, path)


# --------------------------------------------------------------------------
# session math


def _prior_from_doc(doc: dict) -> PriorSpec:
    p = doc["prior"]
    return PriorSpec(
        PredictiveNormal(p["mean_log10"], p["std_log10"]),
        FixedSigma(p["sigma_fixed"]),
    )


def _series_from_doc(doc: dict) -> ExperimentSeries:
    return ExperimentSeries.from_dict(doc["series"])


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _downsample_curve(grid) -> list[dict]:
    dens = grid.density()
    n = grid.n_points
    step = max(1, math.ceil(n / (MAX_CURVE_POINTS - 1)))
    idx = list(range(0, n, step))
    argmax = grid.argmax_index()
    if argmax not in idx:  # decimation must keep the posterior mode visible
        idx = sorted(set(idx) | {argmax})
        if len(idx) > MAX_CURVE_POINTS:
            spaced = [i for i in idx if i != argmax]
            drop = spaced[len(spaced) // 2]
            idx.remove(drop)
    return [
        {"mu_log10": float(grid.mu_log10[i]), "density": float(dens[i])} for i in idx
    ]


def _compute_state(doc: dict):
    prior = _prior_from_doc(doc)
    series = _series_from_doc(doc)
    cfg = doc["config"]
    est = map_estimate(prior, series, restarts=cfg["map_restarts"])
    grid = evaluate_grid(prior, series, n_points=cfg["grid_points"])
    spread = posterior_std(grid)
    return prior, series, est, grid, spread


def _snapshot(doc: dict, state=None) -> dict:
    _, series, est, grid, spread = state if state is not None else _compute_state(doc)
    return {
        "id": doc["id"],
        "schema_version": doc["schema_version"],
        "status": doc["status"],
        "material_id": doc["material_id"],
        "prior": doc["prior"],
        "provenance": doc["provenance"],
        "config": doc["config"],
        "series": doc["series"],
        "history": doc["history"],
        "pending": doc["pending"],
        "n_experiments": len(series),
        "map_estimate": {
            "mu_hat_n": est.mu_hat,
            "sigma_hat": est.sigma_hat,
            "log_posterior": est.log_posterior_at_map,
        },
        "posterior_std": {
            "std_log10": spread.std_log10,
            "std_load_n": spread.std_load_n,
            "mean_log10": spread.mean_log10,
        },
        "posterior_curve": _downsample_curve(grid),
    }


# --------------------------------------------------------------------------
# app


def create_app(data_dir=None, gp_model_path=None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get("DATA_DIR", "./fatiguelab_sessions"))
    gp_model_path = gp_model_path or os.environ.get("GP_MODEL_PATH")

    app = FastAPI(title="fatiguelab", version="0.1.0")
    store = SessionStore(data_dir)
    app.state.store = store
    app.state.gp_model = GpModel.load(gp_model_path) if gp_model_path else None

    @app.exception_handler(DomainError)
    async def _domain_error(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(DegeneratePosteriorError)
    async def _degenerate(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=409,
            content={
                "detail": (
                    f"degenerate posterior: {exc} -- the recorded outcomes contradict "
                    "the prior; create a session with a wider prior to proceed"
                )
            },
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions_dir": str(store.data_dir)}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        if (body.prior is None) == (body.features is None):
            raise HTTPException(
                status_code=422, detail="give exactly one of 'prior' or 'features'"
            )
        if body.prior is not None:
            p = body.prior
            if p.mean_log10 is not None and p.std_log10 is not None:
                mu_prior = PredictiveNormal(p.mean_log10, p.std_log10)
            elif p.mean_n is not None and p.width_n is not None:
                mu_prior = PriorSpec.from_load_scale(
                    p.mean_n, p.width_n, FixedSigma(p.sigma_fixed),
                    WidthMapping(p.width_mapping),
                ).mu_prior
            else:
                raise HTTPException(
                    status_code=422,
                    detail="prior needs (mean_log10, std_log10) or (mean_n, width_n)",
                )
            sigma_fixed = p.sigma_fixed
            provenance = {"type": "manual"}
        else:
            if app.state.gp_model is None:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        "no GP model is loaded (set GP_MODEL_PATH); supply an explicit "
                        "prior instead -- a broad one is a safe default"
                    ),
                )
            f = body.features
            features = MaterialFeatures(
                v90=f.v90,
                edge_hardness=f.edge_hardness,
                load_type=LoadType(f.load_type),
                load_ratio_r=f.load_ratio_r,
            )
            mu_prior = app.state.gp_model.predict(features)
            sigma_fixed = body.sigma_fixed or 10.0**0.03
            provenance = {"type": "gp_prediction", "features": f.model_dump()}

        doc = {
            "schema_version": SCHEMA_VERSION,
            "id": uuid.uuid4().hex,
            "status": "active",
            "material_id": body.material_id,
            "prior": {
                "mean_log10": mu_prior.mean_log10,
                "std_log10": mu_prior.std_log10,
                "sigma_fixed": sigma_fixed,
            },
            "provenance": provenance,
            "config": body.config.model_dump(),
            "series": ExperimentSeries.empty(body.material_id).to_dict(),
            "history": [],
            "pending": None,
            "idempotency": {},
        }
        snapshot = _snapshot(doc)  # validates the prior before persisting
        store.save(doc)
        return snapshot

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        with store.lock(session_id):
            return _snapshot(store.load(session_id))

    @app.post("/sessions/{session_id}/recommend")
    def recommend(session_id: str, method: Literal["entropy", "map"] = Query("map")):
        with store.lock(session_id):
            doc = store.load(session_id)
            if doc["status"] != "active":
                raise HTTPException(status_code=409, detail="session is closed")
            if doc["pending"] is not None:
                raise HTTPException(
                    status_code=409,
                    detail="a recommendation is already pending; record its outcome first",
                )
            prior, series, est, grid, spread = _compute_state(doc)
            cfg = doc["config"]
            if method == "map":
                load = acquire_map(est)
            else:
                load = acquire_entropy(
                    prior,
                    series,
                    est,
                    grid=grid,
                    n_entropy_samples=cfg["entropy_samples"],
                    estimator=EntropyEstimator(cfg["estimator"]),
                    rng_seed=derive_seed(cfg["seed"], len(series), len(doc["history"])),
                    restarts=cfg["acq_restarts"],
                )
            discretized = discretize_load(load, Discretization(cfg["discretization"]))
            entry = {
                "recommended_load": load,
                "discretized_load": discretized,
                "method": method,
                "outcome": None,
                "override": False,
                "map_mu_hat_n": est.mu_hat,
                "posterior_std_log10": spread.std_log10,
                "timestamp": _now(),
            }
            doc["history"].append(entry)
            doc["pending"] = {
                "history_index": len(doc["history"]) - 1,
                "recommended_load": load,
                "discretized_load": discretized,
                "method": method,
            }
            store.save(doc)
            return {"recommended_load": load, "discretized_load": discretized}

    @app.post("/sessions/{session_id}/outcomes")
    def record_outcome(session_id: str, body: OutcomeBody):
        with store.lock(session_id):
            doc = store.load(session_id)
            if doc["status"] != "active":
                raise HTTPException(status_code=409, detail="session is closed")
            key = body.idempotency_key
            if key is not None and key in doc["idempotency"]:
                return _snapshot(doc)  # replay: nothing is appended twice
            if body.load <= 0 or not math.isfinite(body.load):
                raise DomainError(f"load must be positive, got {body.load}")

            outcome = Outcome.from_string(body.outcome)
            series = _series_from_doc(doc).with_record(body.load, outcome)
            doc["series"] = series.to_dict()

            pending = doc["pending"]
            matches_pending = pending is not None and (
                math.isclose(body.load, pending["discretized_load"], rel_tol=_LOAD_MATCH_RTOL)
                or math.isclose(body.load, pending["recommended_load"], rel_tol=_LOAD_MATCH_RTOL)
            )
            state = _compute_state(doc)
            _, _, est, _, spread = state

            if matches_pending:
                entry = doc["history"][pending["history_index"]]
                entry["outcome"] = outcome.value
                entry["load_applied"] = body.load
                entry["map_mu_hat_n"] = est.mu_hat
                entry["posterior_std_log10"] = spread.std_log10
                entry["timestamp"] = _now()
                doc["pending"] = None
            else:
                doc["history"].append(
                    {
                        "recommended_load": None,
                        "discretized_load": None,
                        "method": None,
                        "outcome": outcome.value,
                        "load_applied": body.load,
                        "override": True,
                        "map_mu_hat_n": est.mu_hat,
                        "posterior_std_log10": spread.std_log10,
                        "timestamp": _now(),
                    }
                )
            if key is not None:
                doc["idempotency"][key] = len(series) - 1
            store.save(doc)
            return _snapshot(doc, state)

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str):
        with store.lock(session_id):
            doc = store.load(session_id)
            doc["status"] = "closed"
            store.save(doc)
            return {"id": session_id, "status": "closed"}

    return app


def serve() -> None:
    """Entry point for ``fatiguelab-serve``: uvicorn on BIND_ADDR."""
    import uvicorn

    bind = os.environ.get("BIND_ADDR", "127.0.0.1:8000")
    host, _, port = bind.rpartition(":")
    uvicorn.run(create_app(), host=host or "127.0.0.1", port=int(port))
