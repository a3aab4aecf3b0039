"""HTTP session service for the human-in-the-loop tuning protocol.

One session owns a tuner state and a maneuver; each round the service
simulates the two candidate parameter sets, serves their traces and
metrics, and accepts the engineer's preference plus stability judgments.
Sessions persist as single JSON files (plus trace CSVs) in the data
directory and survive restarts, including a crash between storing a
preference and simulating the next pair.  State-mutating endpoints accept
an idempotency key and replay their original response on retry.
"""

import json
import threading
import time
import uuid
from dataclasses import replace
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .config import RunConfig, default_config
from .mpc import CostConfig, IllConditionedCost, gains_for
from .plant import SimulationDiverged
from .scenario import FIXTURES, compute_metrics, fixture, run_scenario
from .tire import optimal_slip
from .tuner import (ParameterPoint, PreferenceRecord, SearchBounds,
                    SearchConverged, TuningSession)

API_VERSION = "slipbench/service/v1"

AWAITING = "awaiting_preference"
SIMULATING = "simulating"
CONVERGED = "converged"

PLOT_SERIES = ("kappa_worst", "kappa_ref", "kappa_hat", "t_motor", "v_x")
DOWNSAMPLE_BUCKETS = 400


def downsample_minmax(t: np.ndarray, y: np.ndarray,
                      buckets: int = DOWNSAMPLE_BUCKETS) -> tuple[list, list]:
    """Bucketed downsampling that keeps each bucket's extremes.

    Emits at most two samples per bucket (min and max, in time order) so
    narrow peaks survive plotting at any zoom level.
    """
    n = len(t)
    if n <= 2 * buckets:
        return list(map(float, t)), list(map(float, y))
    edges = np.linspace(0, n, buckets + 1).astype(int)
    ts, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        seg = y[lo:hi]
        i_min = lo + int(np.argmin(seg))
        i_max = lo + int(np.argmax(seg))
        for idx in sorted({i_min, i_max}):
            ts.append(float(t[idx]))
            ys.append(float(y[idx]))
    return ts, ys


class CreateSessionRequest(BaseModel):
    maneuver_id: str
    seed: int = 0
    pair_budget: int = Field(default=50, ge=1, le=500)
    p_range: tuple[float, float] | None = None
    q_range: tuple[float, float] | None = None
    horizon_range: tuple[int, int] | None = None
    idempotency_key: str | None = None


class PreferenceRequest(BaseModel):
    outcome: Literal["a_preferred", "b_preferred", "tie"]
    stable_a: bool = True
    stable_b: bool = True
    idempotency_key: str | None = None


class SessionService:
    """Session persistence plus the simulate/compare protocol."""

    def __init__(self, data_dir: Path, config: RunConfig | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or default_config()
        self._gains_cache: dict = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._kappa_star = optimal_slip(self.config.tire)

    # -- persistence -------------------------------------------------------

    def _path(self, session_id: str) -> Path:
        return self.data_dir / f"session-{session_id}.json"

    def _trace_path(self, session_id: str, side: str) -> Path:
        return self.data_dir / f"session-{session_id}-{side}.csv"

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _write(self, resource: dict) -> None:
        path = self._path(resource["id"])
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(resource, indent=2))
        tmp.replace(path)

    def _read(self, session_id: str) -> dict:
        path = self._path(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return json.loads(path.read_text())

    # -- candidate simulation ----------------------------------------------

    def _gains(self, point: ParameterPoint):
        key = (point.p_weight, point.q_weight, point.horizon)
        if key not in self._gains_cache:
            cost = CostConfig(p_weight=point.p_weight, q_weight=point.q_weight,
                              r_weight=1.0, horizon=point.horizon)
            self._gains_cache[key] = gains_for(self.config.vehicle, cost)
        return self._gains_cache[key]

    def _simulate(self, resource: dict, side: str, point: ParameterPoint) -> dict:
        maneuver = fixture(resource["maneuver_id"])
        maneuver = replace(maneuver, controller="mpc")
        try:
            trace = run_scenario(maneuver, self.config, gains=self._gains(point))
        except (SimulationDiverged, IllConditionedCost) as exc:
            self._trace_path(resource["id"], side).write_text("")
            return {"stable_auto": False, "failure": str(exc), "metrics": None,
                    "series": None}
        trace.save(self._trace_path(resource["id"], side))
        metrics = compute_metrics(trace, kappa_star=self._kappa_star)
        fold = np.where((trace["driver_torque"] < 0) | (trace["t_brake"] > 0), -1.0, 1.0)
        derived = {
            "kappa_worst": np.maximum(fold * trace["kappa_l"], fold * trace["kappa_r"]),
            "kappa_ref": fold * trace["kappa_ref"],
            "kappa_hat": trace["kappa_hat"],
            "t_motor": trace["t_motor"],
            "v_x": trace["v_x"],
        }
        series = {}
        for name in PLOT_SERIES:
            ts, ys = downsample_minmax(trace["t"], derived[name])
            series[name] = {"t": ts, "y": ys}
        return {"stable_auto": True, "failure": None,
                "metrics": metrics.as_dict(), "series": series}

    def _simulate_pair(self, resource: dict) -> None:
        session = TuningSession.from_json(resource["tuner"])
        try:
            ia, ib = session.next_pair()
        except SearchConverged:
            resource["status"] = CONVERGED
            resource["pair"] = None
            resource["tuner"] = session.to_json()
            self._touch(resource)
            self._write(resource)
            return
        resource["tuner"] = session.to_json()
        resource["status"] = SIMULATING
        resource["pair"] = {"index_a": ia, "index_b": ib, "a": None, "b": None}
        self._touch(resource)
        self._write(resource)   # crash after this point resumes the simulation

        result_a = self._simulate(resource, "a", session.points[ia])
        result_b = self._simulate(resource, "b", session.points[ib])
        resource["pair"]["a"] = result_a
        resource["pair"]["b"] = result_b
        resource["status"] = AWAITING
        self._touch(resource)
        self._write(resource)

    def _touch(self, resource: dict) -> None:
        resource["updated_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def _resume_if_needed(self, resource: dict) -> dict:
        if resource["status"] == SIMULATING:
            self._simulate_pair(resource)
            return self._read(resource["id"])
        return resource

    # -- endpoint bodies -----------------------------------------------------

    def create_session(self, req: CreateSessionRequest) -> dict:
        if req.maneuver_id not in FIXTURES:
            raise HTTPException(status_code=404,
                                detail=f"unknown maneuver fixture {req.maneuver_id!r}")
        index_path = self.data_dir / "idempotency.json"
        if req.idempotency_key:
            index = json.loads(index_path.read_text()) if index_path.exists() else {}
            if req.idempotency_key in index:
                return self.summary(index[req.idempotency_key])
        defaults = SearchBounds()
        try:
            bounds = SearchBounds(
                p_range=tuple(req.p_range) if req.p_range else defaults.p_range,
                q_range=tuple(req.q_range) if req.q_range else defaults.q_range,
                horizon_range=(tuple(req.horizon_range) if req.horizon_range
                               else defaults.horizon_range),
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session = TuningSession(bounds=bounds, seed=req.seed,
                                pair_budget=req.pair_budget)
        session_id = uuid.uuid4().hex[:12]
        resource = {
            "schema": API_VERSION,
            "id": session_id,
            "maneuver_id": req.maneuver_id,
            "status": SIMULATING,
            "tuner": session.to_json(),
            "pair": None,
            "processed_keys": {},
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "updated_at": None,
        }
        with self._lock(session_id):
            self._write(resource)
            self._simulate_pair(resource)
        if req.idempotency_key:
            index = json.loads(index_path.read_text()) if index_path.exists() else {}
            index[req.idempotency_key] = session_id
            index_path.write_text(json.dumps(index, indent=2))
        return self.summary(session_id)

    def summary(self, session_id: str) -> dict:
        with self._lock(session_id):
            resource = self._resume_if_needed(self._read(session_id))
        session = TuningSession.from_json(resource["tuner"])
        return {
            "id": resource["id"],
            "maneuver_id": resource["maneuver_id"],
            "status": resource["status"],
            "pair_index": len(session.records),
            "pair_budget": session.pair_budget,
            "points_evaluated": len(session.points),
            "created_at": resource["created_at"],
            "updated_at": resource["updated_at"],
        }

    def get_pair(self, session_id: str) -> dict:
        with self._lock(session_id):
            resource = self._resume_if_needed(self._read(session_id))
        if resource["status"] != AWAITING:
            raise HTTPException(
                status_code=409,
                detail=f"session is {resource['status']}, not {AWAITING}")
        session = TuningSession.from_json(resource["tuner"])
        pair = resource["pair"]
        ia, ib = pair["index_a"], pair["index_b"]
        return {
            "pair_index": len(session.records),
            "pair_budget": session.pair_budget,
            "point_a": session.points[ia].as_dict(),
            "point_b": session.points[ib].as_dict(),
            "metrics_a": pair["a"]["metrics"],
            "metrics_b": pair["b"]["metrics"],
            "series_a": pair["a"]["series"],
            "series_b": pair["b"]["series"],
            "stable_auto_a": pair["a"]["stable_auto"],
            "stable_auto_b": pair["b"]["stable_auto"],
            "failure_a": pair["a"]["failure"],
            "failure_b": pair["b"]["failure"],
        }

    def post_preference(self, session_id: str, req: PreferenceRequest) -> dict:
        with self._lock(session_id):
            resource = self._resume_if_needed(self._read(session_id))
            if req.idempotency_key and req.idempotency_key in resource["processed_keys"]:
                return resource["processed_keys"][req.idempotency_key]
            if resource["status"] == CONVERGED:
                raise HTTPException(status_code=409, detail="session already converged")
            if resource["status"] != AWAITING:
                raise HTTPException(status_code=409,
                                    detail=f"session is {resource['status']}")
            session = TuningSession.from_json(resource["tuner"])
            pair = resource["pair"]
            record = PreferenceRecord(
                index_a=pair["index_a"], index_b=pair["index_b"],
                outcome=req.outcome,
                stable_a=req.stable_a and pair["a"]["stable_auto"],
                stable_b=req.stable_b and pair["b"]["stable_auto"],
            )
            try:
                session.record(record)
            except ValueError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            resource["tuner"] = session.to_json()
            resource["pair"] = None
            resource["status"] = SIMULATING
            self._touch(resource)
            self._write(resource)   # the preference survives a crash here
            self._simulate_pair(resource)
            resource = self._read(session_id)
            response = {"status": resource["status"],
                        "pair_index": len(session.records)}
            if req.idempotency_key:
                resource["processed_keys"][req.idempotency_key] = response
                self._write(resource)
            return response

    def get_best(self, session_id: str) -> dict:
        with self._lock(session_id):
            resource = self._resume_if_needed(self._read(session_id))
        session = TuningSession.from_json(resource["tuner"])
        best = session.best_so_far()
        if best is None:
            return {"point": None, "index": None, "stable": None}
        index, point = best
        return {"point": point.as_dict(), "index": index,
                "stable": session.stability_of(index)}

    def get_trace(self, session_id: str, side: str) -> str:
        if side not in ("a", "b"):
            raise HTTPException(status_code=404, detail="trace side must be a or b")
        with self._lock(session_id):
            self._read(session_id)
            path = self._trace_path(session_id, side)
            if not path.exists():
                raise HTTPException(status_code=404, detail="trace not available")
            return path.read_text()


def create_app(data_dir: str | Path, config: RunConfig | None = None) -> FastAPI:
    service = SessionService(Path(data_dir), config)
    app = FastAPI(title="slipbench tuning service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.service = service

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        return service.create_session(req)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return service.summary(session_id)

    @app.get("/sessions/{session_id}/pair")
    def get_pair(session_id: str):
        return service.get_pair(session_id)

    @app.post("/sessions/{session_id}/preference")
    def post_preference(session_id: str, req: PreferenceRequest):
        return service.post_preference(session_id, req)

    @app.get("/sessions/{session_id}/best")
    def get_best(session_id: str):
        return service.get_best(session_id)

    @app.get("/sessions/{session_id}/trace/{side}.csv")
    def get_trace(session_id: str, side: str):
        return Response(content=service.get_trace(session_id, side),
                        media_type="text/csv")

    return app
