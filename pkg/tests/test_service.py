import json

import pytest
from fastapi.testclient import TestClient

from slipbench.service import SessionService, create_app, downsample_minmax

import numpy as np


def fast_session_body(**overrides):
    """Small horizons keep per-candidate gain builds in the millisecond range."""
    body = {
        "maneuver_id": "fig5-tuning",
        "seed": 3,
        "pair_budget": 4,
        "p_range": [10.0, 1000.0],
        "q_range": [10.0, 1000.0],
        "horizon_range": [10, 60],
    }
    body.update(overrides)
    return body


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path, None)
    with TestClient(app, raise_server_exceptions=False) as c:
        c.data_dir = tmp_path
        yield c


# -- downsampling -----------------------------------------------------------------

def test_downsample_preserves_peak():
    t = np.linspace(0.0, 10.0, 10_000)
    y = np.sin(2 * np.pi * 0.3 * t)
    y[5123] = 9.99                   # narrow spike
    ts, ys = downsample_minmax(t, y, buckets=50)
    assert max(ys) == pytest.approx(9.99)
    assert len(ys) <= 2 * 50


def test_downsample_short_series_passthrough():
    t = np.arange(10.0)
    y = np.arange(10.0)
    ts, ys = downsample_minmax(t, y, buckets=400)
    assert ts == list(t) and ys == list(y)


# -- session lifecycle -------------------------------------------------------------

def test_create_and_first_pair(client):
    resp = client.post("/sessions", json=fast_session_body())
    assert resp.status_code == 201
    body = resp.json()
    assert body["status"] == "awaiting_preference"
    assert body["pair_index"] == 0
    sid = body["id"]

    pair = client.get(f"/sessions/{sid}/pair").json()
    for key in ("point_a", "point_b", "metrics_a", "metrics_b",
                "series_a", "series_b"):
        assert key in pair
    assert set(pair["point_a"]) == {"p_weight", "q_weight", "horizon"}
    assert pair["series_a"]["kappa_worst"]["t"]
    # traces are served in the documented schema
    csv_a = client.get(f"/sessions/{sid}/trace/a.csv")
    assert csv_a.status_code == 200
    assert csv_a.text.startswith("# schema=slipbench/trace/v1")
    header = csv_a.text.splitlines()[1].split(",")
    assert header[:4] == ["t", "omega_l", "omega_r", "v_x"]


def test_unknown_fixture_404(client):
    resp = client.post("/sessions", json=fast_session_body(maneuver_id="nope"))
    assert resp.status_code == 404


def test_bad_bounds_rejected(client):
    resp = client.post("/sessions", json=fast_session_body(p_range=[100.0, 1.0]))
    assert resp.status_code == 422


def test_duplicate_create_distinct_ids(client):
    a = client.post("/sessions", json=fast_session_body()).json()["id"]
    b = client.post("/sessions", json=fast_session_body()).json()["id"]
    assert a != b


def test_create_idempotency_key_replays(client):
    body = fast_session_body(idempotency_key="create-1")
    a = client.post("/sessions", json=body).json()["id"]
    b = client.post("/sessions", json=body).json()["id"]
    assert a == b


def test_preference_flow_and_progression(client):
    sid = client.post("/sessions", json=fast_session_body()).json()["id"]
    first_pair = client.get(f"/sessions/{sid}/pair").json()
    resp = client.post(f"/sessions/{sid}/preference",
                       json={"outcome": "a_preferred"})
    assert resp.status_code == 200
    assert resp.json()["pair_index"] == 1
    second_pair = client.get(f"/sessions/{sid}/pair").json()
    assert second_pair["pair_index"] == 1
    assert (second_pair["point_a"], second_pair["point_b"]) != (
        first_pair["point_a"], first_pair["point_b"])
    best = client.get(f"/sessions/{sid}/best").json()
    assert best["point"] is not None


def test_preference_idempotent_retry(client):
    sid = client.post("/sessions", json=fast_session_body()).json()["id"]
    body = {"outcome": "b_preferred", "idempotency_key": "vote-1"}
    first = client.post(f"/sessions/{sid}/preference", json=body).json()
    replay = client.post(f"/sessions/{sid}/preference", json=body).json()
    assert first == replay
    assert client.get(f"/sessions/{sid}").json()["pair_index"] == 1


def test_invalid_outcome_rejected(client):
    sid = client.post("/sessions", json=fast_session_body()).json()["id"]
    resp = client.post(f"/sessions/{sid}/preference", json={"outcome": "meh"})
    assert resp.status_code == 422


def test_converged_session_conflicts(client):
    sid = client.post("/sessions", json=fast_session_body(pair_budget=1)).json()["id"]
    ok = client.post(f"/sessions/{sid}/preference", json={"outcome": "tie"})
    assert ok.json()["status"] == "converged"
    conflict = client.post(f"/sessions/{sid}/preference", json={"outcome": "tie"})
    assert conflict.status_code == 409
    pair = client.get(f"/sessions/{sid}/pair")
    assert pair.status_code == 409
    best = client.get(f"/sessions/{sid}/best")
    assert best.status_code == 200


def test_unknown_session_404(client):
    assert client.get("/sessions/doesnotexist").status_code == 404
    assert client.get("/sessions/doesnotexist/pair").status_code == 404


def test_unstable_flag_recorded(client):
    sid = client.post("/sessions", json=fast_session_body()).json()["id"]
    client.post(f"/sessions/{sid}/preference",
                json={"outcome": "a_preferred", "stable_a": True,
                      "stable_b": False})
    # the loser was marked unstable; best-so-far must be the stable winner
    best = client.get(f"/sessions/{sid}/best").json()
    assert best["stable"] is True


# -- persistence ------------------------------------------------------------------

def test_sessions_survive_restart(tmp_path):
    app1 = create_app(tmp_path, None)
    with TestClient(app1) as c1:
        sid = c1.post("/sessions", json=fast_session_body()).json()["id"]
        c1.post(f"/sessions/{sid}/preference", json={"outcome": "a_preferred"})
        before = c1.get(f"/sessions/{sid}/pair").json()

    app2 = create_app(tmp_path, None)
    with TestClient(app2) as c2:
        summary = c2.get(f"/sessions/{sid}").json()
        assert summary["pair_index"] == 1
        after = c2.get(f"/sessions/{sid}/pair").json()
        assert after["point_a"] == before["point_a"]
        assert after["point_b"] == before["point_b"]


def test_crash_between_store_and_simulate_resumes(tmp_path, monkeypatch):
    """The recorded preference survives a crash before the next pair is
    simulated; a fresh process resumes and completes the round."""
    app1 = create_app(tmp_path, None)
    with TestClient(app1, raise_server_exceptions=False) as c1:
        sid = c1.post("/sessions", json=fast_session_body()).json()["id"]
        service = app1.state.service

        def boom(resource, side, point):
            raise RuntimeError("simulated crash")
        monkeypatch.setattr(service, "_simulate", boom)
        resp = c1.post(f"/sessions/{sid}/preference", json={"outcome": "tie"})
        assert resp.status_code == 500
    monkeypatch.undo()

    # on-disk state: preference stored, next pair pending
    raw = json.loads((tmp_path / f"session-{sid}.json").read_text())
    assert raw["status"] == "simulating"
    assert len(json.loads(raw["tuner"])["records"]) == 1

    app2 = create_app(tmp_path, None)
    with TestClient(app2) as c2:
        summary = c2.get(f"/sessions/{sid}").json()
        assert summary["status"] == "awaiting_preference"
        assert summary["pair_index"] == 1
        pair = c2.get(f"/sessions/{sid}/pair").json()
        assert pair["metrics_a"] is not None


def test_diverging_candidate_marked_unstable(tmp_path, monkeypatch):
    from slipbench.plant import SimulationDiverged

    service = SessionService(tmp_path, None)

    def expode(maneuver, config, gains=None):
        raise SimulationDiverged("boom")
    monkeypatch.setattr("slipbench.service.run_scenario", expode)
    resource = {"id": "test", "maneuver_id": "fig5-tuning"}
    result = service._simulate(resource, "a", _point())
    assert result["stable_auto"] is False
    assert "boom" in result["failure"]


def _point():
    from slipbench.tuner import ParameterPoint
    return ParameterPoint(p_weight=100.0, q_weight=100.0, horizon=20)
