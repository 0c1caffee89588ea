import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from handtutor.service import create_app
from handtutor.teaching import ExperimentConfig


@pytest.fixture()
def client(tmp_path):
    cfg = ExperimentConfig(n=60, l=3, m=2, z=4)
    app = create_app(store_path=tmp_path / "sessions.jsonl", cfg=cfg)
    with TestClient(app) as tc:
        tc.store_path = tmp_path / "sessions.jsonl"
        yield tc


def _stroke(points, t0=0.0, dt=0.02):
    return {
        "samples": [
            {"t": t0 + i * dt, "x": float(x), "y": float(y)} for i, (x, y) in enumerate(points)
        ]
    }


def _writing_for(client, char_id, offset=(0.0, 0.0), samples_per_stroke=40):
    chars = {c["id"]: c for c in client.get("/characters").json()["characters"]}
    strokes = []
    t0 = 0.0
    for stroke in chars[char_id]["strokes"]:
        pts = np.asarray(stroke, dtype=float)
        pts = pts / 100.0 * 0.3 + np.asarray(offset)  # abstract units -> meters
        dense = []
        for i in range(samples_per_stroke):
            s = i / (samples_per_stroke - 1) * (len(pts) - 1)
            lo = int(math.floor(s))
            hi = min(lo + 1, len(pts) - 1)
            frac = s - lo
            dense.append(pts[lo] * (1 - frac) + pts[hi] * frac)
        strokes.append(_stroke(dense, t0=t0))
        t0 += 1.0
    return strokes


def test_health(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json()["status"] == "ready"


def test_create_session_and_unknown_character(client):
    r = client.post("/sessions", json={"character_id": "s1_line"})
    assert r.status_code == 200
    body = r.json()
    assert body["phase"] == "PRETEST"
    assert body["session_id"]

    r2 = client.post("/sessions", json={"character_id": "zzz"})
    assert r2.status_code == 404

    r3 = client.post("/sessions", json={"character_id": "s1_line"})
    assert r3.json()["session_id"] != body["session_id"]


def test_pretest_flow_and_phase_advance(client):
    sid = client.post("/sessions", json={"character_id": "s1_line"}).json()["session_id"]
    writing = _writing_for(client, "s1_line")
    for i in range(2):
        r = client.post(f"/sessions/{sid}/writings", json={"strokes": writing})
        assert r.status_code == 200
        assert r.json()["phase"] == "PRETEST"
    r = client.post(f"/sessions/{sid}/writings", json={"strokes": writing})
    body = r.json()
    assert body["phase"] == "TEACHING"
    assert "initial_stiffness" in body
    assert all(v >= 200.0 for v in body["initial_stiffness"])


def test_writing_rejected_in_teaching_phase(client):
    sid = client.post("/sessions", json={"character_id": "s1_line"}).json()["session_id"]
    writing = _writing_for(client, "s1_line")
    for _ in range(3):
        client.post(f"/sessions/{sid}/writings", json={"strokes": writing})
    r = client.post(f"/sessions/{sid}/writings", json={"strokes": writing})
    assert r.status_code == 409


def test_malformed_point_named(client):
    sid = client.post("/sessions", json={"character_id": "s1_line"}).json()["session_id"]
    bad = [{"samples": [{"t": 0.0, "x": 0.1, "y": 0.1}, {"t": 0.1, "x": "oops", "y": 0.2}]}]
    r = client.post(f"/sessions/{sid}/writings", json={"strokes": bad})
    assert r.status_code == 422
    assert "stroke 0" in r.json()["detail"]


def test_single_point_stroke_rejected(client):
    sid = client.post("/sessions", json={"character_id": "s1_line"}).json()["session_id"]
    bad = [{"samples": [{"t": 0.0, "x": 0.1, "y": 0.1}]}]
    r = client.post(f"/sessions/{sid}/writings", json={"strokes": bad})
    assert r.status_code == 422


def _advance_to_teaching(client, char_id="s1_line", offset=(0.01, 0.0)):
    sid = client.post("/sessions", json={"character_id": char_id}).json()["session_id"]
    writing = _writing_for(client, char_id, offset=offset)
    for _ in range(3):
        r = client.post(f"/sessions/{sid}/writings", json={"strokes": writing})
    assert r.json()["phase"] == "TEACHING"
    return sid


def test_teaching_step_payload(client):
    sid = _advance_to_teaching(client)
    r = client.get(f"/sessions/{sid}/teaching-step")
    assert r.status_code == 200
    body = r.json()
    assert body["iteration"] == 1
    assert len(body["strokes"]) == 1
    assert body["via_points"][0]["count_interior"] >= 1
    assert len(body["impedance"]["k_d"]) == 2
    # idempotent: repeated get without writing in between
    again = client.get(f"/sessions/{sid}/teaching-step").json()
    assert again == body


def test_teaching_step_wrong_phase(client):
    sid = client.post("/sessions", json={"character_id": "s1_line"}).json()["session_id"]
    r = client.get(f"/sessions/{sid}/teaching-step")
    assert r.status_code == 409


def _stream_iteration(client, sid, follow_guide=True, error=0.0, rate_hz=60.0):
    """Drive one guided iteration over the websocket; returns per-sample replies."""
    step = client.get(f"/sessions/{sid}/teaching-step").json()
    replies = []
    with client.websocket_connect(f"/sessions/{sid}/guidance") as ws:
        for si, stroke in enumerate(step["strokes"]):
            ts = stroke["timestamps"]
            pts = stroke["points"]
            n = len(ts)
            for i in range(n):
                x, y = pts[i]
                if not follow_guide:
                    x += error
                ws.send_json({"kind": "sample", "stroke": si, "t": ts[i], "x": x, "y": y})
                replies.append(ws.receive_json())
        ws.send_json({"kind": "complete"})
        done = ws.receive_json()
    return replies, done


def test_guidance_zero_correction_on_guide(client):
    sid = _advance_to_teaching(client)
    replies, done = _stream_iteration(client, sid, follow_guide=True)
    mags = [math.hypot(*r["correction"]) for r in replies if "correction" in r]
    assert max(mags) < 1e-9
    assert done["iteration"] == 1


def test_guidance_correction_proportional_to_stiffness(client):
    sid = _advance_to_teaching(client)
    step = client.get(f"/sessions/{sid}/teaching-step").json()
    k_d = step["impedance"]["k_d"][0]
    with client.websocket_connect(f"/sessions/{sid}/guidance") as ws:
        t0 = step["strokes"][0]["timestamps"][0]
        gx, gy = step["strokes"][0]["points"][0]
        ws.send_json({"kind": "sample", "stroke": 0, "t": t0, "x": gx + 0.01, "y": gy})
        reply = ws.receive_json()
    assert np.isclose(reply["correction"][0], -k_d * 0.01)
    assert abs(reply["correction"][1]) < 1e-12


def test_guidance_out_of_order_samples_dropped(client):
    sid = _advance_to_teaching(client)
    step = client.get(f"/sessions/{sid}/teaching-step").json()
    ts = step["strokes"][0]["timestamps"]
    pts = step["strokes"][0]["points"]
    with client.websocket_connect(f"/sessions/{sid}/guidance") as ws:
        ws.send_json({"kind": "sample", "stroke": 0, "t": ts[5], "x": pts[5][0], "y": pts[5][1]})
        ws.receive_json()
        ws.send_json({"kind": "sample", "stroke": 0, "t": ts[1], "x": pts[1][0], "y": pts[1][1]})
        reply = ws.receive_json()
    assert reply.get("dropped") is True


def test_full_session_improving_writer(client):
    char_id = "s1_line"
    sid = client.post("/sessions", json={"character_id": char_id}).json()["session_id"]
    sloppy = _writing_for(client, char_id, offset=(0.02, 0.01))
    # rotate the pretest writings slightly so they differ from the reference
    chars = {c["id"]: c for c in client.get("/characters").json()["characters"]}
    pts = np.asarray(chars[char_id]["strokes"][0], dtype=float) / 100.0 * 0.3
    theta = 0.25
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    center = pts.mean(axis=0)
    rotated = (pts - center) @ rot.T + center
    dense = [rotated[int(i / 39 * (len(rotated) - 1))] for i in range(40)]
    pre = [_stroke(dense)]
    for _ in range(3):
        r = client.post(f"/sessions/{sid}/writings", json={"strokes": pre})
    assert r.json()["phase"] == "TEACHING"

    for _ in range(2):  # cfg.m == 2
        _, done = _stream_iteration(client, sid, follow_guide=True)
    assert done["phase"] == "EVALUATION"

    # evaluation: the writer now writes exactly the reference (improved)
    good = _writing_for(client, char_id)
    for _ in range(3):
        r = client.post(f"/sessions/{sid}/writings", json={"strokes": good})
    assert r.json()["phase"] == "DONE"

    report = client.get(f"/sessions/{sid}/report").json()
    assert report["m2"]["improvement_percent"] > 0
    assert len(report["stiffness_trace"]) == 2
    assert len(report["mean_correction_per_iteration"]) == 2


def test_report_unavailable_before_done(client):
    sid = _advance_to_teaching(client)
    r = client.get(f"/sessions/{sid}/report")
    assert r.status_code == 409
    r2 = client.get("/sessions/nope/report")
    assert r2.status_code == 404


def test_resampling_rate_independence(client):
    # the same geometry sampled at 30 Hz vs 120 Hz yields nearly identical metrics
    char_id = "s2_cross"
    scores = []
    for samples in (30, 120):
        sid = client.post("/sessions", json={"character_id": char_id}).json()["session_id"]
        writing = _writing_for(client, char_id, offset=(0.015, 0.0), samples_per_stroke=samples)
        for _ in range(3):
            client.post(f"/sessions/{sid}/writings", json={"strokes": writing})
        app_service = client.app.state.service
        session = app_service.get(sid)
        from handtutor.metrics import metric_m1, concat_writing

        score = metric_m1(concat_writing(session.pretest[0]), concat_writing(session.reference))
        scores.append(score.value)
    assert abs(scores[0] - scores[1]) < 1e-3


def test_event_log_replay_reproduces_state(client):
    sid = _advance_to_teaching(client)
    _stream_iteration(client, sid, follow_guide=True)
    service = client.app.state.service
    live = service.get(sid).snapshot()
    del service.sessions[sid]
    replayed = service.replay(sid)
    assert replayed is not None
    assert replayed.snapshot() == live


def test_guidance_compute_latency_budget(client):
    sid = _advance_to_teaching(client)
    replies, _ = _stream_iteration(client, sid, follow_guide=True)
    compute = [r["compute_ms"] for r in replies if "compute_ms" in r]
    assert np.mean(compute) < 10.0
