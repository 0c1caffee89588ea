"""Live teaching sessions over HTTP plus a websocket guidance stream.

The service walks a browser client through the same phases as the simulated
loop: collect unguided writings, fit the style, serve personalized teaching
steps with impedance levels, stream per-sample correction vectors during
guided writing, and report similarity improvement at the end. Sessions
persist as an append-only JSONL event log and replay to the same state.

All wire units are meters and seconds; display scaling is the client's job.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .corpus import CharacterSet, WaypointSeq, load_character_set
from .dtw import DeviationProfile
from .gmrgp import generate_training_waypoints
from .impedance import compose, update_engagement
from .metrics import improvement_percent, metric_m1, metric_m2, concat_writing
from .style import StyleDataset, fit_gmm, style_mean_curve
from .teaching import ExperimentConfig, _derive_seed, prepare_reference
from .viapoints import extract_via_points

PROTOCOL_VERSION = 1

PHASES = ("PRETEST", "TEACHING", "EVALUATION", "DONE")


class ProtocolError(HTTPException):
    def __init__(self, detail: str, status_code: int = 409):
        super().__init__(status_code=status_code, detail=detail)


@dataclass
class LiveSession:
    """Server-side state of one learner session."""

    session_id: str
    character_id: str
    cfg: ExperimentConfig
    phase: str = "PRETEST"
    iteration: int = 0
    writings: list = field(default_factory=list)  # pretest + teaching window entries
    pretest: list = field(default_factory=list)
    evaluation: list = field(default_factory=list)
    reference: tuple = ()
    duration: float = 0.0
    impedance: object = None
    k_r: np.ndarray | None = None
    k_s: np.ndarray = field(default_factory=lambda: np.zeros(2))
    teaching: tuple = ()
    via: tuple = ()
    posterior_band: list = field(default_factory=list)
    correction_trace: list = field(default_factory=list)  # mean |x - x_d| per iteration, per axis
    stiffness_trace: list = field(default_factory=list)
    active_strokes: list = field(default_factory=list)  # live guided-writing samples
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "character_id": self.character_id,
            "phase": self.phase,
            "iteration": self.iteration,
            "pretest_count": len(self.pretest),
            "evaluation_count": len(self.evaluation),
        }


def _resample_submission(strokes_raw, n_total: int, duration: float):
    """Arc-length resample submitted strokes onto the reference layout."""
    from .corpus import StrokePolyline, CharacterSpec

    polys = []
    for si, stroke in enumerate(strokes_raw):
        pts = np.asarray([[p["x"], p["y"]] for p in stroke["samples"]], dtype=float)
        if len(pts) < 2:
            raise ProtocolError(f"stroke {si} needs at least 2 samples", 422)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        keep = np.concatenate(([True], seg > 1e-12))
        pts = pts[keep]
        if len(pts) < 2:
            raise ProtocolError(f"stroke {si} has no extent", 422)
        polys.append(StrokePolyline(pts))
    char = CharacterSpec("submission", tuple(polys))
    from .corpus import resample_character

    return tuple(resample_character(char, n_total, duration))


def _measure_duration(strokes_raw) -> float:
    total = 0.0
    for stroke in strokes_raw:
        ts = [float(p["t"]) for p in stroke["samples"]]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ProtocolError("timestamps must be non-decreasing within a stroke", 422)
        total += max(ts[-1] - ts[0], 1e-3)
    return total


class SessionStore:
    """Append-only JSONL event log shared by all sessions; replayable."""

    def __init__(self, path):
        self.path = Path(path)
        self.lock = threading.Lock()

    def append(self, session_id: str, kind: str, payload: dict):
        record = {"session": session_id, "kind": kind, "payload": payload}
        with self.lock:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    def events(self, session_id: str):
        if not self.path.exists():
            return []
        out = []
        with self.path.open(encoding="utf-8") as f:
            for line in f:
                rec = json.loads(line)
                if rec["session"] == session_id:
                    out.append(rec)
        return out


class SessionService:
    def __init__(self, characters: CharacterSet, store: SessionStore, cfg: ExperimentConfig | None = None):
        self.characters = characters
        self.store = store
        self.cfg = cfg or ExperimentConfig()
        self.sessions: dict[str, LiveSession] = {}
        self._counter = itertools.count()

    # -- lifecycle ---------------------------------------------------------
    def create_session(self, character_id: str, overrides: dict | None = None) -> LiveSession:
        if character_id not in self.characters.by_id:
            raise HTTPException(status_code=404, detail=f"unknown character {character_id!r}")
        cfg = self.cfg
        if overrides:
            raw = cfg.to_dict()
            raw.update(overrides)
            cfg = ExperimentConfig.from_dict(raw)
        session = LiveSession(
            session_id=uuid.uuid4().hex,
            character_id=character_id,
            cfg=cfg,
        )
        self.sessions[session.session_id] = session
        self.store.append(session.session_id, "created", {
            "character_id": character_id,
            "overrides": overrides or {},
            "version": PROTOCOL_VERSION,
        })
        return session

    def get(self, session_id: str) -> LiveSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session") from None

    # -- writings ----------------------------------------------------------
    def submit_writing(self, session_id: str, strokes_raw) -> dict:
        session = self.get(session_id)
        with session.lock:
            out = self._submit_locked(session, strokes_raw)
        self.store.append(session_id, "writing", {"strokes": strokes_raw})
        return out

    def _submit_locked(self, session: LiveSession, strokes_raw) -> dict:
        if session.phase not in ("PRETEST", "EVALUATION"):
            raise ProtocolError(f"writings are not accepted in phase {session.phase}")
        char = self.characters[session.character_id]
        if len(strokes_raw) != char.stroke_count:
            raise ProtocolError(
                f"expected {char.stroke_count} strokes, got {len(strokes_raw)}", 422)
        for si, stroke in enumerate(strokes_raw):
            for pi, p in enumerate(stroke["samples"]):
                if not all(isinstance(p.get(k), (int, float)) for k in ("t", "x", "y")):
                    raise ProtocolError(f"malformed point {pi} in stroke {si}", 422)

        cfg = session.cfg
        if session.phase == "PRETEST":
            if not session.pretest:
                session.duration = _measure_duration(strokes_raw)
                session.reference = prepare_reference(char, cfg, session.duration)
            writing = _resample_submission(strokes_raw, cfg.n, session.duration)
            session.pretest.append(writing)
            session.writings.append(writing)
            response = session.snapshot()
            if len(session.pretest) >= cfg.l:
                self._finish_pretest(session)
                response = session.snapshot()
                response["initial_stiffness"] = [float(v) for v in session.k_r]
            return response

        writing = _resample_submission(strokes_raw, cfg.n, session.duration)
        session.evaluation.append(writing)
        response = session.snapshot()
        if len(session.evaluation) >= cfg.l:
            session.phase = "DONE"
            response = session.snapshot()
        return response

    def _finish_pretest(self, session: LiveSession):
        from .dtw import deviation_profile
        from .impedance import initial_stiffness

        cfg = session.cfg
        window = session.writings[-cfg.l:]
        parts = []
        for si, ref_stroke in enumerate(session.reference):
            data = StyleDataset.from_writings([w[si] for w in window])
            z_eff = max(1, min(cfg.z, len(data) // 4))
            model = fit_gmm(data, z_eff, _derive_seed(session.session_id, "pre", si))
            curve = style_mean_curve(model, ref_stroke.timestamps)
            parts.append(deviation_profile(curve, ref_stroke).per_waypoint)
        dev = DeviationProfile(np.vstack(parts))
        session.k_r = initial_stiffness(dev, cfg.impedance)
        session.k_s = np.zeros(2)
        session.phase = "TEACHING"
        session.iteration = 0
        self._prepare_teaching_step(session)

    # -- teaching ----------------------------------------------------------
    def _prepare_teaching_step(self, session: LiveSession):
        cfg = session.cfg
        m = session.iteration + 1
        window = session.writings[-cfg.l:]
        teaching = []
        vias = []
        band = []
        for si, ref_stroke in enumerate(session.reference):
            h_eff = max(1, min(cfg.h_for_iteration(m), len(ref_stroke) // 4))
            via = extract_via_points(ref_stroke, h_eff)
            vias.append(via)
            data = StyleDataset.from_writings([w[si] for w in window])
            z_eff = max(1, min(cfg.z, len(data) // 4))
            model = fit_gmm(data, z_eff, _derive_seed(session.session_id, "style", m, si))
            seq, posterior = generate_training_waypoints(
                model, via, data, ref_stroke.timestamps,
                seed=_derive_seed(session.session_id, "gen", m, si),
                length_scales=np.full(model.n_components, session.duration / model.n_components),
                noise=np.eye(2) * cfg.gp_noise,
            )
            teaching.append(seq)
            band.append([[float(c[0, 0]), float(c[0, 1]), float(c[1, 1])]
                         for c in posterior.covariances])
        session.teaching = tuple(teaching)
        session.via = tuple(vias)
        session.posterior_band = band
        if m == 1 or not session.correction_trace:
            k_s = np.zeros(2)
        else:
            errors = session.correction_trace[-1]
            k_s = update_engagement(session.k_s, DeviationProfile(np.asarray(errors)), cfg.impedance)
        session.k_s = k_s
        session.impedance = compose(session.k_r, k_s, cfg.impedance)
        session.stiffness_trace.append([float(v) for v in session.impedance.k_d])
        session.active_strokes = [[] for _ in session.reference]

    def teaching_step(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.phase != "TEACHING":
                raise ProtocolError(f"no teaching step in phase {session.phase}")
            return {
                "session_id": session.session_id,
                "iteration": session.iteration + 1,
                "of_iterations": session.cfg.m,
                "strokes": [
                    {
                        "timestamps": [float(t) for t in seq.timestamps],
                        "points": [[float(x), float(y)] for x, y in seq.points],
                    }
                    for seq in session.teaching
                ],
                "via_points": [
                    {
                        "times": [float(t) for t in via.times],
                        "points": [[float(x), float(y)] for x, y in via.points],
                        "count_interior": int(via.h),
                    }
                    for via in session.via
                ],
                "posterior_band": session.posterior_band,
                "impedance": {
                    "k_d": [float(v) for v in session.impedance.k_d],
                    "b_d": [float(v) for v in session.impedance.b_d],
                },
                "reference": [
                    {"points": [[float(x), float(y)] for x, y in seq.points]}
                    for seq in session.reference
                ],
            }

    # -- guidance streaming --------------------------------------------------
    def guidance_sample(self, session: LiveSession, stroke_index: int, t: float, x: float, y: float) -> dict:
        """Correction vector for one live pen sample (caller holds the lock)."""
        if session.phase != "TEACHING":
            raise ProtocolError(f"no guidance in phase {session.phase}")
        if not (0 <= stroke_index < len(session.teaching)):
            raise ProtocolError(f"stroke index {stroke_index} out of range", 422)
        guide = session.teaching[stroke_index]
        idx = int(np.clip(np.searchsorted(guide.timestamps, t), 0, len(guide) - 1))
        gx, gy = guide.points[idx]
        k_d = session.impedance.k_d
        correction = (-k_d[0] * (x - gx), -k_d[1] * (y - gy))
        session.active_strokes[stroke_index].append((t, x, y, gx, gy))
        return {
            "guide": [float(gx), float(gy)],
            "correction": [float(correction[0]), float(correction[1])],
            "progress": float(idx / max(len(guide) - 1, 1)),
            "stroke": stroke_index,
        }

    def complete_iteration(self, session: LiveSession) -> dict:
        """Record the guided writing, update engagement errors, advance."""
        cfg = session.cfg
        errors = []
        writing = []
        for si, samples in enumerate(session.active_strokes):
            guide = session.teaching[si]
            if len(samples) >= 2:
                arr = np.asarray(samples, dtype=float)
                pen = arr[:, 1:3]
                seg = np.linalg.norm(np.diff(pen, axis=0), axis=1)
                keep = np.concatenate(([True], seg > 1e-12))
                pen = pen[keep]
                if len(pen) >= 2:
                    from .corpus import StrokePolyline, resample_waypoints

                    res = resample_waypoints(
                        StrokePolyline(pen), len(guide), max(guide.duration, 1e-3))
                    stroke_seq = WaypointSeq(guide.timestamps, res.points)
                else:
                    stroke_seq = guide
            else:
                stroke_seq = guide  # no samples: treat as perfectly guided
            writing.append(stroke_seq)
            errors.append(stroke_seq.points - guide.points)
        session.writings.append(tuple(writing))
        session.writings = session.writings[-max(cfg.l, 1):]
        session.correction_trace.append(np.vstack(errors).tolist())
        session.iteration += 1
        if session.iteration >= cfg.m:
            session.phase = "EVALUATION"
        else:
            self._prepare_teaching_step(session)
        return session.snapshot()

    # -- report --------------------------------------------------------------
    def report(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.phase != "DONE":
                raise ProtocolError(f"report available only when complete, phase={session.phase}")
            ref_concat = concat_writing(session.reference)
            pre_m1 = [metric_m1(concat_writing(w), ref_concat) for w in session.pretest]
            post_m1 = [metric_m1(concat_writing(w), ref_concat) for w in session.evaluation]
            pre_m2 = [metric_m2(w, session.reference) for w in session.pretest]
            post_m2 = [metric_m2(w, session.reference) for w in session.evaluation]
            corr = [
                float(np.mean(np.linalg.norm(np.asarray(errors), axis=1)))
                for errors in session.correction_trace
            ]
            return {
                "session_id": session.session_id,
                "m1": {
                    "pretest": float(np.mean([s.value for s in pre_m1])),
                    "evaluation": float(np.mean([s.value for s in post_m1])),
                    "improvement_percent": improvement_percent(pre_m1, post_m1),
                },
                "m2": {
                    "pretest": float(np.mean([s.value for s in pre_m2])),
                    "evaluation": float(np.mean([s.value for s in post_m2])),
                    "improvement_percent": improvement_percent(pre_m2, post_m2),
                },
                "mean_correction_per_iteration": corr,
                "stiffness_trace": session.stiffness_trace,
            }

    def replay(self, session_id: str) -> LiveSession | None:
        """Rebuild a session from its event log (crash recovery, debugging)."""
        events = self.store.events(session_id)
        if not events:
            return None
        created = events[0]["payload"]
        session = LiveSession(
            session_id=session_id,
            character_id=created["character_id"],
            cfg=ExperimentConfig.from_dict({**self.cfg.to_dict(), **created.get("overrides", {})})
            if created.get("overrides")
            else self.cfg,
        )
        self.sessions[session_id] = session
        for event in events[1:]:
            if event["kind"] == "writing":
                with session.lock:
                    self._submit_locked(session, event["payload"]["strokes"])
            elif event["kind"] == "guided_samples":
                with session.lock:
                    for s in event["payload"]["samples"]:
                        self.guidance_sample(session, s[0], s[1], s[2], s[3])
            elif event["kind"] == "iteration":
                with session.lock:
                    self.complete_iteration(session)
        return session


def create_app(
    store_path="sessions.jsonl",
    character_path=None,
    cfg: ExperimentConfig | None = None,
    ui_dir=None,
) -> FastAPI:
    if character_path is None:
        from .cli import default_character_path

        character_path = default_character_path()
    characters = load_character_set(character_path)
    service = SessionService(characters, SessionStore(store_path), cfg)
    app = FastAPI(title="handtutor session service", version=str(PROTOCOL_VERSION))
    app.state.service = service

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.get("/healthz")
    def healthz():
        return {"status": "ready", "version": PROTOCOL_VERSION}

    @app.get("/characters")
    def characters_index():
        return {
            "characters": [
                {
                    "id": c.id,
                    "stroke_count": c.stroke_count,
                    "strokes": [[[float(x), float(y)] for x, y in s.points] for s in c.strokes],
                }
                for c in characters.characters
            ]
        }

    @app.post("/sessions")
    def create_session(body: dict):
        character_id = body.get("character_id")
        if not isinstance(character_id, str):
            raise HTTPException(status_code=422, detail="character_id required")
        session = service.create_session(character_id, body.get("config"))
        return session.snapshot()

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str):
        return service.get(session_id).snapshot()

    @app.post("/sessions/{session_id}/writings")
    def submit_writing(session_id: str, body: dict):
        strokes = body.get("strokes")
        if not isinstance(strokes, list) or not strokes:
            raise HTTPException(status_code=422, detail="strokes required")
        return service.submit_writing(session_id, strokes)

    @app.get("/sessions/{session_id}/teaching-step")
    def teaching_step(session_id: str):
        return service.teaching_step(session_id)

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        return service.report(session_id)

    @app.websocket("/sessions/{session_id}/guidance")
    async def guidance(websocket: WebSocket, session_id: str):
        await websocket.accept()
        try:
            session = service.get(session_id)
        except HTTPException:
            await websocket.send_json({"error": "unknown session"})
            await websocket.close()
            return
        sample_log = []
        last_t = -np.inf
        try:
            while True:
                message = await websocket.receive_json()
                kind = message.get("kind", "sample")
                if kind == "sample":
                    t = float(message["t"])
                    if t < last_t:
                        await websocket.send_json({"dropped": True, "reason": "out-of-order"})
                        continue
                    last_t = t
                    t0 = time.perf_counter()
                    with session.lock:
                        reply = service.guidance_sample(
                            session,
                            int(message.get("stroke", 0)),
                            t,
                            float(message["x"]),
                            float(message["y"]),
                        )
                    reply["compute_ms"] = (time.perf_counter() - t0) * 1e3
                    sample_log.append([int(message.get("stroke", 0)), t,
                                       float(message["x"]), float(message["y"])])
                    await websocket.send_json(reply)
                elif kind == "complete":
                    with session.lock:
                        snapshot = service.complete_iteration(session)
                    service.store.append(session_id, "guided_samples", {"samples": sample_log})
                    service.store.append(session_id, "iteration", {"iteration": snapshot["iteration"]})
                    sample_log = []
                    last_t = -np.inf
                    await websocket.send_json({"kind": "iteration-complete", **snapshot})
                else:
                    await websocket.send_json({"error": f"unknown kind {kind!r}"})
        except WebSocketDisconnect:
            return

    return app
