"""Session orchestration: pre-test, adaptive teaching iterations, evaluation.

One session teaches one character to one learner with one method. The
adaptive method refits the style model from the rolling window of recent
writings, extracts via-points, generates a personalized teaching trajectory,
adapts the guidance stiffness from the previous iteration's tracking error,
and runs a guided writing. Baselines: visual copying (no guidance) and rigid
guidance along the raw reference at maximum stiffness.
"""

from __future__ import annotations

import enum
import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import metrics as metrics_mod
from .corpus import CharacterSet, CharacterSpec, normalize_character, resample_character
from .dtw import DeviationProfile, deviation_profile, dtw_align
from .gmrgp import generate_training_waypoints
from .impedance import ImpedanceConfig, ImpedanceState, compose, initial_stiffness, update_engagement
from .simulator import (
    InteractionRecord,
    LearnerModel,
    SimulationConfig,
    Writing,
    engagement_factor,
    learner_adapt,
    make_learner,
    record_to_writing,
    shift_intent,
    simulate_guided,
    simulate_unguided,
)
from .style import GmmModel, StyleDataset, fit_gmm, style_mean_curve

__all__ = [
    "Method",
    "ExperimentConfig",
    "SessionState",
    "TeachingError",
    "prepare_reference",
    "run_pretest",
    "run_teaching_iteration",
    "run_evaluation",
    "run_session",
    "run_experiment",
    "build_roster",
]


class TeachingError(RuntimeError):
    pass


class Method(str, enum.Enum):
    TEACHINGBOT = "TEACHINGBOT"
    FC = "FC"
    RGW = "RGW"


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ExperimentConfig:
    """All constants of a full run; defaults follow the hardware-scale setup."""

    n: int = 200  # waypoints per character
    l: int = 3  # pre-test / evaluation writings and rolling-window size
    h: tuple[int, ...] = (5,)  # via-points per stroke, per-iteration schedule
    m: int = 9  # teaching iterations
    z: int = 8  # mixture components
    workspace: tuple[float, float] = (0.35, 0.35)  # meters
    stroke_duration: float = 1.0  # s per stroke before any measured timing
    gp_noise: float = 1e-4  # squared meters, learner-waypoint observation noise
    fc_gain: float = 0.025  # per-writing intent shift for the visual-copy baseline
    impedance: ImpedanceConfig = field(default_factory=ImpedanceConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    master_seed: int = 0
    levels: tuple[int, ...] = (0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2)

    def __post_init__(self):
        if isinstance(self.h, int):
            object.__setattr__(self, "h", (self.h,))
        else:
            object.__setattr__(self, "h", tuple(int(v) for v in self.h))
        for name in ("n", "l", "m", "z"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if any(v < 1 for v in self.h):
            raise ValueError("h schedule entries must be >= 1")

    def h_for_iteration(self, iteration: int) -> int:
        return self.h[min(iteration - 1, len(self.h) - 1)]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "l": self.l,
            "h": list(self.h),
            "m": self.m,
            "z": self.z,
            "workspace": list(self.workspace),
            "stroke_duration": self.stroke_duration,
            "gp_noise": self.gp_noise,
            "fc_gain": self.fc_gain,
            "master_seed": self.master_seed,
            "levels": list(self.levels),
            "impedance": {
                "beta_r": self.impedance.beta_r,
                "beta_k": self.impedance.beta_k,
                "alpha": self.impedance.alpha,
                "pi_threshold": self.impedance.pi_threshold,
                "k_min": list(self.impedance.k_min),
                "k_max": list(self.impedance.k_max),
                "sample_interval": self.impedance.sample_interval,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        known = {
            "n", "l", "h", "m", "z", "workspace", "stroke_duration",
            "gp_noise", "fc_gain", "master_seed", "levels", "impedance",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs = {}
        for key in known - {"impedance", "workspace", "levels", "h"}:
            if key in raw:
                kwargs[key] = raw[key]
        if "h" in raw:
            kwargs["h"] = tuple(raw["h"]) if isinstance(raw["h"], (list, tuple)) else int(raw["h"])
        if "workspace" in raw:
            kwargs["workspace"] = tuple(raw["workspace"])
        if "levels" in raw:
            kwargs["levels"] = tuple(raw["levels"])
        if "impedance" in raw:
            imp = dict(raw["impedance"])
            for key in ("k_min", "k_max"):
                if key in imp:
                    imp[key] = tuple(imp[key])
            kwargs["impedance"] = ImpedanceConfig(**imp)
        return cls(**kwargs)


@dataclass
class SessionState:
    """Mutable-by-replacement record of one (learner, character, method) session."""

    character: CharacterSpec
    method: Method
    reference: Writing
    duration: float
    d_l: deque  # rolling window of the last L writings
    d_v: tuple = ()
    impedance: ImpedanceState | None = None
    iteration: int = 0
    history: list = field(default_factory=list)
    pretest: list = field(default_factory=list)
    evaluation: list = field(default_factory=list)
    initial_style: Writing | None = None
    final_style: Writing | None = None
    last_teaching: Writing | None = None
    last_error: DeviationProfile | None = None
    teaching_trace: list = field(default_factory=list)
    stiffness_trace: list = field(default_factory=list)
    style_models: tuple = ()  # per-stroke fits carried across iterations (EM warm start)
    seed: int = 0
    max_iterations: int = 9
    window: int = 3


def prepare_reference(char: CharacterSpec, cfg: ExperimentConfig, duration: float) -> Writing:
    """Normalize a character into the workspace and resample onto [0, duration]."""
    normalized = normalize_character(char, cfg.workspace)
    return tuple(resample_character(normalized, cfg.n, duration))


def _fit_stroke_styles(
    writings, reference: Writing, z: int, seed_key: tuple
) -> list[GmmModel]:
    models = []
    for si in range(len(reference)):
        data = StyleDataset.from_writings([w[si] for w in writings])
        z_eff = max(1, min(z, len(data) // 4))
        models.append(fit_gmm(data, z_eff, _derive_seed(*seed_key, si)))
    return models


def _style_curve(models, reference: Writing) -> Writing:
    return tuple(
        style_mean_curve(model, stroke.timestamps)
        for model, stroke in zip(models, reference)
    )


def _concat_deviation(curve: Writing, reference: Writing) -> DeviationProfile:
    parts = [deviation_profile(c, r).per_waypoint for c, r in zip(curve, reference)]
    return DeviationProfile(np.vstack(parts))


def run_pretest(learner: LearnerModel, character: CharacterSpec, cfg: ExperimentConfig) -> SessionState:
    """Collect L unguided writings, encode the initial style, set reference stiffness."""
    writings = [simulate_unguided(learner, character, trial=i) for i in range(cfg.l)]
    duration = sum(s.duration for s in writings[0])
    reference = prepare_reference(character, cfg, duration)

    session_seed = _derive_seed(cfg.master_seed, learner.id, character.id)
    models = _fit_stroke_styles(writings, reference, cfg.z, ("pretest", session_seed))
    initial_style = _style_curve(models, reference)
    dev = _concat_deviation(initial_style, reference)
    k_r = initial_stiffness(dev, cfg.impedance)
    state = SessionState(
        character=character,
        method=Method.TEACHINGBOT,
        reference=reference,
        duration=duration,
        d_l=deque(writings, maxlen=cfg.l),
        impedance=compose(k_r, np.zeros(2), cfg.impedance),
        pretest=list(writings),
        initial_style=initial_style,
        seed=session_seed,
        max_iterations=cfg.m,
        window=cfg.l,
    )
    return state


def _downsample_record(record: InteractionRecord, reference: Writing) -> Writing:
    return record_to_writing(record, reference)


def _error_profile(actual: Writing, teaching: Writing) -> DeviationProfile:
    parts = [a.points - t.points for a, t in zip(actual, teaching)]
    return DeviationProfile(np.vstack(parts))


def run_teaching_iteration(
    state: SessionState, learner: LearnerModel, cfg: ExperimentConfig
) -> tuple[SessionState, LearnerModel]:
    """Run one teaching iteration of the session's method; returns updated state and learner."""
    if state.iteration >= state.max_iterations:
        raise TeachingError(f"session already ran {state.max_iterations} iterations")
    m = state.iteration + 1
    char = state.character
    sim_cfg = cfg.simulation

    if state.method is Method.FC:
        learner = shift_intent(learner, char, state.reference, cfg.fc_gain)
        writing = simulate_unguided(learner, char, trial=1000 + m)
        state.d_l.append(writing)
        state.iteration = m
        return state, learner

    if state.method is Method.RGW:
        teaching = state.reference
        impedance = compose(cfg.impedance.k_max, np.zeros(2), cfg.impedance)
    else:
        from .viapoints import extract_via_points

        h_m = cfg.h_for_iteration(m)
        teaching_strokes = []
        via_sets = []
        models = []
        for si, ref_stroke in enumerate(state.reference):
            n_s = len(ref_stroke)
            h_eff = max(1, min(h_m, n_s // 4))
            via = extract_via_points(ref_stroke, h_eff)
            via_sets.append(via)
            data = StyleDataset.from_writings([w[si] for w in state.d_l])
            z_eff = max(1, min(cfg.z, len(data) // 4))
            warm = state.style_models[si] if si < len(state.style_models) else None
            model = fit_gmm(data, z_eff, _derive_seed(state.seed, "style", m, si), init=warm)
            models.append(model)
            seq, _ = generate_training_waypoints(
                model,
                via,
                data,
                ref_stroke.timestamps,
                seed=_derive_seed(state.seed, "gen", m, si),
                length_scales=np.full(
                    model.n_components, state.duration / model.n_components
                ),
                noise=np.eye(2) * cfg.gp_noise,
            )
            teaching_strokes.append(seq)
        teaching = tuple(teaching_strokes)
        state.d_v = tuple(via_sets)
        state.style_models = tuple(models)

        if m == 1 or state.last_error is None:
            k_s = np.zeros(2)
        else:
            k_s = update_engagement(state.impedance.k_s, state.last_error, cfg.impedance)
        impedance = compose(state.impedance.k_r, k_s, cfg.impedance)

    record = simulate_guided(learner, char, teaching, impedance, sim_cfg, trial=m)
    actual = _downsample_record(record, state.reference)

    a_eng = engagement_factor(impedance, sim_cfg)
    rate = learner.adaptation_rate * (sim_cfg.learn_base + sim_cfg.learn_gain * a_eng)
    learner = learner_adapt(learner, actual, char, rate=rate)

    state.history.append(record)
    state.d_l.append(actual)
    state.impedance = impedance
    state.last_teaching = teaching
    state.last_error = _error_profile(actual, teaching)
    state.stiffness_trace.append(tuple(float(v) for v in impedance.k_d))
    ref_concat = metrics_mod.concat_writing(state.reference)
    teach_concat = metrics_mod.concat_writing(teaching)
    align = dtw_align(teach_concat, ref_concat)
    state.teaching_trace.append(align.distance / len(align.path))
    state.iteration = m
    return state, learner


def run_evaluation(state: SessionState, learner: LearnerModel, cfg: ExperimentConfig) -> SessionState:
    """Collect L unguided writings after teaching and encode the final style."""
    writings = [simulate_unguided(learner, state.character, trial=2000 + i) for i in range(cfg.l)]
    state.evaluation = list(writings)
    models = _fit_stroke_styles(writings, state.reference, cfg.z, ("eval", state.seed))
    state.final_style = _style_curve(models, state.reference)
    return state


def run_session(
    learner: LearnerModel, character: CharacterSpec, method: Method, cfg: ExperimentConfig
) -> tuple[SessionState, LearnerModel]:
    """Full pre-test -> teaching(M) -> evaluation pipeline for one character."""
    state = run_pretest(learner, character, cfg)
    state.method = method
    for _ in range(cfg.m):
        state, learner = run_teaching_iteration(state, learner, cfg)
    state = run_evaluation(state, learner, cfg)
    return state, learner


def session_row(state: SessionState, learner: LearnerModel) -> dict:
    """Metrics row for the report: similarity pre/post, improvements, mean force."""
    ref_concat = metrics_mod.concat_writing(state.reference)
    pre_m1 = [metrics_mod.metric_m1(metrics_mod.concat_writing(w), ref_concat) for w in state.pretest]
    post_m1 = [metrics_mod.metric_m1(metrics_mod.concat_writing(w), ref_concat) for w in state.evaluation]
    pre_m2 = [metrics_mod.metric_m2(w, state.reference) for w in state.pretest]
    post_m2 = [metrics_mod.metric_m2(w, state.reference) for w in state.evaluation]
    forces = [metrics_mod.mean_interaction_force(r) for r in state.history]
    return {
        "learner": learner.id,
        "level": learner.level,
        "character": state.character.id,
        "stroke_count": state.character.stroke_count,
        "method": state.method.value,
        "pretest_m1": float(np.mean([s.value for s in pre_m1])),
        "evaluation_m1": float(np.mean([s.value for s in post_m1])),
        "pretest_m2": float(np.mean([s.value for s in pre_m2])),
        "evaluation_m2": float(np.mean([s.value for s in post_m2])),
        "improvement_m1": metrics_mod.improvement_percent(pre_m1, post_m1),
        "improvement_m2": metrics_mod.improvement_percent(pre_m2, post_m2),
        "mean_force": float(np.mean(forces)) if forces else None,
        "iterations": state.iteration,
        "stiffness_trace": list(state.stiffness_trace),
        "teaching_trace": [float(v) for v in state.teaching_trace],
    }


def build_roster(character_set: CharacterSet, cfg: ExperimentConfig) -> list[LearnerModel]:
    """Construct the simulated learners with per-learner timing and intent distortions."""
    learners = []
    for idx, level in enumerate(cfg.levels):
        learner_id = f"P{level}_{idx}"
        seed = _derive_seed(cfg.master_seed, "learner", learner_id)
        rng = np.random.default_rng(seed)
        pen_speed = float(rng.uniform(0.2, 0.3))  # m/s along the stroke
        reference_writings = {}
        for char in character_set.characters:
            normalized = normalize_character(char, cfg.workspace)
            duration = max(normalized.arc_length / pen_speed,
                           cfg.stroke_duration * char.stroke_count * 0.5)
            reference_writings[char.id] = prepare_reference(char, cfg, duration)
        learner = make_learner(
            character_set.characters,
            reference_writings,
            level=level,
            seed=seed,
            learner_id=learner_id,
        )
        learners.append(learner)
    return learners


def assign_methods(
    character_set: CharacterSet, learner: LearnerModel, master_seed: int
) -> dict[str, Method]:
    """Per learner: within each stroke-count group, one character per method (seeded)."""
    assignment: dict[str, Method] = {}
    methods = [Method.TEACHINGBOT, Method.FC, Method.RGW]
    for strokes, char_ids in sorted(character_set.stroke_count_groups().items()):
        if len(char_ids) != len(methods):
            raise TeachingError(
                f"stroke group {strokes} has {len(char_ids)} characters; need {len(methods)}"
            )
        rng = np.random.default_rng(_derive_seed(master_seed, "groups", learner.id, strokes))
        order = list(rng.permutation(sorted(char_ids)))
        for char_id, method in zip(order, methods):
            assignment[char_id] = method
    return assignment


def _run_one(args):
    from threadpoolctl import threadpool_limits

    learner, character, method, cfg = args
    # the linear algebra here is small; single-threaded BLAS avoids pool contention
    with threadpool_limits(limits=1):
        state, trained = run_session(learner, character, method, cfg)
    return session_row(state, trained)


def run_experiment(
    cfg: ExperimentConfig,
    character_set: CharacterSet,
    learners: list[LearnerModel] | None = None,
    parallel: int = 1,
) -> metrics_mod.ExperimentReport:
    """All (learner, character) sessions with seeded method grouping; deterministic report."""
    if learners is None:
        learners = build_roster(character_set, cfg)
    jobs = []
    for learner in learners:
        assignment = assign_methods(character_set, learner, cfg.master_seed)
        for char_id in sorted(assignment):
            jobs.append((learner, character_set[char_id], assignment[char_id], cfg))
    jobs.sort(key=lambda j: (j[0].id, j[1].id))

    if parallel > 1:
        import multiprocessing

        with multiprocessing.Pool(parallel) as pool:
            rows = pool.map(_run_one, jobs)
    else:
        rows = [_run_one(j) for j in jobs]

    rows.sort(key=lambda r: (r["learner"], r["character"], r["method"]))
    return metrics_mod.ExperimentReport(tuple(rows), config=cfg.to_dict())
