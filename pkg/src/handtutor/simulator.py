"""Simulated human learner and end-effector interaction dynamics.

The learner holds a latent intended writing per character (a smooth seeded
distortion of the reference), tracks it with a spring-damper arm model, and
adapts the intent toward what they experience. During guided writing the pen
is a unit point mass driven by the robot's impedance force and the learner's
force; the learner's effort scales with an engagement factor that grows as
the robot becomes more compliant, and engaged learners steer toward the guide
and push tangentially along it. These engagement mechanics are modeling
assumptions for closed-loop runs, not measured human behavior.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import CharacterSpec, WaypointSeq
from .impedance import ImpedanceState

__all__ = [
    "LearnerModel",
    "InteractionRecord",
    "SimulationConfig",
    "Writing",
    "SimulationError",
    "make_learner",
    "simulate_unguided",
    "simulate_guided",
    "learner_adapt",
    "shift_intent",
]

Writing = tuple[WaypointSeq, ...]

LEVEL_DISTORTION = {0: 1.0, 1: 0.5, 2: 0.22}  # proficiency levels scale intent distortion
LEVEL_TRIAL_NOISE = {0: 0.006, 1: 0.0045, 2: 0.003}  # m; trial-to-trial smooth variability


class SimulationError(RuntimeError):
    """Simulation diverged or was configured inconsistently."""


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SimulationConfig:
    """Interaction-dynamics constants (invented simulation knobs)."""

    sample_interval: float = 0.001  # s
    mass: float = 1.0  # kg, end-effector point mass
    viscous_floor: float = 5.0  # N*s/m, replaces the robot's own dynamics
    k_max_ref: float = 1200.0  # N/m, normalizer for guidance compliance
    engagement_base: float = 0.10  # learner drive under full guidance
    engagement_gain: float = 0.90  # extra drive as guidance becomes compliant
    cooperation: float = 1.0  # fraction of engagement steering the learner toward the guide
    lead_time: float = 0.0  # s, optional anticipation of the guide
    drive_gain: float = 30.0  # N*s/m, tangential effort of an engaged learner
    learn_base: float = 0.06  # passive share of the adaptation rate
    learn_gain: float = 0.94  # engagement-scaled share of the adaptation rate


@dataclass(frozen=True)
class LearnerModel:
    """Simulated learner: per-character intended writings plus arm/learning constants."""

    latent_style: dict[str, Writing]
    own_stiffness: float = 1000.0  # N/m toward the intended trajectory
    force_cap: float = 60.0  # N
    motor_noise: float = 0.0015  # m, std-dev of within-trial tremor
    trial_noise: float = 0.005  # m, std-dev of the smooth per-writing deformation
    adaptation_rate: float = 0.3  # eta in [0, 1]
    seed: int = 0
    level: int = 0
    id: str = "learner"

    def __post_init__(self):
        if not 0.0 <= self.adaptation_rate <= 1.0:
            raise ValueError("adaptation_rate must be in [0, 1]")
        if self.force_cap <= 0 or self.motor_noise < 0:
            raise ValueError("force_cap must be > 0 and motor_noise >= 0")

    def intent(self, char_id: str) -> Writing:
        if char_id not in self.latent_style:
            raise KeyError(f"learner has no latent style for character {char_id!r}")
        return self.latent_style[char_id]


@dataclass(frozen=True)
class InteractionRecord:
    """Time series of one guided writing: positions and both force channels."""

    times: np.ndarray
    actual: np.ndarray
    desired: np.ndarray
    learner_force: np.ndarray
    robot_force: np.ndarray
    duration: float
    stroke_slices: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.actual) == len(self.desired) == len(self.learner_force)
                == len(self.robot_force) == n):
            raise ValueError("record series must share one length")

    def __len__(self) -> int:
        return len(self.times)

    def stroke_seq(self, i: int) -> WaypointSeq:
        a, b = self.stroke_slices[i]
        return WaypointSeq(self.times[a:b], self.actual[a:b])

    def to_columns(self) -> str:
        """Columnar text serialization; one row per control step."""
        lines = ["# step t x y xd yd fh_x fh_y fr_x fr_y"]
        for k in range(len(self)):
            row = [
                str(k),
                repr(float(self.times[k])),
                repr(float(self.actual[k, 0])),
                repr(float(self.actual[k, 1])),
                repr(float(self.desired[k, 0])),
                repr(float(self.desired[k, 1])),
                repr(float(self.learner_force[k, 0])),
                repr(float(self.learner_force[k, 1])),
                repr(float(self.robot_force[k, 0])),
                repr(float(self.robot_force[k, 1])),
            ]
            lines.append(" ".join(row))
        return "\n".join(lines) + "\n"


def _smooth_warp(points: np.ndarray, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    """Low-order polynomial displacement field over normalized coordinates."""
    lo = points.min(axis=0)
    span = np.maximum(points.max(axis=0) - lo, 1e-9)
    u = (points - lo) / span  # in [0, 1]^2
    coeffs = rng.normal(0.0, magnitude, size=(2, 6))
    basis = np.stack(
        [np.ones(len(u)), u[:, 0], u[:, 1], u[:, 0] * u[:, 1], u[:, 0] ** 2, u[:, 1] ** 2],
        axis=1,
    )
    return points + basis @ coeffs.T


def make_learner(
    characters,
    reference_writings: dict[str, Writing],
    level: int,
    seed: int,
    learner_id: str = "learner",
    **kwargs,
) -> LearnerModel:
    """Build a learner whose intent is a seeded smooth distortion of each reference.

    Distortion magnitude follows the proficiency level (0 strongest); each
    stroke additionally gets a small rotation/scale about its centroid.
    """
    mag = LEVEL_DISTORTION[level]
    kwargs.setdefault("trial_noise", LEVEL_TRIAL_NOISE[level])
    latent: dict[str, Writing] = {}
    for char in characters:
        ref = reference_writings[char.id]
        rng = np.random.default_rng(_derive_seed(seed, "intent", char.id))
        warped_strokes = []
        all_pts = np.vstack([s.points for s in ref])
        warped_all = _smooth_warp(all_pts, 0.03 * mag, rng)
        offset = 0
        for stroke in ref:
            pts = warped_all[offset : offset + len(stroke)]
            offset += len(stroke)
            center = pts.mean(axis=0)
            # every writer differs from the reference font at least slightly,
            # so slant and scale carry a level-independent floor
            draw = rng.normal(0.0, 0.13 * mag)
            theta = math.copysign(0.04 + abs(draw), draw)
            s_draw = rng.normal(0.0, 0.08 * mag)
            scale = math.exp(math.copysign(0.03 + abs(s_draw), s_draw))
            rot = np.array(
                [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
            )
            shift = rng.normal(0.0, 0.006 * mag, size=2)
            pts = (pts - center) @ (scale * rot.T) + center + shift
            warped_strokes.append(WaypointSeq(stroke.timestamps, pts))
        # learners aim at the designated writing box: remove the global offset
        ref_center = (all_pts.min(axis=0) + all_pts.max(axis=0)) / 2.0
        warped_pts = np.vstack([s.points for s in warped_strokes])
        delta = ref_center - (warped_pts.min(axis=0) + warped_pts.max(axis=0)) / 2.0
        warped_strokes = [WaypointSeq(s.timestamps, s.points + delta) for s in warped_strokes]
        latent[char.id] = tuple(warped_strokes)
    return LearnerModel(latent_style=latent, seed=seed, level=level, id=learner_id, **kwargs)


def _trial_deformation(learner: LearnerModel, char_id: str, trial: int, intent: Writing):
    """Smooth per-writing deformation field sampled at a few knots per stroke."""
    rng = np.random.default_rng(_derive_seed(learner.seed, "deform", char_id, trial))
    fields = []
    for stroke in intent:
        n = len(stroke)
        k = max(3, n // 25)
        knots = np.linspace(0, n - 1, k)
        vals = rng.normal(0.0, learner.trial_noise, size=(k, 2))
        grid = np.arange(n)
        fields.append(
            np.column_stack([np.interp(grid, knots, vals[:, 0]), np.interp(grid, knots, vals[:, 1])])
        )
    return fields


def simulate_unguided(learner: LearnerModel, character: CharacterSpec, trial: int = 0) -> Writing:
    """One unguided writing: intent plus smooth trial deformation plus tremor."""
    intent = learner.intent(character.id)
    deform = _trial_deformation(learner, character.id, trial, intent)
    rng = np.random.default_rng(_derive_seed(learner.seed, "unguided", character.id, trial))
    out = []
    for stroke, field in zip(intent, deform):
        tremor = rng.normal(0.0, learner.motor_noise, size=stroke.points.shape)
        out.append(WaypointSeq(stroke.timestamps, stroke.points + field + tremor))
    return tuple(out)


def _dense_track(seq: WaypointSeq, times: np.ndarray):
    """Positions and velocities of the linear interpolation of seq at the given times."""
    x = np.interp(times, seq.timestamps, seq.points[:, 0])
    y = np.interp(times, seq.timestamps, seq.points[:, 1])
    pos = np.column_stack([x, y])
    vel = np.gradient(pos, times, axis=0) if len(times) > 1 else np.zeros_like(pos)
    return pos, vel


def engagement_factor(impedance: ImpedanceState, cfg: SimulationConfig) -> float:
    """Learner drive level: grows as the robot's guidance becomes more compliant."""
    compliance = 1.0 - float(np.mean(impedance.k_d)) / cfg.k_max_ref
    return float(np.clip(cfg.engagement_base + cfg.engagement_gain * compliance, 0.0, 1.0))


def simulate_guided(
    learner: LearnerModel,
    character: CharacterSpec,
    teaching: Writing,
    impedance: ImpedanceState,
    cfg: SimulationConfig,
    trial: int = 0,
) -> InteractionRecord:
    """Integrate one guided writing of every stroke of the character.

    Unit point mass with a viscous floor; robot force from the impedance law
    toward the interpolated teaching trajectory; learner force from their arm
    model toward an engagement-blended target. Deterministic given seeds.
    """
    intent = learner.intent(character.id)
    if len(intent) != len(teaching):
        raise SimulationError("teaching trajectory and intent disagree on stroke count")
    deform = _trial_deformation(learner, character.id, 7000 + trial, intent)
    intent = tuple(
        WaypointSeq(s.timestamps, s.points + f) for s, f in zip(intent, deform)
    )

    dt = cfg.sample_interval
    duration = sum(s.duration for s in teaching)
    total_steps = max(int(math.ceil(duration / dt)), 1)

    a_eng = engagement_factor(impedance, cfg)
    gamma = min(cfg.cooperation * a_eng, 1.0)
    lead = cfg.lead_time * a_eng
    drive = cfg.drive_gain
    k_h = learner.own_stiffness
    b_h = 2.0 * math.sqrt(k_h)  # near-critical arm damping

    rng = np.random.default_rng(_derive_seed(learner.seed, "guided", character.id, trial))
    kd = impedance.k_d
    bd = impedance.b_d

    times = np.empty(total_steps)
    actual = np.empty((total_steps, 2))
    desired = np.empty((total_steps, 2))
    f_h_series = np.empty((total_steps, 2))
    f_r_series = np.empty((total_steps, 2))
    slices = []

    step = 0
    for stroke_idx, guide in enumerate(teaching):
        t0, t1 = guide.timestamps[0], guide.timestamps[-1]
        if stroke_idx == len(teaching) - 1:
            n_s = total_steps - step
        else:
            n_s = max(int(round(guide.duration / dt)), 1)
        t_grid = t0 + dt * np.arange(n_s)
        guide_pos, guide_vel = _dense_track(guide, t_grid)
        intent_stroke = intent[stroke_idx]
        intent_pos, intent_vel = _dense_track(intent_stroke, t_grid)
        # anticipation ramps in after the stroke start so the pen is not yanked
        # from standstill toward a lead target
        ramp = np.minimum(1.0, (t_grid - t0) / max(4.0 * lead, dt)) if lead > 0 else 0.0
        lead_grid = np.minimum(t_grid + lead * ramp, t1)
        target_pos = (1.0 - gamma) * np.column_stack(
            [np.interp(lead_grid, intent_stroke.timestamps, intent_stroke.points[:, 0]),
             np.interp(lead_grid, intent_stroke.timestamps, intent_stroke.points[:, 1])]
        ) + gamma * np.column_stack(
            [np.interp(lead_grid, guide.timestamps, guide.points[:, 0]),
             np.interp(lead_grid, guide.timestamps, guide.points[:, 1])]
        )
        target_vel = (1.0 - gamma) * intent_vel + gamma * guide_vel
        # band-limited motor noise: per-waypoint draws interpolated to the step
        # grid (same granularity as unguided writings, not 1 kHz white noise)
        knots = guide.timestamps
        knot_noise = rng.normal(0.0, learner.motor_noise, size=(len(knots), 2))
        noise = np.column_stack(
            [np.interp(t_grid, knots, knot_noise[:, 0]), np.interp(t_grid, knots, knot_noise[:, 1])]
        )
        # writers ease in and out of a stroke: taper the tangential effort
        span = max(t1 - t0, dt)
        taper = np.clip(np.minimum(t_grid - t0, t1 - t_grid) / (0.12 * span), 0.0, 1.0)
        drive_vel = taper[:, None] * target_vel

        # pen transit between strokes is instantaneous: restart at the guide start.
        # Plain-float inner loop: this runs at 1 kHz-equivalent rates.
        kd_x, kd_y = float(kd[0]), float(kd[1])
        bd_x, bd_y = float(bd[0]), float(bd[1])
        cap = learner.force_cap
        visc = cfg.viscous_floor
        inv_mass = 1.0 / cfg.mass
        gp = guide_pos.tolist()
        gv = guide_vel.tolist()
        tp = target_pos.tolist()
        tv = target_vel.tolist()
        dv = drive_vel.tolist()
        nz = (k_h * noise).tolist()
        x0, y0 = gp[0]
        vx, vy = float(guide_vel[0, 0]), float(guide_vel[0, 1])  # pen launches with the guide
        start = step
        for k in range(n_s):
            gx, gy = gp[k]
            gvx, gvy = gv[k]
            fr_x = -kd_x * (x0 - gx) - bd_x * (vx - gvx)
            fr_y = -kd_y * (y0 - gy) - bd_y * (vy - gvy)
            tx, ty = tp[k]
            tvx, tvy = tv[k]
            dvx, dvy = dv[k]
            fh_x = a_eng * (k_h * (tx - x0) + b_h * (tvx - vx) + drive * dvx + nz[k][0])
            fh_y = a_eng * (k_h * (ty - y0) + b_h * (tvy - vy) + drive * dvy + nz[k][1])
            norm = math.hypot(fh_x, fh_y)
            if norm > cap:
                scale = cap / norm
                fh_x *= scale
                fh_y *= scale
            vx += dt * (fr_x + fh_x - visc * vx) * inv_mass
            vy += dt * (fr_y + fh_y - visc * vy) * inv_mass
            x0 += dt * vx
            y0 += dt * vy
            times[step] = t_grid[k]
            actual[step, 0] = x0
            actual[step, 1] = y0
            desired[step, 0] = gx
            desired[step, 1] = gy
            f_h_series[step, 0] = fh_x
            f_h_series[step, 1] = fh_y
            f_r_series[step, 0] = fr_x
            f_r_series[step, 1] = fr_y
            step += 1
        if not (math.isfinite(x0) and math.isfinite(y0) and math.isfinite(vx) and math.isfinite(vy)):
            bad = int(np.argmax(~np.isfinite(actual[start:step]).all(axis=1)))
            raise SimulationError(f"simulation diverged at step {start + bad}")
        slices.append((start, step))

    return InteractionRecord(
        times=times,
        actual=actual,
        desired=desired,
        learner_force=f_h_series,
        robot_force=f_r_series,
        duration=duration,
        stroke_slices=tuple(slices),
    )


def record_to_writing(record: InteractionRecord, template: Writing) -> Writing:
    """Extract waypoints from a guided record onto the template's timestamps.

    Extraction is spatial (uniform arc-length resampling of the pen path per
    stroke), mirroring waypoint extraction from a captured image; the record's
    own timing is discarded.
    """
    out = []
    for i, stroke in enumerate(template):
        a, b = record.stroke_slices[i]
        pts = record.actual[a:b]
        if len(pts) > 5:
            # smooth the dense pen path before extraction (image-skeleton analog);
            # otherwise integration jitter inflates the arc length
            window = min(9, 2 * (len(pts) // 4) + 1)
            kernel = np.ones(window) / window
            pad = window // 2
            padded = np.pad(pts, ((pad, pad), (0, 0)), mode="edge")
            pts = np.column_stack(
                [np.convolve(padded[:, 0], kernel, mode="valid"),
                 np.convolve(padded[:, 1], kernel, mode="valid")]
            )
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        keep = np.concatenate(([True], seg > 1e-12))
        path = pts[keep]
        if len(path) < 2 or np.sum(seg) < 1e-9:
            # pen effectively did not move: repeat the time-sampled positions
            seq = record.stroke_seq(i)
            x = np.interp(stroke.timestamps, seq.timestamps, seq.points[:, 0])
            y = np.interp(stroke.timestamps, seq.timestamps, seq.points[:, 1])
            out.append(WaypointSeq(stroke.timestamps, np.column_stack([x, y])))
            continue
        from .corpus import StrokePolyline, resample_waypoints

        resampled = resample_waypoints(StrokePolyline(path), len(stroke), max(stroke.duration, 1e-9))
        out.append(WaypointSeq(stroke.timestamps, resampled.points))
    return tuple(out)


def learner_adapt(
    learner: LearnerModel,
    experienced: Writing,
    character: CharacterSpec,
    rate: float | None = None,
) -> LearnerModel:
    """Blend the latent intent toward an experienced writing, per waypoint.

    The experienced writing must already be resampled to the latent timeline.
    rate defaults to the learner's adaptation_rate; the teaching loop passes an
    engagement-scaled rate during guided sessions.
    """
    eta = learner.adaptation_rate if rate is None else float(rate)
    intent = learner.intent(character.id)
    if len(experienced) != len(intent):
        raise SimulationError("experienced writing and intent disagree on stroke count")
    updated = []
    for old, new in zip(intent, experienced):
        if len(new) != len(old):
            raise SimulationError("experienced stroke not resampled to the latent length")
        updated.append(WaypointSeq(old.timestamps, (1.0 - eta) * old.points + eta * new.points))
    latent = dict(learner.latent_style)
    latent[character.id] = tuple(updated)
    return replace(learner, latent_style=latent)


def shift_intent(learner: LearnerModel, character: CharacterSpec, reference: Writing, gain: float) -> LearnerModel:
    """Move the intent a small step toward the reference (visual-copying model)."""
    intent = learner.intent(character.id)
    shifted = tuple(
        WaypointSeq(old.timestamps, old.points + gain * (ref.points - old.points))
        for old, ref in zip(intent, reference)
    )
    latent = dict(learner.latent_style)
    latent[character.id] = shifted
    return replace(learner, latent_style=latent)
