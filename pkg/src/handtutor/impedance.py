"""Variable impedance law for guided writing.

Stiffness composes a reference part (set once from the pre-test deviation)
with an engagement part updated each iteration through a sigmoid of the
previous iteration's tracking error; the result is clamped to safe bounds and
damping follows the half-square-root rule. The corrective force is the plain
spring-damper law in end-effector space.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dtw import DeviationProfile

__all__ = [
    "ImpedanceConfig",
    "ImpedanceState",
    "initial_stiffness",
    "psi",
    "update_engagement",
    "compose",
    "control_force",
]


def _axis_pair(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        arr = np.array([float(arr), float(arr)])
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a scalar or length-2 per-axis value")
    return arr


@dataclass(frozen=True)
class ImpedanceConfig:
    """Adaptation constants and stiffness bounds (planar, per-axis)."""

    beta_r: float = 1000.0  # N/m^2, pre-test deviation to stiffness
    beta_k: float = 100.0  # N/m^2, engagement update rate
    alpha: float = 2000.0  # sigmoid scaling
    pi_threshold: float = 0.05  # m, error magnitude that flips the update sign
    k_min: np.ndarray = (200.0, 200.0)  # N/m
    k_max: np.ndarray = (1200.0, 1200.0)  # N/m
    sample_interval: float = 0.001  # s

    def __post_init__(self):
        object.__setattr__(self, "k_min", _axis_pair(self.k_min, "k_min"))
        object.__setattr__(self, "k_max", _axis_pair(self.k_max, "k_max"))
        if np.any(self.k_min <= 0) or np.any(self.k_min > self.k_max):
            raise ValueError("require 0 < k_min <= k_max per axis")
        for name in ("beta_r", "beta_k", "alpha", "pi_threshold", "sample_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ImpedanceState:
    """Per-axis stiffness decomposition and the resulting guidance gains."""

    k_r: np.ndarray
    k_s: np.ndarray
    k_d: np.ndarray
    b_d: np.ndarray
    iteration: int = 0

    def advance(self, k_s: np.ndarray, cfg: ImpedanceConfig) -> "ImpedanceState":
        nxt = compose(self.k_r, k_s, cfg)
        return replace(nxt, iteration=self.iteration + 1)


def initial_stiffness(dev: DeviationProfile, cfg: ImpedanceConfig) -> np.ndarray:
    """Reference stiffness from the mean absolute pre-test deviation per axis."""
    if len(dev) == 0:
        raise ValueError("deviation profile is empty")
    raw = cfg.beta_r * dev.mean_abs()
    return np.clip(raw, cfg.k_min, cfg.k_max)


def psi(delta: float, cfg: ImpedanceConfig) -> float:
    """Sigmoid of squared error against the threshold band, in (-1, 1).

    With u = alpha * (delta^2 - pi^2) - pi this is (e^u - 1) / (e^u + 1),
    computed as tanh(u / 2) to stay overflow-safe.
    """
    omega = float(delta) ** 2 - cfg.pi_threshold**2
    return float(np.tanh((cfg.alpha * omega - cfg.pi_threshold) / 2.0))


def update_engagement(k_s_prev, error_profile: DeviationProfile, cfg: ImpedanceConfig) -> np.ndarray:
    """Engagement stiffness update from the previous iteration's tracking error.

    Per axis: k_s += beta_k * psi(mean |error_axis|), floored at zero so the
    engagement term never drives the composed stiffness below the reference.
    """
    prev = _axis_pair(k_s_prev, "k_s_prev")
    mean_err = error_profile.mean_abs()
    delta = np.array([psi(mean_err[0], cfg), psi(mean_err[1], cfg)])
    return np.maximum(prev + cfg.beta_k * delta, 0.0)


def compose(k_r, k_s, cfg: ImpedanceConfig) -> ImpedanceState:
    """Combine reference and engagement stiffness; clamp, then derive damping."""
    kr = _axis_pair(k_r, "k_r")
    ks = _axis_pair(k_s, "k_s")
    kd = np.clip(kr + ks, cfg.k_min, cfg.k_max)
    bd = 0.5 * np.sqrt(kd)
    return ImpedanceState(k_r=kr, k_s=ks, k_d=kd, b_d=bd)


def control_force(state: ImpedanceState, x, x_dot, x_d, x_d_dot) -> np.ndarray:
    """Spring-damper corrective force toward the reference, element-wise per axis."""
    x = _axis_pair(x, "x")
    x_dot = _axis_pair(x_dot, "x_dot")
    x_d = _axis_pair(x_d, "x_d")
    x_d_dot = _axis_pair(x_d_dot, "x_d_dot")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_dot))):
        raise ValueError("non-finite state")
    return -state.k_d * (x - x_d) - state.b_d * (x_dot - x_d_dot)
