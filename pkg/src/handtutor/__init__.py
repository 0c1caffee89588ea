"""Adaptive handwriting-teaching engine.

Learns a writer's style from trajectory samples, generates personalized
teaching trajectories anchored to reference via-points, and guides writing
with an error-adaptive variable impedance law — end to end against a
simulated learner or live through the session service.
"""

__version__ = "0.1.0"

from .corpus import CharacterSet, CharacterSpec, StrokePolyline, WaypointSeq
from .dtw import AlignmentResult, DeviationProfile, deviation_profile, dtw_align
from .gmrgp import TrajectoryPosterior, fuse_gaussians, generate_training_waypoints, gp_posterior
from .impedance import ImpedanceConfig, ImpedanceState, compose, control_force, psi
from .metrics import ExperimentReport, metric_m1, metric_m2
from .simulator import InteractionRecord, LearnerModel, SimulationConfig
from .style import GmmModel, GmrOutput, StyleDataset, fit_gmm, gmr_condition, style_mean_curve
from .teaching import ExperimentConfig, Method, run_experiment, run_session
from .viapoints import ViaPointSet, curvature_profile, extract_via_points

__all__ = [
    "__version__",
    "CharacterSet",
    "CharacterSpec",
    "StrokePolyline",
    "WaypointSeq",
    "AlignmentResult",
    "DeviationProfile",
    "deviation_profile",
    "dtw_align",
    "TrajectoryPosterior",
    "fuse_gaussians",
    "generate_training_waypoints",
    "gp_posterior",
    "ImpedanceConfig",
    "ImpedanceState",
    "compose",
    "control_force",
    "psi",
    "ExperimentReport",
    "metric_m1",
    "metric_m2",
    "InteractionRecord",
    "LearnerModel",
    "SimulationConfig",
    "GmmModel",
    "GmrOutput",
    "StyleDataset",
    "fit_gmm",
    "gmr_condition",
    "style_mean_curve",
    "ExperimentConfig",
    "Method",
    "run_experiment",
    "run_session",
    "ViaPointSet",
    "curvature_profile",
    "extract_via_points",
]
