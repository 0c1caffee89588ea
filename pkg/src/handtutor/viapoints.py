"""Curvature-based trajectory compression into training via-points.

Interior waypoints are scored by planar parametric curvature; the highest-
scoring ones are kept (with non-maximum suppression so picks spread across
the stroke) and the stroke endpoints are always appended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import WaypointSeq

__all__ = ["ViaPointSet", "curvature_profile", "extract_via_points"]


@dataclass(frozen=True)
class ViaPointSet:
    """Selected (t, point) anchors the teaching trajectory must pass near."""

    times: np.ndarray
    points: np.ndarray
    source_indices: np.ndarray
    h: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.points, dtype=float)
        idx = np.asarray(self.source_indices, dtype=int)
        if not (len(t) == len(p) == len(idx)):
            raise ValueError("via-point arrays must have equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("via-point times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "source_indices", idx)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def interior_indices(self) -> np.ndarray:
        """Source indices of the curvature picks (endpoints excluded)."""
        return self.source_indices[1:-1]


def curvature_profile(seq: WaypointSeq, per_coordinate: bool = False) -> np.ndarray:
    """Unsigned planar curvature at each waypoint; endpoints and zero-speed points get 0.

    Derivatives are central finite differences on the index grid. With
    per_coordinate=True, the scalar graph-curvature formula is applied to each
    coordinate against the index and the results summed (comparison variant).
    """
    pts = seq.points
    n = len(pts)
    if n < 3:
        raise ValueError(f"curvature needs at least 3 waypoints, got {n}")
    kappa = np.zeros(n)
    d1 = (pts[2:] - pts[:-2]) / 2.0
    d2 = pts[2:] - 2.0 * pts[1:-1] + pts[:-2]
    if per_coordinate:
        for axis in (0, 1):
            kappa[1:-1] += np.abs(d2[:, axis]) / (1.0 + d1[:, axis] ** 2) ** 1.5
        return kappa
    speed_sq = np.sum(d1 * d1, axis=1)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = np.abs(cross) / speed_sq**1.5
    interior[speed_sq == 0.0] = 0.0  # repeated points: zero speed, curvature defined as 0
    kappa[1:-1] = interior
    return kappa


def extract_via_points(seq: WaypointSeq, h: int) -> ViaPointSet:
    """Pick the h highest-curvature interior waypoints plus both endpoints.

    Greedy selection in descending curvature (ties broken by lower index) with
    a minimum index separation of ceil(n / (2 h)) between interior picks.
    """
    n = len(seq)
    if h < 1:
        raise ValueError(f"h must be >= 1, got {h}")
    if n < h + 2:
        raise ValueError(f"sequence of length {n} too short for h={h}")
    if h > n / 4:
        raise ValueError(f"h={h} too large for n={n} (require h <= n/4)")

    kappa = curvature_profile(seq)
    radius = math.ceil(n / (2 * h))
    order = sorted(range(1, n - 1), key=lambda i: (-kappa[i], i))
    picked: list[int] = []
    for i in order:
        if len(picked) == h:
            break
        if all(abs(i - j) >= radius for j in picked):
            picked.append(i)

    indices = np.array(sorted(set(picked) | {0, n - 1}), dtype=int)
    return ViaPointSet(seq.timestamps[indices], seq.points[indices], indices, h)
