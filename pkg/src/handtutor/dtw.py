"""Dynamic time warping between waypoint sequences.

Symmetric step set {(1,0),(0,1),(1,1)}, Euclidean point cost, no window.
Backtracking tie-break prefers the diagonal step, then advancing the first
sequence. Supplies per-waypoint deviation profiles for initial stiffness
and underlies the similarity metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import WaypointSeq

__all__ = ["AlignmentResult", "DeviationProfile", "dtw_align", "deviation_profile"]


@dataclass(frozen=True)
class AlignmentResult:
    """Cumulative DTW distance and the monotone index path that attains it."""

    distance: float
    path: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class DeviationProfile:
    """Per-reference-waypoint (dx, dy) between aligned writing and reference."""

    per_waypoint: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.per_waypoint, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("deviation profile must be (n, 2)")
        object.__setattr__(self, "per_waypoint", arr)

    def __len__(self) -> int:
        return len(self.per_waypoint)

    def mean_abs(self) -> np.ndarray:
        """Mean absolute deviation per axis."""
        return np.mean(np.abs(self.per_waypoint), axis=0)


def _point_array(seq) -> np.ndarray:
    if isinstance(seq, WaypointSeq):
        return seq.points
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a WaypointSeq or an (n, 2) array")
    return arr


def dtw_align(a, b) -> AlignmentResult:
    """Align two sequences, returning minimal cumulative cost and one optimal path."""
    pa = _point_array(a)
    pb = _point_array(b)
    n, m = len(pa), len(pb)
    if n == 0 or m == 0:
        raise ValueError("dtw_align requires non-empty sequences")

    # Pairwise Euclidean costs, then row-wise accumulation. Within a row the
    # left-neighbor dependency is a min-plus prefix scan: a path entering the
    # row at column k and sweeping right to j costs B[k] - S[k] + S[j], so
    # acc[i, j] = S[j] + running_min(B - S) with S the row cost prefix sum.
    diff = pa[:, None, :] - pb[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=2))

    acc = np.empty((n, m))
    prefix = np.cumsum(cost, axis=1)
    for i in range(n):
        c = cost[i]
        s = prefix[i]
        if i == 0:
            entry = np.full(m, np.inf)
            entry[0] = c[0]
        else:
            prev = acc[i - 1]
            entry = np.empty(m)
            entry[0] = c[0] + prev[0]
            entry[1:] = c[1:] + np.minimum(prev[1:], prev[:-1])
        acc[i] = s + np.minimum.accumulate(entry - s)

    # Backtrack. Preference order: diagonal, then (+1,0) (i.e. predecessor (i-1, j)).
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return AlignmentResult(float(acc[n - 1, m - 1]), tuple(path))


def deviation_profile(mean_writing, reference) -> DeviationProfile:
    """Per-reference-index deviation of the aligned mean writing from the reference.

    Writing points warped onto the same reference index are averaged before
    subtracting the reference point.
    """
    pw = _point_array(mean_writing)
    pr = _point_array(reference)
    if len(pw) != len(pr):
        raise ValueError(f"sequences must have equal length, got {len(pw)} and {len(pr)}")
    result = dtw_align(pw, pr)
    sums = np.zeros_like(pr)
    counts = np.zeros(len(pr))
    for i, j in result.path:
        sums[j] += pw[i]
        counts[j] += 1
    dev = sums / counts[:, None] - pr
    return DeviationProfile(dev)
