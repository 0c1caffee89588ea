"""Character ingestion: stroke polylines, arc-length resampling, workspace normalization.

Characters are ingested as vector stroke polylines (ordered lists of planar
points), resampled to fixed-length waypoint sequences and mapped into the
physical writing workspace. All coordinates are meters, timestamps seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "StrokePolyline",
    "CharacterSpec",
    "CharacterSet",
    "WaypointSeq",
    "CorpusError",
    "load_character_set",
    "resample_waypoints",
    "normalize_to_workspace",
    "normalize_character",
    "resample_character",
    "allocate_waypoints",
]

CHARACTER_FILE_VERSION = 1


class CorpusError(ValueError):
    """Malformed character data or an operation on degenerate geometry."""


def _as_points(points, *, context: str) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise CorpusError(f"{context}: expected an (n, 2) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise CorpusError(f"{context}: non-finite coordinate")
    return arr


@dataclass(frozen=True)
class StrokePolyline:
    """One pen-down stroke as an ordered polyline; zero-length segments are rejected."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points, context="stroke")
        if len(pts) < 2:
            raise CorpusError("stroke needs at least 2 points")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg == 0.0):
            idx = int(np.argmax(seg == 0.0))
            raise CorpusError(f"stroke has a zero-length segment at point index {idx}")
        object.__setattr__(self, "points", pts)

    @property
    def arc_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


@dataclass(frozen=True)
class CharacterSpec:
    """A reference character: ordered strokes in drawing order."""

    id: str
    strokes: tuple[StrokePolyline, ...]

    def __post_init__(self):
        if not self.id:
            raise CorpusError("character id must be non-empty")
        if len(self.strokes) < 1:
            raise CorpusError(f"character {self.id!r} has no strokes")
        object.__setattr__(self, "strokes", tuple(self.strokes))

    @property
    def stroke_count(self) -> int:
        return len(self.strokes)

    @property
    def arc_length(self) -> float:
        return sum(s.arc_length for s in self.strokes)


@dataclass(frozen=True)
class CharacterSet:
    characters: tuple[CharacterSpec, ...]
    by_id: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "characters", tuple(self.characters))
        ids = [c.id for c in self.characters]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CorpusError(f"duplicate character ids: {dup}")
        object.__setattr__(self, "by_id", {c.id: c for c in self.characters})

    def __len__(self) -> int:
        return len(self.characters)

    def __getitem__(self, char_id: str) -> CharacterSpec:
        return self.by_id[char_id]

    def stroke_count_groups(self) -> dict[int, list[str]]:
        groups: dict[int, list[str]] = {}
        for c in self.characters:
            groups.setdefault(c.stroke_count, []).append(c.id)
        return groups


@dataclass(frozen=True)
class WaypointSeq:
    """Time-indexed planar points; the universal trajectory currency.

    Timestamps are strictly increasing and pair one-to-one with points.
    """

    timestamps: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        pts = _as_points(self.points, context="waypoints")
        if ts.ndim != 1 or len(ts) != len(pts):
            raise CorpusError("timestamps and points must have equal length")
        if len(ts) < 2:
            raise CorpusError("waypoint sequence needs at least 2 samples")
        if np.any(np.diff(ts) <= 0):
            raise CorpusError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def shifted(self, dt: float) -> "WaypointSeq":
        return WaypointSeq(self.timestamps + dt, self.points)

    def with_points(self, points: np.ndarray) -> "WaypointSeq":
        return WaypointSeq(self.timestamps, points)


def load_character_set(path) -> CharacterSet:
    """Load a character-set file (JSON: header + list of {id, strokes})."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: not valid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise CorpusError(f"{path}: top level must be an object with 'version' and 'characters'")
    version = raw.get("version")
    if version != CHARACTER_FILE_VERSION:
        raise CorpusError(f"{path}: unsupported version {version!r} (expected {CHARACTER_FILE_VERSION})")
    chars_raw = raw.get("characters")
    if not isinstance(chars_raw, list) or not chars_raw:
        raise CorpusError(f"{path}: field 'characters' must be a non-empty list")
    characters = []
    for ci, entry in enumerate(chars_raw):
        if not isinstance(entry, dict) or "id" not in entry or "strokes" not in entry:
            raise CorpusError(f"{path}: characters[{ci}] must be an object with 'id' and 'strokes'")
        cid = entry["id"]
        if not isinstance(cid, str):
            raise CorpusError(f"{path}: characters[{ci}].id must be a string")
        strokes = []
        for si, stroke_pts in enumerate(entry["strokes"]):
            try:
                strokes.append(StrokePolyline(np.asarray(stroke_pts, dtype=float)))
            except (CorpusError, ValueError) as exc:
                raise CorpusError(f"{path}: character {cid!r} stroke {si}: {exc}") from None
        characters.append(CharacterSpec(cid, tuple(strokes)))
    return CharacterSet(tuple(characters))


def _cumulative_arc(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(seg)))


def resample_waypoints(stroke: StrokePolyline, n: int, duration: float) -> WaypointSeq:
    """Resample a stroke to n points equally spaced by arc length.

    Timestamps are equally spaced on [0, duration]; the first and last points
    coincide with the stroke endpoints.
    """
    if n < 2:
        raise CorpusError(f"n must be >= 2, got {n}")
    if duration <= 0:
        raise CorpusError(f"duration must be > 0, got {duration}")
    pts = stroke.points
    cum = _cumulative_arc(pts)
    total = cum[-1]
    if total <= 0:
        raise CorpusError("degenerate polyline: total arc length is 0")
    targets = np.linspace(0.0, total, n)
    x = np.interp(targets, cum, pts[:, 0])
    y = np.interp(targets, cum, pts[:, 1])
    out = np.column_stack([x, y])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return WaypointSeq(np.linspace(0.0, duration, n), out)


def _fit_transform(points: np.ndarray, workspace: tuple[float, float]):
    width, height = float(workspace[0]), float(workspace[1])
    if width <= 0 or height <= 0:
        raise CorpusError("workspace dimensions must be > 0")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = hi - lo
    if np.all(span == 0):
        raise CorpusError("all points identical: normalization scale undefined")
    # Uniform scale so the larger relative extent exactly spans its workspace side.
    sx = width / span[0] if span[0] > 0 else np.inf
    sy = height / span[1] if span[1] > 0 else np.inf
    scale = min(sx, sy)
    center_in = (lo + hi) / 2.0
    center_out = np.array([width / 2.0, height / 2.0])
    return scale, center_in, center_out


def normalize_to_workspace(seq: WaypointSeq, workspace: tuple[float, float]) -> WaypointSeq:
    """Map a sequence into [0,width]x[0,height] with uniform scale, centered."""
    scale, c_in, c_out = _fit_transform(seq.points, workspace)
    return seq.with_points((seq.points - c_in) * scale + c_out)


def normalize_character(char: CharacterSpec, workspace: tuple[float, float]) -> CharacterSpec:
    """Apply one shared uniform-scale centering transform to all strokes of a character."""
    all_pts = np.vstack([s.points for s in char.strokes])
    scale, c_in, c_out = _fit_transform(all_pts, workspace)
    strokes = tuple(
        StrokePolyline((s.points - c_in) * scale + c_out) for s in char.strokes
    )
    return CharacterSpec(char.id, strokes)


def allocate_waypoints(char: CharacterSpec, n_total: int) -> list[int]:
    """Split a character's waypoint budget across strokes proportional to arc length.

    Every stroke gets at least 2 waypoints; remainders go to the longest strokes.
    """
    s = char.stroke_count
    if n_total < 2 * s:
        raise CorpusError(f"need at least {2 * s} waypoints for {s} strokes, got {n_total}")
    lengths = np.array([st.arc_length for st in char.strokes])
    shares = lengths / lengths.sum()
    counts = np.maximum(2, np.floor(shares * n_total).astype(int))
    # Trim/pad to hit the exact budget, preferring to adjust the longest strokes.
    order = np.argsort(-lengths)
    i = 0
    while counts.sum() > n_total:
        k = order[i % s]
        if counts[k] > 2:
            counts[k] -= 1
        i += 1
    i = 0
    while counts.sum() < n_total:
        counts[order[i % s]] += 1
        i += 1
    return [int(c) for c in counts]


def resample_character(
    char: CharacterSpec, n_total: int, duration: float
) -> list[WaypointSeq]:
    """Resample all strokes of a character onto a shared [0, duration] timeline.

    The waypoint budget and the time budget are both split across strokes
    proportional to arc length; stroke windows tile [0, duration] in stroke
    order (pen transit between strokes is instantaneous).
    """
    counts = allocate_waypoints(char, n_total)
    lengths = np.array([s.arc_length for s in char.strokes])
    time_shares = lengths / lengths.sum()
    seqs = []
    t0 = 0.0
    for stroke, n_s, share in zip(char.strokes, counts, time_shares):
        dt = float(share * duration)
        seq = resample_waypoints(stroke, n_s, dt)
        seqs.append(seq.shifted(t0))
        t0 += dt
    return seqs
