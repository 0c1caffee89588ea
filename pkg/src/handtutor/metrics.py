"""Similarity metrics, improvement statistics, and report emission.

Both similarity metrics are DTW costs normalized by alignment path length so
scores are comparable across waypoint counts: one aligns whole characters by
centroid (global structure), the other aligns each stroke by its starting
point (stroke-level accuracy).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import WaypointSeq
from .dtw import dtw_align
from .simulator import InteractionRecord, Writing

__all__ = [
    "SimilarityScore",
    "ExperimentReport",
    "metric_m1",
    "metric_m2",
    "improvement_percent",
    "mean_interaction_force",
    "emit_report",
    "concat_writing",
]

REPORT_VERSION = 1


@dataclass(frozen=True)
class SimilarityScore:
    metric: str  # "M1" | "M2"
    value: float

    def __post_init__(self):
        if self.metric not in ("M1", "M2"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.value < 0:
            raise ValueError("similarity score must be non-negative")


def concat_writing(writing: Writing) -> WaypointSeq:
    """Join per-stroke sequences into one whole-character sequence."""
    ts = np.concatenate([s.timestamps for s in writing])
    pts = np.vstack([s.points for s in writing])
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    pts = pts[order]
    # guard against duplicate boundary timestamps after concatenation
    keep = np.concatenate(([True], np.diff(ts) > 0))
    return WaypointSeq(ts[keep], pts[keep])


def _normalized_dtw(a: np.ndarray, b: np.ndarray) -> float:
    result = dtw_align(a, b)
    return result.distance / len(result.path)


def metric_m1(written: WaypointSeq, reference: WaypointSeq) -> SimilarityScore:
    """Centroid-aligned normalized DTW over whole characters."""
    wa = written.points - written.points.mean(axis=0)
    wb = reference.points - reference.points.mean(axis=0)
    return SimilarityScore("M1", _normalized_dtw(wa, wb))


def metric_m2(written, reference) -> SimilarityScore:
    """Start-aligned normalized DTW per stroke, averaged across strokes.

    Mismatched stroke counts compare the first min(count) strokes.
    """
    n = min(len(written), len(reference))
    if n == 0:
        raise ValueError("need at least one stroke")
    costs = []
    for ws, rs in zip(written[:n], reference[:n]):
        wa = ws.points - ws.points[0]
        wb = rs.points - rs.points[0]
        costs.append(_normalized_dtw(wa, wb))
    return SimilarityScore("M2", float(np.mean(costs)))


def improvement_percent(pre, post) -> float | None:
    """Relative reduction of the mean score, as a percentage.

    Returns None (not applicable) when the pre-phase mean is zero.
    """
    pre_vals = [s.value for s in pre]
    post_vals = [s.value for s in post]
    if not pre_vals or not post_vals:
        raise ValueError("both phases need at least one score")
    mean_pre = float(np.mean(pre_vals))
    if mean_pre == 0.0:
        return None
    return 100.0 * (mean_pre - float(np.mean(post_vals))) / mean_pre


def mean_interaction_force(record: InteractionRecord) -> float:
    """Mean Euclidean norm of the learner force over all steps."""
    if len(record) == 0:
        raise ValueError("empty interaction record")
    return float(np.mean(np.linalg.norm(record.learner_force, axis=1)))


@dataclass(frozen=True)
class ExperimentReport:
    """Per-session rows plus aggregate tables, all JSON-serializable."""

    rows: tuple[dict, ...]
    config: dict = field(default_factory=dict)

    def aggregates(self) -> list[dict]:
        """Mean/std of improvements and forces per (method, stroke-count group)."""
        groups: dict[tuple[str, int], list[dict]] = {}
        for row in self.rows:
            groups.setdefault((row["method"], row["stroke_count"]), []).append(row)
        out = []
        for (method, strokes) in sorted(groups):
            rows = groups[(method, strokes)]
            agg = {"method": method, "stroke_group": strokes, "sessions": len(rows)}
            for key in ("improvement_m1", "improvement_m2", "mean_force"):
                vals = [r[key] for r in rows if r.get(key) is not None]
                agg[f"{key}_mean"] = float(np.mean(vals)) if vals else None
                agg[f"{key}_std"] = float(np.std(vals)) if vals else None
            out.append(agg)
        return out

    def method_means(self, key: str) -> dict[str, float]:
        per_method: dict[str, list[float]] = {}
        for row in self.rows:
            if row.get(key) is not None:
                per_method.setdefault(row["method"], []).append(row[key])
        return {m: float(np.mean(v)) for m, v in sorted(per_method.items())}

    def to_json(self) -> str:
        payload = {
            "version": REPORT_VERSION,
            "config": self.config,
            "rows": sorted(self.rows, key=lambda r: (r["learner"], r["character"], r["method"])),
            "aggregates": self.aggregates(),
            "method_means": {
                "improvement_m1": self.method_means("improvement_m1"),
                "improvement_m2": self.method_means("improvement_m2"),
                "mean_force": self.method_means("mean_force"),
            },
        }
        return json.dumps(payload, sort_keys=True, indent=1)


def _csv_bytes(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write the report plus plot-ready aggregate tables; deterministic bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out / "report.json"
    report_path.write_text(report.to_json(), encoding="utf-8")
    written.append(report_path)

    aggs = report.aggregates()
    imp_rows = [
        [a["method"], a["stroke_group"], a["sessions"],
         _fmt(a["improvement_m1_mean"]), _fmt(a["improvement_m1_std"]),
         _fmt(a["improvement_m2_mean"]), _fmt(a["improvement_m2_std"])]
        for a in aggs
    ]
    imp_path = out / "improvement_by_group.csv"
    imp_path.write_text(
        _csv_bytes(
            ["method", "stroke_group", "sessions", "m1_mean", "m1_std", "m2_mean", "m2_std"],
            imp_rows,
        ),
        encoding="utf-8",
    )
    written.append(imp_path)

    force_rows = [
        [a["method"], a["stroke_group"], _fmt(a["mean_force_mean"]), _fmt(a["mean_force_std"])]
        for a in aggs
    ]
    force_path = out / "force_by_group.csv"
    force_path.write_text(
        _csv_bytes(["method", "stroke_group", "force_mean", "force_std"], force_rows),
        encoding="utf-8",
    )
    written.append(force_path)
    return written


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))
