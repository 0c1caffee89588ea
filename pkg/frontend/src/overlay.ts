// Canvas layers for the teaching view: reference (blue), guide mean (black),
// posterior band (shaded), via-points (red), live correction arrow, and a
// stiffness meter. Arrow length is proportional to the spring force.

import type { Mapping } from "./geometry.js";
import { toCanvas } from "./geometry.js";
import type { TeachingStep } from "./protocol.js";

const K_MAX = 1200;

export function drawPolyline(
  ctx: CanvasRenderingContext2D,
  mapping: Mapping,
  points: [number, number][],
  style: { color: string; width: number; dash?: number[] },
): void {
  if (points.length < 2) return;
  ctx.save();
  ctx.strokeStyle = style.color;
  ctx.lineWidth = style.width;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  if (style.dash) ctx.setLineDash(style.dash);
  ctx.beginPath();
  const [x0, y0] = toCanvas(mapping, points[0][0], points[0][1]);
  ctx.moveTo(x0, y0);
  for (let i = 1; i < points.length; i++) {
    const [x, y] = toCanvas(mapping, points[i][0], points[i][1]);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
  ctx.restore();
}

export function drawBand(
  ctx: CanvasRenderingContext2D,
  mapping: Mapping,
  points: [number, number][],
  band: number[][],
): void {
  // two-sigma envelope from the per-waypoint covariance trace; collapses to
  // the guide line when the posterior variance is zero
  ctx.save();
  ctx.fillStyle = "rgba(120, 120, 220, 0.18)";
  for (let i = 0; i < points.length; i++) {
    const sigma = Math.sqrt(Math.max((band[i][0] + band[i][2]) / 2, 0));
    const r = 2 * sigma * mapping.scale;
    if (r < 0.5) continue;
    const [cx, cy] = toCanvas(mapping, points[i][0], points[i][1]);
    ctx.beginPath();
    ctx.arc(cx, cy, r, 0, Math.PI * 2);
    ctx.fill();
  }
  ctx.restore();
}

export function drawViaPoints(
  ctx: CanvasRenderingContext2D,
  mapping: Mapping,
  points: [number, number][],
): void {
  ctx.save();
  ctx.fillStyle = "#cc2222";
  for (const [x, y] of points) {
    const [cx, cy] = toCanvas(mapping, x, y);
    ctx.beginPath();
    ctx.arc(cx, cy, 4, 0, Math.PI * 2);
    ctx.fill();
  }
  ctx.restore();
}

export function drawCorrectionArrow(
  ctx: CanvasRenderingContext2D,
  mapping: Mapping,
  pen: [number, number],
  correction: [number, number],
  pixelsPerNewton = 2.0,
): void {
  const mag = Math.hypot(correction[0], correction[1]);
  if (mag < 1e-9) return; // zero vector: no arrow
  const [px, py] = toCanvas(mapping, pen[0], pen[1]);
  // canvas y is flipped relative to workspace y
  const dx = correction[0] * pixelsPerNewton;
  const dy = -correction[1] * pixelsPerNewton;
  const len = Math.hypot(dx, dy);
  ctx.save();
  ctx.strokeStyle = mag > 6 ? "#d04000" : "#2a9d2a";
  ctx.fillStyle = ctx.strokeStyle;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(px, py);
  ctx.lineTo(px + dx, py + dy);
  ctx.stroke();
  const angle = Math.atan2(dy, dx);
  const head = Math.min(8, len / 2);
  ctx.beginPath();
  ctx.moveTo(px + dx, py + dy);
  ctx.lineTo(px + dx - head * Math.cos(angle - 0.4), py + dy - head * Math.sin(angle - 0.4));
  ctx.lineTo(px + dx - head * Math.cos(angle + 0.4), py + dy - head * Math.sin(angle + 0.4));
  ctx.closePath();
  ctx.fill();
  ctx.restore();
}

export function stiffnessFraction(kd: [number, number]): number {
  return Math.min((kd[0] + kd[1]) / 2 / K_MAX, 1);
}

export function drawTeachingOverlay(
  ctx: CanvasRenderingContext2D,
  mapping: Mapping,
  step: TeachingStep,
): void {
  for (const ref of step.reference) {
    drawPolyline(ctx, mapping, ref.points, { color: "#2255cc", width: 3 });
  }
  for (let s = 0; s < step.strokes.length; s++) {
    drawBand(ctx, mapping, step.strokes[s].points, step.posterior_band[s]);
    drawPolyline(ctx, mapping, step.strokes[s].points, { color: "#111111", width: 2 });
    drawViaPoints(ctx, mapping, step.via_points[s].points);
  }
}
