// Canvas <-> workspace mapping. The writing workspace is a square (0.35 m a
// side by default) rendered as the largest square that fits the canvas,
// centered, with the y axis flipped (canvas y grows downward).

export interface Mapping {
  scale: number; // pixels per meter
  offsetX: number; // pixels
  offsetY: number; // pixels
  workspace: number; // meters
}

export function makeMapping(canvasWidth: number, canvasHeight: number, workspace = 0.35): Mapping {
  const side = Math.min(canvasWidth, canvasHeight);
  return {
    scale: side / workspace,
    offsetX: (canvasWidth - side) / 2,
    offsetY: (canvasHeight - side) / 2,
    workspace,
  };
}

export function toCanvas(m: Mapping, x: number, y: number): [number, number] {
  return [m.offsetX + x * m.scale, m.offsetY + (m.workspace - y) * m.scale];
}

export function toWorkspace(m: Mapping, px: number, py: number): [number, number] {
  return [(px - m.offsetX) / m.scale, m.workspace - (py - m.offsetY) / m.scale];
}

export function roundTripError(m: Mapping, px: number, py: number): number {
  const [x, y] = toWorkspace(m, px, py);
  const [qx, qy] = toCanvas(m, x, y);
  return Math.hypot(qx - px, qy - py);
}
