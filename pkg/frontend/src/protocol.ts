// Wire types for the session service. Units on the wire are meters and
// seconds; all display scaling happens client-side.

export type Phase = "PRETEST" | "TEACHING" | "EVALUATION" | "DONE";

export interface SessionSnapshot {
  session_id: string;
  character_id: string;
  phase: Phase;
  iteration: number;
  pretest_count: number;
  evaluation_count: number;
  initial_stiffness?: [number, number];
}

export interface CharacterInfo {
  id: string;
  stroke_count: number;
  strokes: [number, number][][];
}

export interface StrokePayload {
  timestamps: number[];
  points: [number, number][];
}

export interface ViaPayload {
  times: number[];
  points: [number, number][];
  count_interior: number;
}

export interface TeachingStep {
  session_id: string;
  iteration: number;
  of_iterations: number;
  strokes: StrokePayload[];
  via_points: ViaPayload[];
  posterior_band: number[][][]; // per stroke, per waypoint: [cxx, cxy, cyy]
  impedance: { k_d: [number, number]; b_d: [number, number] };
  reference: { points: [number, number][] }[];
}

export interface GuidanceReply {
  guide?: [number, number];
  correction?: [number, number];
  progress?: number;
  stroke?: number;
  compute_ms?: number;
  dropped?: boolean;
  kind?: string;
  // present on iteration-complete replies (a session snapshot)
  session_id?: string;
  character_id?: string;
  phase?: Phase;
  iteration?: number;
  pretest_count?: number;
  evaluation_count?: number;
}

export interface SessionReport {
  session_id: string;
  m1: { pretest: number; evaluation: number; improvement_percent: number | null };
  m2: { pretest: number; evaluation: number; improvement_percent: number | null };
  mean_correction_per_iteration: number[];
  stiffness_trace: number[][];
}

export interface WritingSample {
  t: number;
  x: number;
  y: number;
}

export interface WritingStroke {
  samples: WritingSample[];
}
