// Session flow state machine. The server is the authority on phase
// transitions: the client only mirrors snapshots it receives and refuses to
// move forward on its own.

import type { Phase, SessionSnapshot } from "./protocol.js";

const ORDER: Phase[] = ["PRETEST", "TEACHING", "EVALUATION", "DONE"];

export interface FlowState {
  phase: Phase;
  iteration: number;
  pretestCount: number;
  evaluationCount: number;
  writingsNeeded: number;
  iterationsNeeded: number;
}

export function initialFlow(writingsNeeded = 3, iterationsNeeded = 9): FlowState {
  return {
    phase: "PRETEST",
    iteration: 0,
    pretestCount: 0,
    evaluationCount: 0,
    writingsNeeded,
    iterationsNeeded,
  };
}

export class PhaseError extends Error {}

export function applySnapshot(state: FlowState, snapshot: SessionSnapshot): FlowState {
  const from = ORDER.indexOf(state.phase);
  const to = ORDER.indexOf(snapshot.phase);
  if (to < 0) throw new PhaseError(`unknown phase ${snapshot.phase}`);
  if (to < from) throw new PhaseError(`server reported regression ${state.phase} -> ${snapshot.phase}`);
  if (to > from + 1) throw new PhaseError(`server skipped a phase ${state.phase} -> ${snapshot.phase}`);
  return {
    ...state,
    phase: snapshot.phase,
    iteration: snapshot.iteration,
    pretestCount: snapshot.pretest_count,
    evaluationCount: snapshot.evaluation_count,
  };
}

export function instructions(state: FlowState): string {
  switch (state.phase) {
    case "PRETEST":
      return `Write the character from memory (${state.pretestCount}/${state.writingsNeeded}).`;
    case "TEACHING":
      return `Trace along the guide; corrections push you back (round ${state.iteration + 1}/${state.iterationsNeeded}).`;
    case "EVALUATION":
      return `Write the character again without the guide (${state.evaluationCount}/${state.writingsNeeded}).`;
    case "DONE":
      return "Session complete — see your improvement below.";
  }
}

export function strokesRemaining(state: FlowState): number {
  if (state.phase === "PRETEST") return state.writingsNeeded - state.pretestCount;
  if (state.phase === "EVALUATION") return state.writingsNeeded - state.evaluationCount;
  return 0;
}
