import { ServiceClient, GuidanceChannel } from "./client.js";
import { makeMapping, toCanvas } from "./geometry.js";
import { StrokeRecorder, SampleQueue } from "./capture.js";
import { drawTeachingOverlay, drawCorrectionArrow, drawPolyline, stiffnessFraction } from "./overlay.js";
import { initialFlow, applySnapshot, instructions, type FlowState } from "./state.js";
import type { CharacterInfo, GuidanceReply, TeachingStep, WritingStroke } from "./protocol.js";

const client = new ServiceClient("");

// ---- DOM scaffold ----------------------------------------------------------
const root = document.createElement("div");
root.className = "wrapper";
document.body.append(root);

const title = document.createElement("h1");
title.textContent = "Handwriting Tutor";
root.append(title);

const controls = document.createElement("div");
controls.className = "controls";
root.append(controls);

const charSelect = document.createElement("select");
controls.append(charSelect);

const startBtn = document.createElement("button");
startBtn.textContent = "Start session";
controls.append(startBtn);

const status = document.createElement("p");
status.className = "status";
root.append(status);

const meterWrap = document.createElement("div");
meterWrap.className = "meter";
const meterFill = document.createElement("div");
meterFill.className = "meter-fill";
meterWrap.append(meterFill);
const meterLabel = document.createElement("span");
meterLabel.textContent = "guidance strength";
root.append(meterWrap, meterLabel);

const canvas = document.createElement("canvas");
canvas.width = 640;
canvas.height = 640;
canvas.className = "board";
root.append(canvas);
const ctx = canvas.getContext("2d")!;

const reportBox = document.createElement("pre");
reportBox.className = "report";
root.append(reportBox);

// ---- session state ---------------------------------------------------------
let mapping = makeMapping(canvas.width, canvas.height);
let characters: CharacterInfo[] = [];
let sessionId: string | null = null;
let flow: FlowState = initialFlow();
let character: CharacterInfo | null = null;
let step: TeachingStep | null = null;
let channel: GuidanceChannel | null = null;
let strokeIndex = 0;
let pendingStrokes: WritingStroke[] = [];
let liveCorrection: GuidanceReply | null = null;
let penDown = false;
let strokeStartMs = 0;
const recorder = new StrokeRecorder();
const replies = new SampleQueue<GuidanceReply>(240);
const inked: [number, number][][] = [];

function setStatus(text: string): void {
  status.textContent = text;
}

function redraw(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#fbfaf7";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  // workspace border
  const [x0, y0] = toCanvas(mapping, 0, mapping.workspace);
  const side = mapping.workspace * mapping.scale;
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(x0, y0, side, side);

  if (flow.phase === "TEACHING" && step) {
    drawTeachingOverlay(ctx, mapping, step);
    meterFill.style.width = `${stiffnessFraction(step.impedance.k_d) * 100}%`;
  } else if (character && flow.phase !== "TEACHING") {
    // faint reference for orientation during pre-test/evaluation
    for (const stroke of character.strokes) {
      drawPolyline(ctx, mapping, normalizeAbstract(stroke), {
        color: flow.phase === "PRETEST" ? "#eee" : "#f2f2f2",
        width: 2,
      });
    }
  }
  for (const stroke of inked) {
    drawPolyline(ctx, mapping, stroke, { color: "#444", width: 2 });
  }
  const fresh = replies.drain();
  if (fresh.length) liveCorrection = fresh[fresh.length - 1];
  if (penDown && liveCorrection?.correction && liveCorrection.guide && lastPen) {
    drawCorrectionArrow(ctx, mapping, lastPen, liveCorrection.correction);
  }
  requestAnimationFrame(redraw);
}

function normalizeAbstract(stroke: [number, number][]): [number, number][] {
  // abstract corpus units (0..100) mapped into the workspace square
  return stroke.map(([x, y]) => [x / 100 * mapping.workspace, y / 100 * mapping.workspace]);
}

let lastPen: [number, number] | null = null;

// ---- pointer handling ------------------------------------------------------
canvas.addEventListener("pointerdown", (e) => {
  if (!sessionId) return;
  if (flow.phase === "TEACHING" && channel && !channel.open) {
    void openChannel();
  }
  penDown = true;
  strokeStartMs = performance.now();
  recorder.begin(strokeStartMs, e.offsetX, e.offsetY);
  inked.push([]);
  canvas.setPointerCapture(e.pointerId);
});

canvas.addEventListener("pointermove", (e) => {
  if (!penDown || !sessionId) return;
  recorder.extend(performance.now(), e.offsetX, e.offsetY);
  const [wx, wy] = workspacePoint(e.offsetX, e.offsetY);
  lastPen = [wx, wy];
  inked[inked.length - 1].push([wx, wy]);
  if (flow.phase === "TEACHING" && channel?.open && step) {
    const timeline = step.strokes[strokeIndex].timestamps;
    const t0 = timeline[0];
    const t1 = timeline[timeline.length - 1];
    const t = Math.min(t0 + (performance.now() - strokeStartMs) / 1000, t1);
    channel.sendSample(strokeIndex, t, wx, wy);
  }
});

canvas.addEventListener("pointerup", async () => {
  if (!penDown || !sessionId || !character) return;
  penDown = false;
  const stroke = recorder.finish(mapping);
  liveCorrection = null;
  if (!stroke) {
    inked.pop();
    setStatus("Stroke too short, discarded. " + instructions(flow));
    return;
  }
  if (flow.phase === "TEACHING") {
    strokeIndex += 1;
    if (strokeIndex >= character.stroke_count) {
      channel?.complete();
    } else {
      setStatus(`Stroke ${strokeIndex + 1} of ${character.stroke_count}.`);
    }
    return;
  }
  pendingStrokes.push(stroke);
  if (pendingStrokes.length >= character.stroke_count) {
    const strokes = pendingStrokes;
    pendingStrokes = [];
    try {
      const snapshot = await client.submitWriting(sessionId, strokes);
      flow = applySnapshot(flow, snapshot);
      inked.length = 0;
      setStatus(instructions(flow));
      if (flow.phase === "TEACHING") await enterTeaching();
      if (flow.phase === "DONE") await showReport();
    } catch (err) {
      setStatus(`Submission failed (${String(err)}); writing discarded, try again.`);
    }
  } else {
    setStatus(`Stroke ${pendingStrokes.length + 1} of ${character.stroke_count}.`);
  }
});

function workspacePoint(px: number, py: number): [number, number] {
  const [x, y] = [(px - mapping.offsetX) / mapping.scale, mapping.workspace - (py - mapping.offsetY) / mapping.scale];
  return [x, y];
}

// ---- phase transitions -----------------------------------------------------
async function openChannel(): Promise<void> {
  channel = client.openGuidance(sessionId!);
  channel.onreply = (reply) => {
    if (reply.kind === "iteration-complete") {
      flow = applySnapshot(flow, reply as import("./protocol.js").SessionSnapshot);
      inked.length = 0;
      strokeIndex = 0;
      if (flow.phase === "TEACHING") {
        void client.teachingStep(sessionId!).then((s) => {
          step = s;
          setStatus(instructions(flow));
        });
      } else {
        channel?.close();
        channel = null;
        step = null;
        setStatus(instructions(flow));
      }
      return;
    }
    replies.push(reply);
  };
  channel.onclose = () => {
    if (flow.phase === "TEACHING") {
      // current stroke is lost but the iteration has not advanced; a fresh
      // channel opens on the next pen-down
      strokeIndex = 0;
      inked.length = 0;
      setStatus("Guidance connection dropped; start the character again.");
    }
  };
  await channel.ready();
}

async function enterTeaching(): Promise<void> {
  step = await client.teachingStep(sessionId!);
  strokeIndex = 0;
  inked.length = 0;
  await openChannel();
  setStatus(instructions(flow));
}

async function showReport(): Promise<void> {
  const report = await client.report(sessionId!);
  const fmt = (v: number | null) => (v === null ? "n/a" : `${v.toFixed(1)}%`);
  reportBox.textContent = [
    `overall-shape improvement: ${fmt(report.m1.improvement_percent)}`,
    `stroke-shape improvement:  ${fmt(report.m2.improvement_percent)}`,
    `guidance stiffness trace:  ${report.stiffness_trace.map((k) => k[0].toFixed(0)).join(" -> ")}`,
  ].join("\n");
}

startBtn.addEventListener("click", async () => {
  const characterId = charSelect.value;
  character = characters.find((c) => c.id === characterId) ?? null;
  if (!character) return;
  const snapshot = await client.createSession(characterId);
  sessionId = snapshot.session_id;
  flow = initialFlow();
  flow = applySnapshot(flow, snapshot);
  pendingStrokes = [];
  inked.length = 0;
  reportBox.textContent = "";
  setStatus(instructions(flow));
});

async function boot(): Promise<void> {
  const { characters: list } = await client.characters();
  characters = list;
  for (const c of list) {
    const option = document.createElement("option");
    option.value = c.id;
    option.textContent = `${c.id} (${c.stroke_count} strokes)`;
    charSelect.append(option);
  }
  mapping = makeMapping(canvas.width, canvas.height);
  setStatus("Pick a character and start a session.");
  requestAnimationFrame(redraw);
}

void boot();
