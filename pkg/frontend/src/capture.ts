// Freehand stroke capture: raw pointer samples, no client-side smoothing
// (the server resamples), timestamps in seconds since stroke start.

import type { Mapping } from "./geometry.js";
import { toWorkspace } from "./geometry.js";
import type { WritingSample, WritingStroke } from "./protocol.js";

export interface RawSample {
  t: number; // ms since stroke start
  px: number;
  py: number;
}

export class StrokeRecorder {
  private samples: RawSample[] = [];
  private startedAt: number | null = null;

  begin(timeMs: number, px: number, py: number): void {
    this.startedAt = timeMs;
    this.samples = [{ t: 0, px, py }];
  }

  extend(timeMs: number, px: number, py: number): void {
    if (this.startedAt === null) return;
    const t = timeMs - this.startedAt;
    const last = this.samples[this.samples.length - 1];
    if (t < last.t) return; // out-of-order events are dropped
    this.samples.push({ t, px, py });
  }

  get active(): boolean {
    return this.startedAt !== null;
  }

  get sampleCount(): number {
    return this.samples.length;
  }

  /** Finish the stroke; single-point strokes are discarded (returns null). */
  finish(mapping: Mapping): WritingStroke | null {
    const raw = this.samples;
    this.samples = [];
    this.startedAt = null;
    if (raw.length < 2) return null;
    const samples: WritingSample[] = raw.map((s) => {
      const [x, y] = toWorkspace(mapping, s.px, s.py);
      return { t: s.t / 1000, x, y };
    });
    return { samples };
  }

  abort(): void {
    this.samples = [];
    this.startedAt = null;
  }
}

/** Bounded queue decoupling the guidance stream from the render loop. */
export class SampleQueue<T> {
  private items: T[] = [];

  constructor(private capacity: number) {}

  push(item: T): void {
    this.items.push(item);
    if (this.items.length > this.capacity) this.items.shift(); // drop oldest
  }

  drain(): T[] {
    const out = this.items;
    this.items = [];
    return out;
  }

  get length(): number {
    return this.items.length;
  }
}
