// Thin HTTP + WebSocket client for the session service.

import type {
  CharacterInfo,
  GuidanceReply,
  SessionReport,
  SessionSnapshot,
  TeachingStep,
  WritingStroke,
} from "./protocol.js";

export class ServiceClient {
  constructor(private base: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) {
      const body = await res.json().catch(() => ({ detail: res.statusText }));
      throw new Error(`${res.status}: ${body.detail ?? res.statusText}`);
    }
    return res.json() as Promise<T>;
  }

  characters(): Promise<{ characters: CharacterInfo[] }> {
    return this.json("/characters");
  }

  createSession(characterId: string): Promise<SessionSnapshot> {
    return this.json("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ character_id: characterId }),
    });
  }

  submitWriting(sessionId: string, strokes: WritingStroke[]): Promise<SessionSnapshot> {
    return this.json(`/sessions/${sessionId}/writings`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ strokes }),
    });
  }

  teachingStep(sessionId: string): Promise<TeachingStep> {
    return this.json(`/sessions/${sessionId}/teaching-step`);
  }

  report(sessionId: string): Promise<SessionReport> {
    return this.json(`/sessions/${sessionId}/report`);
  }

  openGuidance(sessionId: string): GuidanceChannel {
    const proto = location.protocol === "https:" ? "wss" : "ws";
    const url = `${proto}://${location.host}${this.base}/sessions/${sessionId}/guidance`;
    return new GuidanceChannel(new WebSocket(url));
  }
}

export class GuidanceChannel {
  onreply: ((reply: GuidanceReply) => void) | null = null;
  onclose: (() => void) | null = null;

  constructor(private ws: WebSocket) {
    ws.onmessage = (event) => {
      if (this.onreply) this.onreply(JSON.parse(event.data) as GuidanceReply);
    };
    ws.onclose = () => this.onclose?.();
  }

  get open(): boolean {
    return this.ws.readyState === WebSocket.OPEN;
  }

  ready(): Promise<void> {
    if (this.ws.readyState === WebSocket.OPEN) return Promise.resolve();
    return new Promise((resolve, reject) => {
      this.ws.onopen = () => resolve();
      this.ws.onerror = () => reject(new Error("guidance socket failed"));
    });
  }

  sendSample(stroke: number, t: number, x: number, y: number): void {
    this.ws.send(JSON.stringify({ kind: "sample", stroke, t, x, y }));
  }

  complete(): void {
    this.ws.send(JSON.stringify({ kind: "complete" }));
  }

  close(): void {
    this.ws.close();
  }
}
