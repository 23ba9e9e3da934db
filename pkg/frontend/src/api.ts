/** Thin client for the sketching service HTTP + WebSocket API. */

import type { ServerPush, StrokeRecord } from "./state.js";

export interface SessionInfo {
  session_id: string;
  revision: number;
  k: number;
  tag_filter: string | null;
  auto_update: boolean;
  weights: Record<string, number>;
  canvas: { width: number; height: number };
}

export interface ShadowComponentPayload {
  pgm: string;
  blank: boolean;
  entropy: number;
  neighbors: { id: string; weight: number }[];
}

export interface ShadowPayload {
  revision?: number;
  k: number;
  composite_pgm: string;
  components: Record<string, ShadowComponentPayload>;
}

export interface SynthesisPayload {
  revision?: number;
  width: number;
  height: number;
  pgm: string;
  provenance_pgm: string;
  preclamp_f64?: string;
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      detail = JSON.stringify(await resp.json());
    } catch {
      // keep the status code
    }
    throw new Error(`request failed: ${detail}`);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(public base: string) {
    this.base = base.replace(/\/+$/, "");
  }

  createSession(config: Record<string, unknown> = {}): Promise<SessionInfo> {
    return fetch(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    }).then((r) => asJson<SessionInfo>(r));
  }

  sendStroke(sessionId: string, stroke: StrokeRecord): Promise<{ revision: number }> {
    return fetch(`${this.base}/sessions/${sessionId}/strokes`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(stroke),
    }).then((r) => asJson<{ revision: number }>(r));
  }

  setWeights(
    sessionId: string,
    weights: Record<string, number>,
  ): Promise<{ revision: number; weights: Record<string, number> }> {
    return fetch(`${this.base}/sessions/${sessionId}/weights`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ weights }),
    }).then((r) => asJson<{ revision: number; weights: Record<string, number> }>(r));
  }

  fetchCanvas(sessionId: string): Promise<{ revision: number; pgm: string }> {
    return fetch(`${this.base}/sessions/${sessionId}/canvas`).then((r) =>
      asJson<{ revision: number; pgm: string }>(r),
    );
  }

  fetchShadow(sessionId: string): Promise<ShadowPayload> {
    return fetch(`${this.base}/sessions/${sessionId}/shadow`).then((r) =>
      asJson<ShadowPayload>(r),
    );
  }

  fetchSynthesis(
    sessionId: string,
    precision: "pgm" | "float" = "pgm",
  ): Promise<SynthesisPayload> {
    return fetch(
      `${this.base}/sessions/${sessionId}/synthesis?precision=${precision}`,
    ).then((r) => asJson<SynthesisPayload>(r));
  }

  liveUrl(sessionId: string): string {
    return `${this.base.replace(/^http/, "ws")}/sessions/${sessionId}/live`;
  }
}

type WebSocketLike = {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
};

export type WebSocketFactory = (url: string) => WebSocketLike;

const defaultFactory: WebSocketFactory = (url) =>
  new (globalThis as { WebSocket: new (u: string) => WebSocketLike }).WebSocket(url);

/** Reconnecting subscription to a session's live push stream. */
export class LiveFeed {
  private ws: WebSocketLike | null = null;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  onPush: (push: ServerPush) => void;
  onState: (connected: boolean) => void = () => {};

  constructor(
    private url: string,
    onPush: (push: ServerPush) => void,
    private reconnectMs = 1000,
    private factory: WebSocketFactory = defaultFactory,
  ) {
    this.onPush = onPush;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => this.onState(true);
    ws.onmessage = (ev) => {
      const push = JSON.parse(String(ev.data)) as ServerPush;
      this.onPush(push);
    };
    ws.onerror = () => {
      // the close handler owns reconnection
    };
    ws.onclose = () => {
      this.onState(false);
      if (!this.closed) {
        this.timer = setTimeout(() => this.connect(), this.reconnectMs);
      }
    };
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
  }
}
