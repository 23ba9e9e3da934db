/** Client-side session state.
 *
 * The view is a pure function of (stroke list, last accepted server
 * payload): the ink layer is redrawn from the stroke list on every change
 * and pushes are applied strictly in revision order, so replaying the same
 * strokes always reproduces the same view.
 */

export type Tool = "draw" | "erase";

export interface StrokeRecord {
  points: [number, number][];
  width: number;
  erase: boolean;
}

export interface ServerPush {
  revision: number;
  shadow?: unknown;
  synthesis?: unknown;
}

export const COMPONENT_SLUGS = [
  "left_eye",
  "right_eye",
  "nose",
  "mouth",
  "remainder",
] as const;

export type ComponentSlug = (typeof COMPONENT_SLUGS)[number];

export class CanvasState {
  strokes: StrokeRecord[] = [];
  tool: Tool = "draw";
  strokeWidth = 1.5;
  sessionId: string | null = null;
  lastRevision = -1;
  weights: Record<ComponentSlug, number> = {
    left_eye: 0,
    right_eye: 0,
    nose: 0,
    mouth: 0,
    remainder: 0,
  };

  addStroke(points: [number, number][], width: number, erase: boolean): StrokeRecord {
    if (points.length < 2) throw new Error("a stroke needs at least 2 points");
    if (width <= 0) throw new Error("stroke width must be positive");
    const stroke: StrokeRecord = {
      points: points.map(([x, y]) => [x, y] as [number, number]),
      width,
      erase,
    };
    this.strokes.push(stroke);
    return stroke;
  }

  /** Apply a push if it is newer than everything seen; stale pushes drop. */
  acceptPush(push: ServerPush): boolean {
    if (push.revision <= this.lastRevision) return false;
    this.lastRevision = push.revision;
    return true;
  }

  setWeight(slug: ComponentSlug, value: number): number {
    const clamped = Math.min(1, Math.max(0, value));
    this.weights[slug] = clamped;
    return clamped;
  }

  replay(): StrokeRecord[] {
    return this.strokes.map((s) => ({
      points: s.points.map(([x, y]) => [x, y] as [number, number]),
      width: s.width,
      erase: s.erase,
    }));
  }
}

/** Drop pointer samples closer than minDist to the previous kept point. */
export function thinPoints(
  points: [number, number][],
  minDist = 0.75,
): [number, number][] {
  if (points.length === 0) return [];
  const kept: [number, number][] = [points[0]];
  for (const [x, y] of points.slice(1)) {
    const [px, py] = kept[kept.length - 1];
    if (Math.hypot(x - px, y - py) >= minDist) kept.push([x, y]);
  }
  return kept;
}

export type PostStroke = (stroke: StrokeRecord) => Promise<void>;

/** Orders stroke uploads and survives a flaky network.
 *
 * Strokes stay queued until the server acknowledges them; a failed post
 * flips the offline flag, keeps the stroke at the head of the queue and
 * retries until the connection comes back.
 */
export class StrokeSender {
  private queue: StrokeRecord[] = [];
  private pumping = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  offline = false;
  onStatus: (offline: boolean, pending: number) => void = () => {};

  constructor(
    private post: PostStroke,
    private retryMs = 1000,
  ) {}

  get pending(): number {
    return this.queue.length;
  }

  enqueue(stroke: StrokeRecord): void {
    this.queue.push(stroke);
    this.onStatus(this.offline, this.queue.length);
    void this.pump();
  }

  async pump(): Promise<void> {
    if (this.pumping) return;
    this.pumping = true;
    try {
      while (this.queue.length > 0) {
        try {
          await this.post(this.queue[0]);
        } catch {
          if (!this.offline) {
            this.offline = true;
            this.onStatus(true, this.queue.length);
          }
          this.timer = setTimeout(() => void this.pump(), this.retryMs);
          return;
        }
        this.queue.shift();
        if (this.offline) {
          this.offline = false;
        }
        this.onStatus(this.offline, this.queue.length);
      }
    } finally {
      this.pumping = false;
    }
  }

  dispose(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.queue = [];
  }
}
