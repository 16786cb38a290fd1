// Session state and the submit queue. Pure logic, no DOM: the app layer renders
// whatever lives here, and the tests drive it directly.

import { ServiceClient } from "./api.js";
import { ApiError, ScenarioRequest, ScenarioResult, WindowSummary } from "./types.js";

export const RSI_MIN = 0;
export const RSI_MAX = 100;
// MACD slider range; generations accept any finite override, the slider just
// needs sane travel. Mirrors the service's default conditioning scale.
export const MACD_SCALE = 1000;

export interface Overrides {
  rsi: number | null;
  macd: number | null;
  seed: number | null;
  steps: number | null;
  textGuidance: number | null;
  imageGuidance: number | null;
}

export const emptyOverrides = (): Overrides => ({
  rsi: null,
  macd: null,
  seed: null,
  steps: null,
  textGuidance: null,
  imageGuidance: null,
});

export function clampRsi(value: number): number {
  return Math.min(RSI_MAX, Math.max(RSI_MIN, value));
}

export function clampMacd(value: number): number {
  return Math.min(MACD_SCALE, Math.max(-MACD_SCALE, value));
}

/** Build the wire request; slider values are clamped before submission so the
 * payload always satisfies the service's bounds. */
export function buildRequest(windowId: number, o: Overrides): ScenarioRequest {
  const req: ScenarioRequest = { window_id: windowId };
  if (o.rsi !== null) req.rsi_override = clampRsi(o.rsi);
  if (o.macd !== null) req.macd_override = clampMacd(o.macd);
  if (o.seed !== null) req.seed = o.seed;
  if (o.steps !== null) req.steps = Math.max(1, Math.round(o.steps));
  if (o.textGuidance !== null) req.text_guidance = o.textGuidance;
  if (o.imageGuidance !== null) req.image_guidance = o.imageGuidance;
  return req;
}

export interface HistoryEntry {
  result: ScenarioResult;
  submittedAt: number;
}

/** What a result card needs; fully derived from the service response. */
export interface CardView {
  prompt: string;
  labelColor: "red" | "blue" | "black";
  groundTruthColor: "red" | "blue" | "black" | null;
  imageUrl: string;
  seed: number;
  cached: boolean;
  params: string;
}

export function cardView(result: ScenarioResult, client: ServiceClient): CardView {
  return {
    prompt: result.prompt,
    labelColor: result.predicted_label,
    groundTruthColor: result.ground_truth_label,
    imageUrl: client.imageUrl(result),
    seed: result.seed,
    cached: result.cached,
    params: `steps ${result.steps} · guidance ${result.text_guidance} · image ${result.image_guidance}`,
  };
}

/** Panel layout per the selected window: input + generated always, ground
 * truth only when the service says n+3 exists. */
export function panelCount(window: WindowSummary): 2 | 3 {
  return window.has_ground_truth ? 3 : 2;
}

export type SubmitOutcome =
  | { kind: "ok"; result: ScenarioResult }
  | { kind: "error"; status: number; code: string; message: string; retryable: boolean };

export class SessionState {
  selected: WindowSummary | null = null;
  overrides: Overrides = emptyOverrides();
  history: HistoryEntry[] = [];
  private inFlight = new Set<number>();
  private queued = new Map<number, ScenarioRequest[]>();

  constructor(private readonly client: ServiceClient) {}

  select(window: WindowSummary): void {
    this.selected = window;
    this.overrides = emptyOverrides();
  }

  /** At most one generation in flight per window; extra submissions queue and
   * drain in order. Resolves with the outcome of THIS submission. */
  async submit(req: ScenarioRequest): Promise<SubmitOutcome> {
    if (this.inFlight.has(req.window_id)) {
      const queue = this.queued.get(req.window_id) ?? [];
      queue.push(req);
      this.queued.set(req.window_id, queue);
      return new Promise((resolve) => {
        const poll = setInterval(() => {
          if (!this.inFlight.has(req.window_id) && queue[0] === req) {
            clearInterval(poll);
            queue.shift();
            resolve(this.submit(req));
          }
        }, 10);
      });
    }
    this.inFlight.add(req.window_id);
    try {
      const result = await this.client.generate(req);
      this.history.unshift({ result, submittedAt: Date.now() });
      return { kind: "ok", result };
    } catch (err) {
      if (err instanceof ApiError) {
        return {
          kind: "error",
          status: err.status,
          code: err.code,
          message: err.message,
          retryable: err.status === 429 || err.status === 0,
        };
      }
      throw err;
    } finally {
      this.inFlight.delete(req.window_id);
    }
  }

  pendingFor(windowId: number): number {
    return (this.queued.get(windowId)?.length ?? 0) + (this.inFlight.has(windowId) ? 1 : 0);
  }

  historyFor(windowId: number): HistoryEntry[] {
    return this.history.filter((h) => h.result.window_id === windowId);
  }
}
