// Wire types mirroring the service's JSON (snake_case throughout).

export interface WindowSummary {
  id: number;
  open_time: number;
  close: string;
  rsi: number;
  macd: number;
  has_ground_truth: boolean;
}

export interface WindowPage {
  windows: WindowSummary[];
  total: number;
  page: number;
  page_size: number;
  /** ground-truth chart for window n = input chart of window n + lookahead */
  lookahead: number;
}

export interface ScenarioRequest {
  window_id: number;
  rsi_override?: number;
  macd_override?: number;
  seed?: number;
  steps?: number;
  text_guidance?: number;
  image_guidance?: number;
}

export type LabelColor = "red" | "blue" | "black";

export interface ScenarioResult {
  scenario_id: string;
  window_id: number;
  image_path: string;
  predicted_label: LabelColor;
  ground_truth_label: LabelColor | null;
  prompt: string;
  seed: number;
  steps: number;
  text_guidance: number;
  image_guidance: number;
  cached: boolean;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}
