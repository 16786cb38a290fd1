// Thin typed client over the scenario service endpoints. The UI never computes
// indicators, prompts, or labels itself; everything shown is echoed from here.

import { ApiError, ScenarioRequest, ScenarioResult, WindowPage } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "unreachable", `service unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      let code = "http_error";
      let message = `${resp.status}`;
      try {
        const body = (await resp.json()) as { error?: { code: string; message: string } };
        if (body.error) {
          code = body.error.code;
          message = body.error.message;
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; windows: number }> {
    return this.request("/api/health");
  }

  listWindows(page = 0, pageSize = 50): Promise<WindowPage> {
    return this.request(`/api/windows?page=${page}&page_size=${pageSize}`);
  }

  windowChartUrl(windowId: number): string {
    return `${this.baseUrl}/api/windows/${windowId}/chart.png`;
  }

  imageUrl(result: ScenarioResult): string {
    return this.baseUrl + result.image_path;
  }

  generate(req: ScenarioRequest): Promise<ScenarioResult> {
    return this.request("/api/scenarios", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}
