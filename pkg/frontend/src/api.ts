/** Typed client for the review service. All mutations go through here; the
 * UI holds no authoritative state. */

import type {
  AssetRecord,
  BatchRunResult,
  EvaluationPage,
  EvaluationRecord,
  ExportResult,
  JustificationConfig,
  NotificationRecord,
  ReviewRequest,
  StatsPayload,
  VectorValidation,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public detail: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface QueueQuery {
  status?: string;
  category?: string;
  org?: string;
  product?: string;
  notification?: string;
  limit?: number;
  cursor?: string;
}

function buildQuery(params: Record<string, string | number | undefined>): string {
  const query = new URLSearchParams();
  for (const [key, value] of Object.entries(params)) {
    if (value === undefined || value === "") continue;
    query.set(key, String(value));
  }
  const text = query.toString();
  return text ? `?${text}` : "";
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
    };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // Non-JSON error body; keep the status text.
      }
      throw new ApiError(`HTTP ${response.status}: ${detail}`, response.status, detail);
    }
    return (await response.json()) as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  listEvaluations(query: QueueQuery = {}): Promise<EvaluationPage> {
    return this.request(`/evaluations${buildQuery({ ...query })}`);
  }

  getEvaluation(id: string): Promise<EvaluationRecord> {
    return this.request(`/evaluations/${encodeURIComponent(id)}`);
  }

  submitReview(id: string, body: ReviewRequest): Promise<EvaluationRecord> {
    return this.request(`/evaluations/${encodeURIComponent(id)}/review`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  getAsset(id: string): Promise<AssetRecord> {
    return this.request(`/assets/${encodeURIComponent(id)}`);
  }

  getNotification(id: string): Promise<NotificationRecord> {
    return this.request(`/notifications/${encodeURIComponent(id)}`);
  }

  addAsset(body: Record<string, unknown>): Promise<AssetRecord> {
    return this.request("/assets", { method: "POST", body: JSON.stringify(body) });
  }

  addNotification(body: Record<string, unknown>): Promise<NotificationRecord> {
    return this.request("/notifications", { method: "POST", body: JSON.stringify(body) });
  }

  runBatch(since?: string | null): Promise<BatchRunResult> {
    return this.request("/batch/run", {
      method: "POST",
      body: JSON.stringify(since === undefined ? {} : { since }),
    });
  }

  exportRetraining(since?: string): Promise<ExportResult> {
    return this.request(`/export/retraining${buildQuery({ since })}`);
  }

  stats(): Promise<StatsPayload> {
    return this.request("/stats");
  }

  justifications(): Promise<JustificationConfig> {
    return this.request("/config/justifications");
  }

  validateVector(text: string): Promise<VectorValidation> {
    return this.request("/cvss/validate", {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }
}
