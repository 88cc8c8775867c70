/** Typed client for the gateway /v1 API. The fetch implementation is
 * injectable so tests run against a fixture-backed gateway. */

import type {
  ApiErrorBody,
  ModerateResponse,
  PipelineConfigDoc,
  QueueEntry,
  TraceDoc,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly field?: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.field = body.field;
    this.status = status;
  }
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      ...init,
      headers: { "Content-Type": "application/json", ...(init?.headers ?? {}) },
    });
    if (!response.ok) {
      let body: ApiErrorBody;
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        body = { code: "http_error", message: `HTTP ${response.status}` };
      }
      throw new ApiError(response.status, body);
    }
    return (await response.json()) as T;
  }

  async queue(status?: string): Promise<QueueEntry[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    const body = await this.request<{ entries: QueueEntry[] }>(`/v1/queue${query}`);
    return body.entries;
  }

  resolve(
    traceId: string,
    action: "keep" | "remove",
    resolver: string,
    note?: string,
  ): Promise<{ trace_id: string; status: string }> {
    return this.request(`/v1/queue/${traceId}/resolve`, {
      method: "POST",
      body: JSON.stringify({ action, resolver, note: note ?? null }),
    });
  }

  trace(traceId: string): Promise<TraceDoc> {
    return this.request(`/v1/traces/${traceId}`);
  }

  config(): Promise<PipelineConfigDoc> {
    return this.request("/v1/config");
  }

  patchConfig(changes: Partial<PipelineConfigDoc>): Promise<PipelineConfigDoc> {
    return this.request("/v1/config", { method: "PATCH", body: JSON.stringify(changes) });
  }

  moderate(request: {
    subreddit: string;
    comment: string;
    context?: string | null;
  }): Promise<ModerateResponse> {
    return this.request("/v1/moderate", { method: "POST", body: JSON.stringify(request) });
  }
}

export function apiBase(): string {
  const env = (globalThis as { process?: { env?: Record<string, string> } }).process?.env;
  const fromWindow =
    typeof window !== "undefined"
      ? (window as { CONSOLE_API_BASE?: string }).CONSOLE_API_BASE
      : undefined;
  return fromWindow ?? env?.CONSOLE_API_BASE ?? "http://127.0.0.1:8080";
}
