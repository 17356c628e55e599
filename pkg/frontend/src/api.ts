// Typed client for the answerbank HTTP API. The UI consumes exactly the
// fields the service returns and never synthesizes answer content.

export type AnswerMode = "direct" | "generated";

export interface SourceHit {
  qa_id: string;
  node_id: string;
  doc_id: string;
  score: number;
  rank: number;
}

export interface QueryResponse {
  answer: string;
  mode: AnswerMode;
  top_score: number;
  sources: SourceHit[];
  source_node_ids: string[];
  latency_ms: number;
  threshold: number;
}

export interface HealthResponse {
  status: string;
  index_size: number;
  bank_size: number;
}

export interface RouterConfigResponse {
  threshold: number;
  top_k: number;
  max_context_tokens: number;
  not_answerable_text: string;
  generation_system_prompt: string;
  generation_temperature: number;
  generation_max_tokens: number;
}

export interface SourceElement {
  element_id: string;
  kind?: string;
  provenance?: string;
  page?: number;
}

export interface SourceResponse {
  node_id: string;
  doc_id: string;
  level: number;
  is_leaf: boolean;
  token_count: number;
  text: string;
  elements: SourceElement[];
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

function normalizeBaseUrl(url: string): string {
  return url.trim().replace(/\/+$/, "");
}

export class AnswerBankClient {
  private baseUrl: string;

  /** Empty base URL means same-origin requests, which is what the bundle
   *  served under /ui/ wants. */
  constructor(baseUrl = "") {
    this.baseUrl = normalizeBaseUrl(baseUrl);
  }

  setBaseUrl(url: string): void {
    this.baseUrl = normalizeBaseUrl(url);
  }

  getBaseUrl(): string {
    return this.baseUrl;
  }

  query(text: string, threshold?: number | null): Promise<QueryResponse> {
    const body: { query: string; threshold?: number } = { query: text };
    if (threshold !== undefined && threshold !== null) {
      body.threshold = threshold;
    }
    return this.request<QueryResponse>("/v1/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/v1/health");
  }

  config(): Promise<RouterConfigResponse> {
    return this.request<RouterConfigResponse>("/v1/config");
  }

  /** Node ids contain slashes (doc/n0-0); keep them as path separators and
   *  encode only the segments. */
  sources(nodeId: string): Promise<SourceResponse> {
    const path = nodeId.split("/").map(encodeURIComponent).join("/");
    return this.request<SourceResponse>(`/v1/sources/${path}`);
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    const raw = await response.text();
    let payload: unknown = null;
    if (raw) {
      try {
        payload = JSON.parse(raw);
      } catch {
        payload = null;
      }
    }
    if (!response.ok) {
      throw new ApiError(response.status, errorMessage(payload, response.status));
    }
    if (payload === null || typeof payload !== "object") {
      throw new ApiError(response.status, "response body is not JSON");
    }
    return payload as T;
  }
}

function errorMessage(payload: unknown, status: number): string {
  if (
    payload !== null &&
    typeof payload === "object" &&
    typeof (payload as { error?: unknown }).error === "string"
  ) {
    return (payload as { error: string }).error;
  }
  return `HTTP ${status}`;
}
