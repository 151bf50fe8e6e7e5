/**
 * Typed client for the session service HTTP+JSON API.
 *
 * The transport is injected so tests can fake the wire without a server;
 * in the browser it is just `fetch`.
 */

export type FeatureDoc =
  | { name: string; kind: "continuous"; bounds: [number, number] }
  | { name: string; kind: "categorical"; labels: string[] };

export interface SchemaDoc {
  features: FeatureDoc[];
}

export interface PendingPair {
  a: number[];
  b: number[];
}

export type SessionState = "awaiting_answer" | "idle" | "finished";
export type SessionPhase = "warmup" | "model";
export type Choice = "A" | "B";

export interface SessionStatus {
  session_id: string;
  state: SessionState;
  phase: SessionPhase;
  answered: number;
  initial_pairs: number;
  model_version: number;
  pending: PendingPair | null;
}

/** Status plus the schema echo returned by create/get-session. */
export interface SessionDetail extends SessionStatus {
  schema: SchemaDoc;
}

export interface ExplanationLeaf {
  kind: "leaf";
  leaf_index: number;
  pair_count: number;
  mean?: number;
  std?: number;
}

export interface ExplanationSplit {
  kind: "split";
  feature: string;
  feature_index: number;
  test:
    | { type: "threshold"; threshold: number }
    | { type: "category_equals"; label_index: number };
  left_label: string;
  right_label: string;
  split_score: number;
  discarded_count: number;
  left: ExplanationNode;
  right: ExplanationNode;
}

export type ExplanationNode = ExplanationLeaf | ExplanationSplit;

export interface ExplanationDoc {
  leaf_count: number;
  root: ExplanationNode;
}

export interface ModelResponse {
  model_version: number;
  fitted: boolean;
  explanation: ExplanationDoc | null;
  recommendation: number[] | null;
  recommendation_stats: { leaf: number; mean: number; std: number } | null;
}

export interface FinishResponse {
  session_id: string;
  state: SessionState;
  answered: number;
  model_version: number;
  recommendation: number[] | null;
}

export interface TraceRecord {
  pair: PendingPair;
  choice: Choice;
  timestamp: number;
  model_version: number;
}

export interface TraceResponse {
  session_id: string;
  records: TraceRecord[];
}

/** The slice of `fetch` the client actually uses. */
export interface TransportResponse {
  status: number;
  json(): Promise<unknown>;
}

export type Transport = (path: string, init?: RequestInit) => Promise<TransportResponse>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

function errorDetail(body: unknown, status: number): string {
  if (body !== null && typeof body === "object" && "detail" in body) {
    return String((body as { detail: unknown }).detail);
  }
  return `request failed with status ${status}`;
}

export class SessionClient {
  constructor(
    private readonly transport: Transport,
    private readonly base: string = "",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.transport(this.base + path, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON body (e.g. an empty 500); the status check below still applies
    }
    if (response.status >= 400) {
      throw new ApiError(response.status, errorDetail(body, response.status));
    }
    return body as T;
  }

  private post<T>(path: string, payload?: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: payload === undefined ? undefined : JSON.stringify(payload),
    });
  }

  createSession(
    schema: SchemaDoc,
    config: Record<string, unknown> | null = null,
    idempotencyKey: string | null = null,
  ): Promise<SessionDetail> {
    const payload: Record<string, unknown> = { schema };
    if (config !== null) payload.config = config;
    if (idempotencyKey !== null) payload.idempotency_key = idempotencyKey;
    return this.post<SessionDetail>("/sessions", payload);
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request<SessionDetail>(`/sessions/${sessionId}`);
  }

  getPending(sessionId: string): Promise<SessionStatus> {
    return this.request<SessionStatus>(`/sessions/${sessionId}/pending`);
  }

  /**
   * Submit one answer.  `answeredCount` is the client's view of how many
   * comparisons were answered so far; the server uses it to detect lost
   * acknowledgements (replay) and concurrent submissions (conflict).
   */
  submitAnswer(
    sessionId: string,
    choice: Choice,
    answeredCount: number | null = null,
  ): Promise<SessionStatus> {
    const payload: Record<string, unknown> = { choice };
    if (answeredCount !== null) payload.answered_count = answeredCount;
    return this.post<SessionStatus>(`/sessions/${sessionId}/answer`, payload);
  }

  getModel(sessionId: string): Promise<ModelResponse> {
    return this.request<ModelResponse>(`/sessions/${sessionId}/model`);
  }

  finish(sessionId: string): Promise<FinishResponse> {
    return this.post<FinishResponse>(`/sessions/${sessionId}/finish`);
  }

  getTrace(sessionId: string): Promise<TraceResponse> {
    return this.request<TraceResponse>(`/sessions/${sessionId}/trace`);
  }
}
