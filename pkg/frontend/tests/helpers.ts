/** Shared test fakes: canned schemas, a recording transport, and an
 * in-memory server that speaks the same wire protocol as the real service. */

import type {
  ExplanationDoc,
  ModelResponse,
  PendingPair,
  SchemaDoc,
  SessionStatus,
  Transport,
  TransportResponse,
} from "../src/api.js";

export const TWO_FEATURE_SCHEMA: SchemaDoc = {
  features: [
    { name: "sweetness", kind: "continuous", bounds: [0, 1] },
    { name: "roast", kind: "categorical", labels: ["light", "dark"] },
  ],
};

export function jsonResponse(status: number, body: unknown): TransportResponse {
  return { status, json: () => Promise.resolve(body) };
}

export function statusWith(overrides: Partial<SessionStatus> = {}): SessionStatus {
  return {
    session_id: "test-session",
    state: "awaiting_answer",
    phase: "warmup",
    answered: 0,
    initial_pairs: 20,
    model_version: 0,
    pending: { a: [0.2, 0], b: [0.7, 1] },
    ...overrides,
  };
}

export interface RecordedCall {
  path: string;
  method: string;
  body: unknown;
}

export interface RecordingTransport {
  transport: Transport;
  calls: RecordedCall[];
}

/** Transport that records every call and delegates responses to `handler`. */
export function recordingTransport(
  handler: (call: RecordedCall) => TransportResponse | Promise<TransportResponse>,
): RecordingTransport {
  const calls: RecordedCall[] = [];
  const transport: Transport = async (path, init) => {
    const call: RecordedCall = {
      path,
      method: init?.method ?? "GET",
      body: typeof init?.body === "string" ? JSON.parse(init.body) : null,
    };
    calls.push(call);
    return handler(call);
  };
  return { transport, calls };
}

/**
 * Minimal in-memory stand-in for the session service.
 *
 * Mirrors the endpoints and status-document shape of the real server:
 * warm-up pairs first, then model-phase pairs with a version counter, an
 * `answered_count` conflict check, and an idle state once the budget is
 * drained.  The model response embeds the version in the recommendation so
 * tests can tell responses apart.
 */
export class FakeServer {
  answered = 0;
  finished = false;
  choices: string[] = [];

  constructor(
    readonly initialPairs = 2,
    readonly iterations = 2,
  ) {}

  get modelVersion(): number {
    return this.answered < this.initialPairs ? 0 : this.answered - this.initialPairs + 1;
  }

  private pendingPair(): PendingPair | null {
    if (this.finished || this.answered >= this.initialPairs + this.iterations) return null;
    const n = this.answered;
    return { a: [0.1 + n * 0.05, 0], b: [0.9 - n * 0.05, 1] };
  }

  status(): SessionStatus {
    const pending = this.pendingPair();
    return {
      session_id: "fake-session",
      state: this.finished ? "finished" : pending !== null ? "awaiting_answer" : "idle",
      phase: this.answered < this.initialPairs ? "warmup" : "model",
      answered: this.answered,
      initial_pairs: this.initialPairs,
      model_version: this.modelVersion,
      pending,
    };
  }

  private explanation(): ExplanationDoc {
    if (this.modelVersion < 2) {
      return {
        leaf_count: 1,
        root: { kind: "leaf", leaf_index: 0, pair_count: this.answered, mean: 0.01, std: 0.005 },
      };
    }
    return {
      leaf_count: 2,
      root: {
        kind: "split",
        feature: "sweetness",
        feature_index: 0,
        test: { type: "threshold", threshold: 0.5 },
        left_label: "sweetness < 0.5",
        right_label: "sweetness >= 0.5",
        split_score: 3,
        discarded_count: 0,
        left: { kind: "leaf", leaf_index: 0, pair_count: 2, mean: -0.01, std: 0.004 },
        right: { kind: "leaf", leaf_index: 1, pair_count: this.answered - 2, mean: 0.02, std: 0.006 },
      },
    };
  }

  model(): ModelResponse {
    if (this.modelVersion === 0) {
      return {
        model_version: 0,
        fitted: false,
        explanation: null,
        recommendation: null,
        recommendation_stats: null,
      };
    }
    return {
      model_version: this.modelVersion,
      fitted: true,
      explanation: this.explanation(),
      recommendation: [this.modelVersion * 0.1, 1],
      recommendation_stats: { leaf: 0, mean: 0.02, std: 0.006 },
    };
  }

  transport: Transport = async (path, init) => {
    const method = init?.method ?? "GET";
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : null;

    if (path === "/sessions" && method === "POST") {
      return jsonResponse(201, { ...this.status(), schema: TWO_FEATURE_SCHEMA });
    }
    if (path === "/sessions/fake-session" && method === "GET") {
      return jsonResponse(200, { ...this.status(), schema: TWO_FEATURE_SCHEMA });
    }
    if (path === "/sessions/fake-session/pending") {
      return jsonResponse(200, this.status());
    }
    if (path === "/sessions/fake-session/answer" && method === "POST") {
      const payload = body as { choice: string; answered_count?: number };
      if (this.finished) return jsonResponse(409, { detail: "session is finished" });
      if (payload.answered_count !== undefined && payload.answered_count !== this.answered) {
        return jsonResponse(409, {
          detail: `answered_count ${payload.answered_count} does not match server state ${this.answered}`,
        });
      }
      if (this.pendingPair() === null) {
        return jsonResponse(409, { detail: "no pending pair to answer" });
      }
      this.choices.push(payload.choice);
      this.answered += 1;
      return jsonResponse(200, this.status());
    }
    if (path === "/sessions/fake-session/model") {
      return jsonResponse(200, this.model());
    }
    if (path === "/sessions/fake-session/finish" && method === "POST") {
      this.finished = true;
      return jsonResponse(200, {
        session_id: "fake-session",
        state: "finished",
        answered: this.answered,
        model_version: this.modelVersion,
        recommendation: this.modelVersion > 0 ? [this.modelVersion * 0.1, 1] : null,
      });
    }
    if (path === "/sessions/fake-session/trace") {
      return jsonResponse(200, {
        session_id: "fake-session",
        records: this.choices.map((choice, i) => ({
          pair: { a: [0.1 + i * 0.05, 0], b: [0.9 - i * 0.05, 1] },
          choice,
          timestamp: 1700000000 + i,
          model_version: i < this.initialPairs ? 0 : i - this.initialPairs + 1,
        })),
      });
    }
    return jsonResponse(404, { detail: `unknown route ${method} ${path}` });
  };
}
