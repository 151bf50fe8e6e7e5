/**
 * Client-side session state machine.
 *
 * Holds exactly one active session and derives all of its state from server
 * responses.  Answers are only ever sent from `answer()`, which the DOM layer
 * calls on an explicit user click — the controller never generates a choice
 * on its own.
 */

import {
  ApiError,
  type Choice,
  type FinishResponse,
  type ModelResponse,
  type SchemaDoc,
  type SessionClient,
  type SessionStatus,
} from "./api.js";

export class SessionController {
  status: SessionStatus | null = null;
  schema: SchemaDoc | null = null;
  /** Latest get_model response; the only source for displayed model state. */
  model: ModelResponse | null = null;
  finishSummary: FinishResponse | null = null;
  lastError: string | null = null;

  private inflight = false;

  constructor(private readonly client: SessionClient) {}

  get busy(): boolean {
    return this.inflight;
  }

  get sessionId(): string {
    if (this.status === null) throw new Error("no active session");
    return this.status.session_id;
  }

  get canAnswer(): boolean {
    return (
      !this.inflight &&
      this.status !== null &&
      this.status.state === "awaiting_answer" &&
      this.status.pending !== null
    );
  }

  async start(
    schema: SchemaDoc,
    config: Record<string, unknown> | null = null,
    idempotencyKey: string | null = null,
  ): Promise<void> {
    const detail = await this.client.createSession(schema, config, idempotencyKey);
    this.schema = detail.schema;
    this.status = detail;
    this.model = null;
    this.finishSummary = null;
    this.lastError = null;
    await this.syncModel();
  }

  /** Re-attach to an existing session (e.g. after a page reload). */
  async resume(sessionId: string): Promise<void> {
    const detail = await this.client.getSession(sessionId);
    this.schema = detail.schema;
    this.status = detail;
    this.model = null;
    this.finishSummary = null;
    this.lastError = null;
    await this.syncModel();
  }

  /**
   * Submit one explicit user choice.
   *
   * Returns false without touching the network when no answer is possible —
   * in particular while a previous submission is still in flight, so a rapid
   * double click produces exactly one server call.  A 409 conflict (another
   * client won the race, or our view is stale) re-syncs to the server's
   * pending pair instead of failing.
   */
  async answer(choice: Choice): Promise<boolean> {
    if (!this.canAnswer) return false;
    const expected = this.status!.answered;
    this.inflight = true;
    try {
      this.status = await this.client.submitAnswer(this.sessionId, choice, expected);
      this.lastError = null;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.lastError = error.detail;
        this.status = await this.client.getPending(this.sessionId);
      } else if (error instanceof ApiError) {
        this.lastError = error.detail;
      } else {
        throw error;
      }
    } finally {
      this.inflight = false;
    }
    await this.syncModel();
    return true;
  }

  /** Refresh the pending pair and status from the server. */
  async refresh(): Promise<void> {
    if (this.status === null) return;
    this.status = await this.client.getPending(this.sessionId);
    await this.syncModel();
  }

  async finishSession(): Promise<void> {
    if (this.status === null || this.inflight) return;
    this.inflight = true;
    try {
      this.finishSummary = await this.client.finish(this.sessionId);
      this.status = await this.client.getPending(this.sessionId);
    } finally {
      this.inflight = false;
    }
    await this.syncModel();
  }

  /**
   * Keep `model` in lockstep with the server's current model version.  The
   * field is only ever assigned from get_model responses, so whatever the UI
   * displays is exactly what the server last reported.
   */
  private async syncModel(): Promise<void> {
    if (this.status === null || this.status.model_version < 1) return;
    if (this.model !== null && this.model.model_version === this.status.model_version) return;
    this.model = await this.client.getModel(this.sessionId);
  }
}
