/**
 * Thin HTTP client for the ctcsim environment service. No simulation logic
 * lives here: every value is produced server-side and crosses the boundary
 * as JSON (float64-exact for rewards and features).
 */

import type {
  ReplayStreams,
  ServiceStats,
  SessionInfo,
  StepResult,
  TaskDetail,
  TaskRow,
  ValidateResponse,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export class ClosedHandleError extends Error {
  constructor(sessionId: string) {
    super(`session ${sessionId} is closed`);
    this.name = "ClosedHandleError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: unknown };
      if (body.detail !== undefined) detail = JSON.stringify(body.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ServiceError(detail, response.status);
  }
  return (await response.json()) as T;
}

/**
 * One live environment handle. Created by CtcClient.createSession and
 * invalidated by close(); use-after-close fails client-side without
 * touching the service.
 */
export class BoundEnv {
  private closed = false;
  private terminated = false;

  constructor(
    private readonly baseUrl: string,
    readonly info: SessionInfo,
  ) {}

  get sessionId(): string {
    return this.info.session_id;
  }

  get nAgents(): number {
    return this.info.n_agents;
  }

  get nActions(): number {
    return this.info.n_actions;
  }

  get isTerminated(): boolean {
    return this.terminated;
  }

  private ensureOpen(): void {
    if (this.closed) throw new ClosedHandleError(this.info.session_id);
  }

  async step(actions: number[]): Promise<StepResult> {
    this.ensureOpen();
    if (actions.length !== this.info.n_agents) {
      // fail before crossing the boundary; the session state is untouched
      throw new RangeError(
        `expected ${this.info.n_agents} actions, got ${actions.length}`,
      );
    }
    const result = await request<StepResult>(
      `${this.baseUrl}/sessions/${this.info.session_id}/step`,
      { method: "POST", body: JSON.stringify({ actions }) },
    );
    this.terminated = result.terminated;
    return result;
  }

  async availableActions(): Promise<boolean[][]> {
    this.ensureOpen();
    const body = await request<{ masks: boolean[][]; terminated: boolean }>(
      `${this.baseUrl}/sessions/${this.info.session_id}/masks`,
    );
    return body.masks;
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    await request(`${this.baseUrl}/sessions/${this.info.session_id}`, {
      method: "DELETE",
    });
  }
}

export class CtcClient {
  constructor(readonly baseUrl: string = "http://127.0.0.1:8000") {}

  async health(): Promise<{ status: string; version: string }> {
    return request(`${this.baseUrl}/health`);
  }

  async stats(): Promise<ServiceStats> {
    return request(`${this.baseUrl}/stats`);
  }

  async listTasks(variant?: string): Promise<TaskRow[]> {
    const suffix = variant ? `?variant=${encodeURIComponent(variant)}` : "";
    return request(`${this.baseUrl}/tasks${suffix}`);
  }

  async taskDetail(name: string): Promise<TaskDetail> {
    return request(`${this.baseUrl}/tasks/${encodeURIComponent(name)}`);
  }

  async validateSpec(spec: Record<string, unknown>): Promise<ValidateResponse> {
    return request(`${this.baseUrl}/tasks/validate`, {
      method: "POST",
      body: JSON.stringify({ spec }),
    });
  }

  /** Reset factory: instantiate one episode and hand back its bound handle. */
  async createSession(options: {
    task?: string;
    spec?: Record<string, unknown>;
    seed?: number;
  }): Promise<BoundEnv> {
    const info = await request<SessionInfo>(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: JSON.stringify({ seed: 0, ...options }),
    });
    return new BoundEnv(this.baseUrl, info);
  }

  /** Server-side re-run of an action sequence: the canonical stream. */
  async replayEpisode(options: {
    task?: string;
    spec?: Record<string, unknown>;
    seed: number;
    actions: number[][];
  }): Promise<ReplayStreams> {
    return request(`${this.baseUrl}/episodes/replay`, {
      method: "POST",
      body: JSON.stringify(options),
    });
  }
}
