// Thin typed client over the study service HTTP endpoints.

import {
  CheckPayload,
  Condition,
  RatingForm,
  SCHEMA_VERSION,
  SessionPayload,
  SuggestionsPayload,
  TaskPayload,
} from "./types";

export class ApiError extends Error {
  status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

export class SchemaMismatch extends Error {}

function checkSchema(payload: { schema_version?: number }): void {
  if (payload.schema_version !== SCHEMA_VERSION) {
    throw new SchemaMismatch(`expected schema_version ${SCHEMA_VERSION}, got ${payload.schema_version}`);
  }
}

export class StudyClient {
  base: string;

  constructor(base: string = "") {
    this.base = base.replace(/\/$/, "");
  }

  private async request<T extends { schema_version?: number }>(
    path: string,
    init?: RequestInit,
  ): Promise<T> {
    const response = await fetch(this.base + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body.detail ?? response.statusText);
    }
    checkSchema(body);
    return body as T;
  }

  createSession(condition: Condition, seed: number): Promise<SessionPayload> {
    return this.request<SessionPayload>("/session", {
      method: "POST",
      body: JSON.stringify({ condition, seed }),
    });
  }

  getTask(sessionId: string, taskId: string): Promise<TaskPayload> {
    return this.request<TaskPayload>(`/session/${sessionId}/task/${taskId}`);
  }

  getSuggestions(sessionId: string, taskId: string, span: string): Promise<SuggestionsPayload> {
    return this.request<SuggestionsPayload>(
      `/session/${sessionId}/task/${taskId}/suggestions?span=${span}`,
    );
  }

  move(sessionId: string, taskId: string, target: string): Promise<TaskPayload> {
    return this.request<TaskPayload>(`/session/${sessionId}/task/${taskId}/move`, {
      method: "POST",
      body: JSON.stringify({ target }),
    });
  }

  check(sessionId: string, taskId: string): Promise<CheckPayload> {
    return this.request<CheckPayload>(`/session/${sessionId}/task/${taskId}/check`, {
      method: "POST",
      body: JSON.stringify({}),
    });
  }

  apply(sessionId: string, taskId: string, span: string, candidate: string): Promise<TaskPayload> {
    return this.request<TaskPayload>(`/session/${sessionId}/task/${taskId}/apply`, {
      method: "POST",
      body: JSON.stringify({ span, candidate }),
    });
  }

  revert(sessionId: string, taskId: string): Promise<TaskPayload> {
    return this.request<TaskPayload>(`/session/${sessionId}/task/${taskId}/revert`, {
      method: "POST",
      body: JSON.stringify({}),
    });
  }

  rate(sessionId: string, taskId: string, form: RatingForm): Promise<unknown> {
    return this.request(`/session/${sessionId}/task/${taskId}/rating`, {
      method: "POST",
      body: JSON.stringify(form),
    });
  }

  submit(sessionId: string): Promise<unknown> {
    return this.request(`/session/${sessionId}/submit`, {
      method: "POST",
      body: JSON.stringify({}),
    });
  }
}
