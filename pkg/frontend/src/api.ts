/** Thin typed client over the service's HTTP JSON interface. */

import type {
  DatabaseSummary,
  HistoryTurn,
  SessionCreated,
  StepReply,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!res.ok) {
    let detail = `${res.status} ${res.statusText}`;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(detail, res.status);
  }
  return (await res.json()) as T;
}

export function listDatabases(): Promise<DatabaseSummary[]> {
  return request<DatabaseSummary[]>("/databases");
}

export function createSession(databaseId: string): Promise<SessionCreated> {
  return request<SessionCreated>("/sessions", {
    method: "POST",
    body: JSON.stringify({ database_id: databaseId }),
  });
}

export function sendMessage(
  sessionId: string,
  text: string,
): Promise<StepReply> {
  return request<StepReply>(`/sessions/${sessionId}/messages`, {
    method: "POST",
    body: JSON.stringify({ text }),
  });
}

export function fetchHistory(sessionId: string): Promise<HistoryTurn[]> {
  return request<HistoryTurn[]>(`/sessions/${sessionId}/history`);
}
