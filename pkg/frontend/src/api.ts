// Thin client over the agent service's documented HTTP/SSE endpoints.

import { readSse } from "./sse.js";
import type { ServerEvent, SessionInfo, ToolInfo, TurnWire } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    throw new ApiError(resp.status, `${resp.status} ${await resp.text()}`);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(public baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async health(): Promise<boolean> {
    try {
      const resp = await fetch(`${this.baseUrl}/healthz`);
      return resp.ok;
    } catch {
      return false;
    }
  }

  async getTools(): Promise<ToolInfo[]> {
    const body = await asJson<{ tools: ToolInfo[] }>(
      await fetch(`${this.baseUrl}/tools`),
    );
    return body.tools;
  }

  async createSession(
    seed?: number,
    approveBeforeExecute?: boolean,
  ): Promise<SessionInfo> {
    return asJson<SessionInfo>(
      await fetch(`${this.baseUrl}/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          seed: seed ?? null,
          approve_before_execute: approveBeforeExecute ?? null,
        }),
      }),
    );
  }

  async getSession(sessionId: string): Promise<SessionInfo> {
    return asJson<SessionInfo>(
      await fetch(`${this.baseUrl}/sessions/${sessionId}`),
    );
  }

  async postQuery(sessionId: string, query: string): Promise<TurnWire> {
    return asJson<TurnWire>(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/query`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ query }),
      }),
    );
  }

  async confirm(
    sessionId: string,
    turnId: string,
    approve: boolean,
  ): Promise<TurnWire> {
    return asJson<TurnWire>(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/turns/${turnId}/confirm`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ approve }),
      }),
    );
  }

  async getTurns(sessionId: string): Promise<TurnWire[]> {
    const body = await asJson<{ turns: TurnWire[] }>(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/turns`),
    );
    return body.turns;
  }

  // Stream events from `since` (inclusive). With follow=0 the server closes
  // after the backlog, which collectEvents relies on.
  async *streamEvents(
    sessionId: string,
    since = 0,
    follow = true,
    signal?: AbortSignal,
  ): AsyncGenerator<ServerEvent> {
    const url =
      `${this.baseUrl}/sessions/${sessionId}/events?since=${since}` +
      `&follow=${follow ? 1 : 0}`;
    const resp = await fetch(url, { signal });
    if (!resp.ok || !resp.body) {
      throw new ApiError(resp.status, `event stream failed (${resp.status})`);
    }
    for await (const msg of readSse(resp.body)) {
      yield {
        seq: msg.id === null ? -1 : Number(msg.id),
        kind: msg.event,
        data: JSON.parse(msg.data) as Record<string, unknown>,
      };
    }
  }

  async collectEvents(sessionId: string, since = 0): Promise<ServerEvent[]> {
    const events: ServerEvent[] = [];
    for await (const event of this.streamEvents(sessionId, since, false)) {
      events.push(event);
    }
    return events;
  }
}
