// Live round-trip against a mock-backed agent service: approve mutates the
// device-state digest, decline preserves it, and the streamed events project
// to the same DAG the turn endpoint served.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { replay } from "../src/viewmodel.js";

const PORT = 8700 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;
const QUERY = "Create a calendar invite for Meeting with Sid and Lutfi";

const FIXTURE = {
  id: "fig-0",
  query: QUERY,
  available_tools: [
    "get_email_address",
    "create_calendar_event",
    "send_sms",
    "open_note",
  ],
  plan:
    '1. get_email_address(name="Sid")\n' +
    '2. get_email_address(name="Lutfi")\n' +
    '3. create_calendar_event(title="Meeting", attendees=[$1, $2])',
  split: "train",
};

let server: ChildProcess;
const api = new ApiClient(BASE);

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "plankit-console-"));
  const dataset = join(dir, "reference.jsonl");
  writeFileSync(dataset, JSON.stringify(FIXTURE) + "\n");
  server = spawn(
    "python3",
    [
      "-m",
      "plankit.cli",
      "serve",
      "--port",
      String(PORT),
      "--dataset",
      dataset,
      "--backend",
      "mock-gold",
    ],
    { stdio: "inherit" },
  );
  const deadline = Date.now() + 20_000;
  while (Date.now() < deadline) {
    if (await api.health()) return;
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("agent service did not become healthy");
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe("live console round-trip", () => {
  it("renders the 16-tool catalog", async () => {
    const tools = await api.getTools();
    expect(tools).toHaveLength(16);
    expect(tools[0].name).toBe("compose_new_email");
  });

  it("decline preserves the device-state digest", async () => {
    const session = await api.createSession(0);
    expect(session.approve_before_execute).toBe(true);
    const turn = await api.postQuery(session.session_id, QUERY);
    expect(turn.status).toBe("awaiting_approval");
    expect(turn.trace).toBeNull();

    const declined = await api.confirm(session.session_id, turn.turn_id, false);
    expect(declined.status).toBe("declined");
    const info = await api.getSession(session.session_id);
    expect(info.state_digest).toBe(session.state_digest);
  });

  it("approve executes and mutates the device-state digest", async () => {
    const session = await api.createSession(0);
    const turn = await api.postQuery(session.session_id, QUERY);
    const approved = await api.confirm(session.session_id, turn.turn_id, true);
    expect(approved.status).toBe("executed");
    expect(approved.trace?.final_state_digest).not.toBe(session.state_digest);
    const info = await api.getSession(session.session_id);
    expect(info.state_digest).not.toBe(session.state_digest);
    expect(info.state_digest).toBe(approved.trace?.final_state_digest);
  });

  it("projects streamed events to the exact served DAG and statuses", async () => {
    const session = await api.createSession(0);
    const turn = await api.postQuery(session.session_id, QUERY);
    await api.confirm(session.session_id, turn.turn_id, true);

    const events = await api.collectEvents(session.session_id);
    expect(events.map((e) => e.seq)).toEqual(events.map((_, i) => i));
    const kinds = events.map((e) => e.kind);
    expect(kinds.slice(0, 3)).toEqual([
      "retrieval_done",
      "plan_received",
      "validated",
    ]);
    expect(kinds[kinds.length - 1]).toBe("turn_done");

    const state = replay(events);
    expect(state.turns).toHaveLength(1);
    const view = state.turns[0];
    expect(view.status).toBe("executed");
    expect(view.query).toBe(QUERY);
    // Rendered DAG node/edge sets must equal the served graph exactly.
    expect(view.dag).toEqual(turn.dag);
    expect(view.taskStatus).toEqual({ 1: "done", 2: "done", 3: "done" });

    const info = await api.getSession(session.session_id);
    expect(state.stateDigest).toBe(info.state_digest);
  });

  it("restores history from the turns endpoint on reconnect", async () => {
    const session = await api.createSession(0);
    const turn = await api.postQuery(session.session_id, QUERY);
    await api.confirm(session.session_id, turn.turn_id, true);
    await api.postQuery(session.session_id, QUERY);

    const turns = await api.getTurns(session.session_id);
    expect(turns).toHaveLength(2);
    expect(turns[0].status).toBe("executed");
    expect(turns[1].status).toBe("awaiting_approval");
    expect(turns[0].dag?.edges).toEqual([
      [1, 3],
      [2, 3],
    ]);
  });
});
