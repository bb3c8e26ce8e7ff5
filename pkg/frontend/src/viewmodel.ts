// Pure projection of the server event stream into the console's view state.
// applyEvent never mutates its input, so replaying a recorded log always
// reproduces the identical final state.

import type {
  DagWire,
  RetrievalInfo,
  ServerEvent,
  Timings,
  TurnWire,
  ValidationIssue,
} from "./types.js";

export type TaskStatus = "pending" | "running" | "done" | "failed";

export type TurnStatus =
  | "planning"
  | "awaiting_approval"
  | "executed"
  | "declined"
  | "rejected"
  | "backend_error";

export interface TurnView {
  turnId: string;
  query: string;
  retrieval: RetrievalInfo | null;
  planText: string | null;
  dag: DagWire | null;
  taskStatus: Record<number, TaskStatus>;
  failureReasons: Record<number, string>;
  parseErrors: string[];
  issues: ValidationIssue[];
  ok: boolean | null;
  status: TurnStatus;
  stateDigest: string | null;
  timings: Timings | null;
}

export interface ViewState {
  turns: TurnView[];
  lastSeq: number;
  stateDigest: string | null;
}

export function initialState(): ViewState {
  return { turns: [], lastSeq: -1, stateDigest: null };
}

function emptyTurn(turnId: string, query = ""): TurnView {
  return {
    turnId,
    query,
    retrieval: null,
    planText: null,
    dag: null,
    taskStatus: {},
    failureReasons: {},
    parseErrors: [],
    issues: [],
    ok: null,
    status: "planning",
    stateDigest: null,
    timings: null,
  };
}

function withTurn(
  state: ViewState,
  turnId: string,
  update: (turn: TurnView) => TurnView,
): ViewState {
  const idx = state.turns.findIndex((t) => t.turnId === turnId);
  const turns = state.turns.slice();
  if (idx === -1) {
    turns.push(update(emptyTurn(turnId)));
  } else {
    turns[idx] = update(turns[idx]);
  }
  return { ...state, turns };
}

export function applyEvent(state: ViewState, event: ServerEvent): ViewState {
  const data = event.data as Record<string, any>;
  const turnId = String(data.turn_id ?? "");
  let next = state;
  switch (event.kind) {
    case "retrieval_done":
      next = withTurn(state, turnId, (t) => ({
        ...t,
        query: String(data.query ?? t.query),
        retrieval: (data.retrieval as RetrievalInfo) ?? t.retrieval,
      }));
      break;
    case "plan_received":
      next = withTurn(state, turnId, (t) => ({
        ...t,
        planText: String(data.plan_text ?? ""),
      }));
      break;
    case "validated": {
      const dag = (data.dag as DagWire | null) ?? null;
      const taskStatus: Record<number, TaskStatus> = {};
      if (dag) {
        for (const node of dag.nodes) taskStatus[node.index] = "pending";
      }
      next = withTurn(state, turnId, (t) => ({
        ...t,
        ok: Boolean(data.ok),
        parseErrors: (data.parse_errors as string[]) ?? [],
        issues: (data.issues as ValidationIssue[]) ?? [],
        dag,
        taskStatus,
        planText: t.planText ?? (data.plan_text == null ? null : String(data.plan_text)),
        status: data.ok
          ? data.status === "awaiting_approval"
            ? "awaiting_approval"
            : "planning"
          : "rejected",
      }));
      break;
    }
    case "task_started":
      next = setTask(state, turnId, Number(data.task), "running");
      break;
    case "task_finished":
      next = setTask(state, turnId, Number(data.task), "done");
      break;
    case "task_failed":
      next = withTurn(state, turnId, (t) => ({
        ...t,
        taskStatus: { ...t.taskStatus, [Number(data.task)]: "failed" },
        failureReasons: {
          ...t.failureReasons,
          [Number(data.task)]: String(data.reason ?? "failed"),
        },
      }));
      break;
    case "turn_done": {
      const digest = data.state_digest == null ? null : String(data.state_digest);
      next = withTurn(state, turnId, (t) => ({
        ...t,
        status: (data.status as TurnStatus) ?? t.status,
        stateDigest: digest,
      }));
      next = { ...next, stateDigest: digest ?? next.stateDigest };
      break;
    }
    default:
      break;
  }
  return { ...next, lastSeq: event.seq };
}

function setTask(
  state: ViewState,
  turnId: string,
  task: number,
  status: TaskStatus,
): ViewState {
  return withTurn(state, turnId, (t) => ({
    ...t,
    taskStatus: { ...t.taskStatus, [task]: status },
  }));
}

export function replay(events: ServerEvent[], from?: ViewState): ViewState {
  let state = from ?? initialState();
  for (const event of events) state = applyEvent(state, event);
  return state;
}

// Rebuild view state from the turns endpoint (reconnect path). Events that
// arrive afterwards continue the projection seamlessly.
export function fromTurnWire(wire: TurnWire): TurnView {
  const taskStatus: Record<number, TaskStatus> = {};
  const failureReasons: Record<number, string> = {};
  if (wire.dag) {
    for (const node of wire.dag.nodes) taskStatus[node.index] = "pending";
  }
  if (wire.trace) {
    for (const e of wire.trace.events) {
      if (e.kind === "Started") taskStatus[e.task] = "running";
      else if (e.kind === "Finished") taskStatus[e.task] = "done";
      else if (e.kind === "Failed") {
        taskStatus[e.task] = "failed";
        failureReasons[e.task] = e.reason || "failed";
      }
    }
  }
  const ok = wire.validation ? wire.validation.ok && wire.parse_errors.length === 0 : null;
  return {
    turnId: wire.turn_id,
    query: wire.query,
    retrieval: wire.retrieval,
    planText: wire.plan_text,
    dag: wire.dag,
    taskStatus,
    failureReasons,
    parseErrors: wire.parse_errors.map((e) => e.detail),
    issues: wire.validation?.issues ?? [],
    ok,
    status: wire.status as TurnStatus,
    stateDigest: wire.state_digest,
    timings: wire.timings,
  };
}

export function fromTurns(turns: TurnWire[], digest: string | null): ViewState {
  return {
    turns: turns.map(fromTurnWire),
    lastSeq: -1,
    stateDigest: digest,
  };
}

// Merge POST /query or /confirm responses (which carry timings) into the
// event-projected turn without disturbing stream-owned fields.
export function mergeTurnResponse(state: ViewState, wire: TurnWire): ViewState {
  return withTurn(state, wire.turn_id, (t) => ({
    ...t,
    timings: wire.timings,
    query: t.query || wire.query,
    planText: t.planText ?? wire.plan_text,
    status: t.status === "planning" ? (wire.status as TurnStatus) : t.status,
  }));
}
