// Wire types for the agent service HTTP/SSE API. The console speaks only
// this documented contract.

export interface ToolParam {
  name: string;
  type: string;
  required: boolean;
}

export interface ToolInfo {
  name: string;
  description: string;
  params: ToolParam[];
  returns: string;
}

export interface RetrievalInfo {
  probabilities: Record<string, number>;
  selected: string[];
  method: string;
  fallback_used: boolean;
}

export interface DagNode {
  index: number;
  function: string;
  args: string;
}

export interface DagWire {
  nodes: DagNode[];
  edges: [number, number][];
}

export interface ValidationIssue {
  task_index: number;
  kind: string;
  detail: string;
}

export interface Timings {
  retrieval_ms: number;
  backend_ms: number;
  exec_ms: number;
}

export interface TurnWire {
  turn_id: string;
  query: string;
  retrieval: RetrievalInfo | null;
  prompt_tokens: number;
  plan_text: string | null;
  parse_errors: { kind: string; line: number; col: number; detail: string }[];
  validation: { ok: boolean; issues: ValidationIssue[] } | null;
  dag: DagWire | null;
  status: string;
  trace: {
    events: { task: number; kind: string; ts: number; reason: string }[];
    results: Record<string, { value: unknown; display_string: string }>;
    final_state_digest: string;
    wall_latency_ms: number;
  } | null;
  timings: Timings;
  error: string | null;
  state_digest: string;
}

export interface SessionInfo {
  session_id: string;
  state_digest: string;
  turn_count?: number;
  approve_before_execute: boolean;
}

export interface ServerEvent {
  seq: number;
  kind: string;
  data: Record<string, unknown>;
}
