// Browser entry: wires the API client and the pure view model/renderer to
// the DOM. Reconnects drop back to the turns endpoint for history, then
// resume the live stream; only the Approve button can change device state.

import { ApiClient } from "./api.js";
import { renderCatalog, renderTranscript } from "./render.js";
import {
  applyEvent,
  fromTurns,
  initialState,
  mergeTurnResponse,
  type ViewState,
} from "./viewmodel.js";

const params = new URLSearchParams(location.search);
const api = new ApiClient(params.get("api") ?? location.origin);

let state: ViewState = initialState();
let sessionId: string | null = null;
let streamAbort: AbortController | null = null;
let retryDelay = 500;

const el = {
  banner: document.getElementById("banner")!,
  catalog: document.getElementById("catalog")!,
  transcript: document.getElementById("transcript")!,
  form: document.getElementById("query-form") as HTMLFormElement,
  input: document.getElementById("query-input") as HTMLInputElement,
  session: document.getElementById("session-label")!,
};

function paint(): void {
  el.transcript.innerHTML = renderTranscript(state);
}

function banner(text: string, kind: "info" | "error" | ""): void {
  el.banner.textContent = text;
  el.banner.className = kind;
}

async function connect(): Promise<void> {
  banner("connecting...", "info");
  try {
    const tools = await api.getTools();
    el.catalog.innerHTML = renderCatalog(tools);
    if (sessionId === null) {
      const session = await api.createSession();
      sessionId = session.session_id;
      state = { ...state, stateDigest: session.state_digest };
    } else {
      // Resuming: restore history from the turns endpoint, then stream on.
      const [turns, info] = await Promise.all([
        api.getTurns(sessionId),
        api.getSession(sessionId),
      ]);
      state = fromTurns(turns, info.state_digest);
    }
    el.session.textContent = `session ${sessionId}`;
    paint();
    banner("", "");
    retryDelay = 500;
    void follow();
  } catch {
    banner("service unreachable - retrying", "error");
    scheduleReconnect();
  }
}

async function follow(): Promise<void> {
  if (sessionId === null) return;
  streamAbort?.abort();
  streamAbort = new AbortController();
  try {
    for await (const event of api.streamEvents(
      sessionId,
      state.lastSeq + 1,
      true,
      streamAbort.signal,
    )) {
      state = applyEvent(state, event);
      paint();
    }
  } catch {
    if (!streamAbort.signal.aborted) {
      banner("stream dropped - reconnecting", "error");
      scheduleReconnect();
    }
  }
}

function scheduleReconnect(): void {
  const delay = retryDelay;
  retryDelay = Math.min(retryDelay * 2, 10_000);
  setTimeout(() => void connect(), delay);
}

el.form.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const query = el.input.value.trim();
  if (!query || sessionId === null) return;
  el.input.value = "";
  void api
    .postQuery(sessionId, query)
    .then((wire) => {
      state = mergeTurnResponse(state, wire);
      paint();
    })
    .catch(() => banner("query failed", "error"));
});

el.transcript.addEventListener("click", (ev) => {
  const button = (ev.target as HTMLElement).closest("button[data-action]");
  if (!button || sessionId === null) return;
  const action = button.getAttribute("data-action");
  const turnId = button.getAttribute("data-turn")!;
  void api
    .confirm(sessionId, turnId, action === "approve")
    .then((wire) => {
      state = mergeTurnResponse(state, wire);
      paint();
    })
    .catch(() => banner("confirm failed", "error"));
});

void connect();
