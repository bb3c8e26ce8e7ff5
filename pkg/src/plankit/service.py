"""The serving loop: query -> retrieve -> prompt -> plan -> validate -> execute.

Sessions are in-memory and independent; turns within a session are strictly
serialized, and every turn emits an ordered event stream
(``retrieval_done``, ``plan_received``, ``validated``, ``task_started``,
``task_finished``, ``turn_done``) that the HTTP layer exposes as
server-sent events. Turns that fail validation never touch device state,
and with approve-before-execute enabled a planned turn waits for explicit
confirmation before executing.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Iterator

from pydantic import BaseModel

from .evaluator import MatchMode
from .executor import ExecPolicy, TaskGraph, build_dag, execute_graph
from .gateway import (
    Backend,
    CompletionContext,
    GatewayError,
    build_planner_prompt,
    timed_complete,
)
from .plan import (
    Plan,
    PlanParseError,
    ValidationReport,
    parse_plan,
    serialize_value,
    validate_plan,
)
from .registry import DeviceState, ToolRegistry, seed_device_state
from .retriever import RetrievalResult, Retriever

# Turn statuses
PLANNED = "awaiting_approval"
EXECUTED = "executed"
DECLINED = "declined"
REJECTED = "rejected"
BACKEND_ERROR = "backend_error"


def dag_wire(graph: TaskGraph) -> dict:
    """The served DAG exactly as clients must render it."""
    return {
        "nodes": [
            {
                "index": t.index,
                "function": t.function,
                "args": ", ".join(f"{k}={serialize_value(v)}" for k, v in t.args),
            }
            for t in graph.nodes
        ],
        "edges": sorted([a, b] for a, b in graph.edges),
    }


class ServiceError(Exception):
    pass


class UnknownSession(ServiceError):
    pass


class UnknownTurn(ServiceError):
    pass


class NotPending(ServiceError):
    pass


@dataclass
class AgentTurn:
    turn_id: str
    query: str
    retrieval: RetrievalResult | None = None
    prompt_tokens: int = 0
    plan_text: str | None = None
    parsed: Plan | None = None
    parse_errors: list = field(default_factory=list)
    validation: ValidationReport | None = None
    graph: TaskGraph | None = None
    trace: object = None
    status: str = REJECTED
    error: str | None = None
    retrieval_ms: float = 0.0
    backend_ms: float = 0.0
    exec_ms: float = 0.0

    def to_wire(self, state_digest: str) -> dict:
        dag = None if self.graph is None else dag_wire(self.graph)
        return {
            "turn_id": self.turn_id,
            "query": self.query,
            "retrieval": self.retrieval.to_json_dict() if self.retrieval else None,
            "prompt_tokens": self.prompt_tokens,
            "plan_text": self.plan_text,
            "parse_errors": [
                {"kind": e.kind, "line": e.line, "col": e.col, "detail": e.detail}
                for e in self.parse_errors
            ],
            "validation": None
            if self.validation is None
            else {
                "ok": self.validation.ok,
                "issues": [
                    {"task_index": i.task_index, "kind": i.kind, "detail": i.detail}
                    for i in self.validation.issues
                ],
            },
            "dag": dag,
            "status": self.status,
            "trace": self.trace.to_json_dict() if self.trace else None,
            "timings": {
                "retrieval_ms": round(self.retrieval_ms * 1000, 3),
                "backend_ms": round(self.backend_ms * 1000, 3),
                "exec_ms": round(self.exec_ms * 1000, 3),
            },
            "error": self.error,
            "state_digest": state_digest,
        }


@dataclass
class AgentSession:
    session_id: str
    device_state: DeviceState
    approve_before_execute: bool
    turns: list[AgentTurn] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)
    cond: threading.Condition = field(default_factory=threading.Condition)

    def emit(self, kind: str, data: dict) -> None:
        with self.cond:
            self.events.append({"seq": len(self.events), "kind": kind, "data": data})
            self.cond.notify_all()

    def turn(self, turn_id: str) -> AgentTurn:
        for t in self.turns:
            if t.turn_id == turn_id:
                return t
        raise UnknownTurn(turn_id)


@dataclass
class ServiceConfig:
    registry: ToolRegistry
    backend: Backend
    retriever: Retriever
    icl_pool: list = field(default_factory=list)
    icl_k: int = 0
    exec_policy: ExecPolicy = field(default_factory=ExecPolicy)
    match_mode: MatchMode = MatchMode.STRICT
    approve_before_execute: bool = True
    default_seed: int = 0


class AgentService:
    """Owns sessions and runs the turn pipeline against the configured parts."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.sessions: dict[str, AgentSession] = {}
        self._lock = threading.Lock()

    # -- session management -------------------------------------------------

    def create_session(
        self, seed: int | None = None, approve_before_execute: bool | None = None
    ) -> AgentSession:
        session = AgentSession(
            session_id=uuid.uuid4().hex[:12],
            device_state=seed_device_state(
                self.config.default_seed if seed is None else seed
            ),
            approve_before_execute=(
                self.config.approve_before_execute
                if approve_before_execute is None
                else approve_before_execute
            ),
        )
        with self._lock:
            self.sessions[session.session_id] = session
        return session

    def session(self, session_id: str) -> AgentSession:
        with self._lock:
            try:
                return self.sessions[session_id]
            except KeyError:
                raise UnknownSession(session_id) from None

    # -- turn pipeline -------------------------------------------------------

    def handle_query(self, session: AgentSession, query: str) -> AgentTurn:
        cfg = self.config
        with session.lock:
            turn = AgentTurn(turn_id=f"t{len(session.turns) + 1}", query=query)
            session.turns.append(turn)

            t0 = time.perf_counter()
            turn.retrieval = cfg.retriever.retrieve(query)
            turn.retrieval_ms = time.perf_counter() - t0
            session.emit(
                "retrieval_done",
                {
                    "turn_id": turn.turn_id,
                    "query": query,
                    "retrieval": turn.retrieval.to_json_dict(),
                },
            )

            icl = []
            if cfg.icl_pool and cfg.icl_k:
                from .dataset import select_in_context_examples

                hits = select_in_context_examples(
                    query, cfg.icl_pool, min(cfg.icl_k, len(cfg.icl_pool))
                )
                icl = [(ex.query, ex.plan_text) for ex in hits]

            prompt = build_planner_prompt(
                query, turn.retrieval.selected, icl, cfg.registry
            )
            turn.prompt_tokens = prompt.token_count

            try:
                turn.plan_text, turn.backend_ms = timed_complete(
                    cfg.backend, prompt, CompletionContext()
                )
            except GatewayError as exc:
                turn.status = BACKEND_ERROR
                turn.error = str(exc)
                session.emit(
                    "turn_done",
                    {
                        "turn_id": turn.turn_id,
                        "status": turn.status,
                        "state_digest": session.device_state.digest(),
                    },
                )
                return turn
            session.emit(
                "plan_received",
                {"turn_id": turn.turn_id, "plan_text": turn.plan_text},
            )

            try:
                turn.parsed = parse_plan(turn.plan_text)
                turn.validation = validate_plan(turn.parsed, cfg.registry)
            except PlanParseError as exc:
                turn.parse_errors = list(exc.errors)
                turn.validation = ValidationReport(ok=False, issues=())
            ok = turn.validation.ok and not turn.parse_errors
            if ok:
                turn.graph = build_dag(turn.parsed)
            status_if_ok = PLANNED if session.approve_before_execute else EXECUTED
            session.emit(
                "validated",
                {
                    "turn_id": turn.turn_id,
                    "ok": ok,
                    "parse_errors": [e.detail for e in turn.parse_errors],
                    "issues": [
                        {"task_index": i.task_index, "kind": i.kind, "detail": i.detail}
                        for i in (turn.validation.issues if turn.validation else ())
                    ],
                    "dag": None if turn.graph is None else dag_wire(turn.graph),
                    "plan_text": turn.plan_text,
                    "status": status_if_ok if ok else REJECTED,
                },
            )
            if not ok:
                turn.status = REJECTED
                session.emit(
                    "turn_done",
                    {
                        "turn_id": turn.turn_id,
                        "status": turn.status,
                        "state_digest": session.device_state.digest(),
                    },
                )
                return turn

            if session.approve_before_execute:
                turn.status = PLANNED
                return turn
            self._execute(session, turn)
            return turn

    def _execute(self, session: AgentSession, turn: AgentTurn) -> None:
        t0 = time.perf_counter()
        trace = execute_graph(
            turn.graph,
            self.config.registry,
            session.device_state,
            self.config.exec_policy,
        )
        turn.exec_ms = time.perf_counter() - t0
        for e in trace.events:
            kind = {
                "Started": "task_started",
                "Finished": "task_finished",
                "Failed": "task_failed",
            }[e.kind]
            data = {"turn_id": turn.turn_id, "task": e.task_index}
            if e.reason:
                data["reason"] = e.reason
            session.emit(kind, data)
        session.device_state = trace.final_state
        turn.trace = trace
        turn.status = EXECUTED
        session.emit(
            "turn_done",
            {
                "turn_id": turn.turn_id,
                "status": turn.status,
                "state_digest": session.device_state.digest(),
            },
        )

    def snapshot(self, path: str) -> None:
        """Write all sessions to a JSON file (device state + turn records)."""
        import json

        with self._lock:
            sessions = list(self.sessions.values())
        doc = {
            "sessions": [
                {
                    "session_id": s.session_id,
                    "approve_before_execute": s.approve_before_execute,
                    "state_digest": s.device_state.digest(),
                    "device_state": json.loads(s.device_state.to_json()),
                    "turns": [
                        t.to_wire(s.device_state.digest()) for t in s.turns
                    ],
                }
                for s in sessions
            ]
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1, sort_keys=True)

    def confirm_turn(
        self, session: AgentSession, turn_id: str, approve: bool
    ) -> AgentTurn:
        with session.lock:
            turn = session.turn(turn_id)
            if turn.status != PLANNED:
                raise NotPending(f"turn {turn_id} is {turn.status}")
            if not approve:
                turn.status = DECLINED
                session.emit(
                    "turn_done",
                    {
                        "turn_id": turn.turn_id,
                        "status": turn.status,
                        "state_digest": session.device_state.digest(),
                    },
                )
                return turn
            self._execute(session, turn)
            return turn


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

class CreateSessionBody(BaseModel):
    seed: int | None = None
    approve_before_execute: bool | None = None


class QueryBody(BaseModel):
    query: str


class ConfirmBody(BaseModel):
    approve: bool


def create_app(service: AgentService, console_dir: str | None = None):
    """Build the FastAPI app; optionally serve a built web console at /console."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import StreamingResponse

    app = FastAPI(title="plankit agent service")

    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount(
            "/console", StaticFiles(directory=console_dir, html=True), name="console"
        )

    def get_session(session_id: str) -> AgentSession:
        try:
            return service.session(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.get("/tools")
    def tools():
        reg = service.config.registry
        return {"tools": [spec.to_dict() for spec in reg], "count": len(reg)}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = service.create_session(body.seed, body.approve_before_execute)
        return {
            "session_id": session.session_id,
            "state_digest": session.device_state.digest(),
            "approve_before_execute": session.approve_before_execute,
        }

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        session = get_session(session_id)
        return {
            "session_id": session.session_id,
            "state_digest": session.device_state.digest(),
            "turn_count": len(session.turns),
            "approve_before_execute": session.approve_before_execute,
        }

    @app.post("/sessions/{session_id}/query")
    def post_query(session_id: str, body: QueryBody):
        session = get_session(session_id)
        turn = service.handle_query(session, body.query)
        return turn.to_wire(session.device_state.digest())

    @app.get("/sessions/{session_id}/turns")
    def list_turns(session_id: str):
        session = get_session(session_id)
        digest = session.device_state.digest()
        return {"turns": [t.to_wire(digest) for t in session.turns]}

    @app.post("/sessions/{session_id}/turns/{turn_id}/confirm")
    def confirm(session_id: str, turn_id: str, body: ConfirmBody):
        session = get_session(session_id)
        try:
            turn = service.confirm_turn(session, turn_id, body.approve)
        except UnknownTurn:
            raise HTTPException(status_code=404, detail="unknown turn")
        except NotPending as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return turn.to_wire(session.device_state.digest())

    def sse_format(event: dict) -> str:
        import json as _json

        payload = _json.dumps(event["data"], sort_keys=True)
        return f"id: {event['seq']}\nevent: {event['kind']}\ndata: {payload}\n\n"

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, since: int = 0, follow: int = 1):
        session = get_session(session_id)

        def stream() -> Iterator[str]:
            i = max(0, since)
            while True:
                with session.cond:
                    while i >= len(session.events):
                        if not follow:
                            return
                        if not session.cond.wait(timeout=15.0):
                            yield ": keepalive\n\n"
                    batch = session.events[i:]
                for event in batch:
                    yield sse_format(event)
                    i += 1

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(
    service: AgentService,
    host: str = "127.0.0.1",
    port: int = 8080,
    console_dir: str | None = None,
    snapshot_path: str | None = None,
):
    """Run the HTTP service until interrupted; optionally snapshot sessions
    to a JSON file on shutdown."""
    import uvicorn

    try:
        uvicorn.run(
            create_app(service, console_dir), host=host, port=port, log_level="warning"
        )
    finally:
        if snapshot_path:
            service.snapshot(snapshot_path)
