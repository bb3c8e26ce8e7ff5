import pytest
from fastapi.testclient import TestClient

from plankit.dataset import DatasetExample
from plankit.executor import ExecPolicy
from plankit.gateway import MockGoldBackend, ScriptedBackend
from plankit.plan import parse_plan
from plankit.retriever import AllToolsRetriever
from plankit.service import (
    AgentService,
    NotPending,
    ServiceConfig,
    UnknownSession,
    create_app,
)
from tests.conftest import FANIN_PLAN_TEXT

FIG_QUERY = "Create a calendar invite for Meeting with Sid and Lutfi"


def fig_example():
    return DatasetExample(
        id="fig-0",
        query=FIG_QUERY,
        available_tools=(
            "get_email_address",
            "create_calendar_event",
            "send_sms",
            "open_note",
        ),
        gold_plan=parse_plan(FANIN_PLAN_TEXT),
    )


def make_service(registry, backend=None, approve=False):
    return AgentService(
        ServiceConfig(
            registry=registry,
            backend=backend or MockGoldBackend([fig_example()]),
            retriever=AllToolsRetriever(registry),
            exec_policy=ExecPolicy(max_parallelism=4),
            approve_before_execute=approve,
            default_seed=0,
        )
    )


class TestPipeline:
    def test_fig_query_executes(self, registry):
        service = make_service(registry)
        session = service.create_session()
        before = session.device_state.digest()
        turn = service.handle_query(session, FIG_QUERY)
        assert turn.status == "executed"
        assert turn.trace is not None
        assert set(turn.retrieval.selected) >= {
            "get_email_address",
            "create_calendar_event",
        }
        event = session.device_state.calendar[-1]
        assert event["attendees"] == ["sid@example.com", "lutfi@example.com"]
        assert session.device_state.digest() != before

    def test_event_order(self, registry):
        service = make_service(registry)
        session = service.create_session()
        service.handle_query(session, FIG_QUERY)
        kinds = [e["kind"] for e in session.events]
        assert kinds[0] == "retrieval_done"
        assert kinds[1] == "plan_received"
        assert kinds[2] == "validated"
        assert kinds[-1] == "turn_done"
        # The stream alone must be enough to project the UI state.
        assert session.events[0]["data"]["query"] == FIG_QUERY
        validated = session.events[2]["data"]
        assert validated["dag"]["edges"] == [[1, 3], [2, 3]]
        assert len(validated["dag"]["nodes"]) == 3
        started = [i for i, k in enumerate(kinds) if k == "task_started"]
        validated = kinds.index("validated")
        assert all(i > validated for i in started)
        seqs = [e["seq"] for e in session.events]
        assert seqs == sorted(seqs)

    def test_invalid_plan_never_executes(self, registry):
        backend = ScriptedBackend('1. made_up_tool(x="y")')
        service = make_service(registry, backend=backend)
        session = service.create_session()
        before = session.device_state.digest()
        turn = service.handle_query(session, "do something impossible")
        assert turn.status == "rejected"
        assert turn.trace is None
        assert not turn.validation.ok
        assert session.device_state.digest() == before
        kinds = [e["kind"] for e in session.events]
        assert "task_started" not in kinds
        assert kinds[-1] == "turn_done"

    def test_unparseable_plan_surfaces_errors(self, registry):
        backend = ScriptedBackend("not a plan @@")
        service = make_service(registry, backend=backend)
        session = service.create_session()
        turn = service.handle_query(session, "gibberish")
        assert turn.status == "rejected"
        assert turn.parse_errors

    def test_backend_error_recorded(self, registry):
        service = make_service(registry, backend=MockGoldBackend([]))
        session = service.create_session()
        turn = service.handle_query(session, "no reference for this")
        assert turn.status == "backend_error"
        assert turn.error
        assert [e["kind"] for e in session.events][-1] == "turn_done"

    def test_two_turn_state_dependency(self, registry):
        backend = ScriptedBackend(
            [
                '1. create_note(title="Packing", body="socks", folder="Personal")',
                '1. append_note_content(title="Packing", content="passport", folder="Personal")',
            ]
        )
        service = make_service(registry, backend=backend)
        session = service.create_session()
        assert service.handle_query(session, "make the note").status == "executed"
        assert service.handle_query(session, "extend the note").status == "executed"
        assert session.device_state.notes[("Personal", "Packing")] == "socks\npassport"

    def test_statelessness_across_sessions(self, registry):
        service = make_service(registry)
        s1 = service.create_session(seed=5)
        s2 = service.create_session(seed=5)
        for s in (s1, s2):
            service.handle_query(s, FIG_QUERY)
        assert s1.device_state.digest() == s2.device_state.digest()

    def test_timing_fields_accounted(self, registry):
        service = make_service(registry)
        session = service.create_session()
        turn = service.handle_query(session, FIG_QUERY)
        assert turn.retrieval_ms >= 0
        assert turn.backend_ms >= 0
        assert turn.exec_ms >= 0


class TestApproval:
    def test_approve_then_execute(self, registry):
        service = make_service(registry, approve=True)
        session = service.create_session()
        before = session.device_state.digest()
        turn = service.handle_query(session, FIG_QUERY)
        assert turn.status == "awaiting_approval"
        assert turn.trace is None
        assert session.device_state.digest() == before
        done = service.confirm_turn(session, turn.turn_id, approve=True)
        assert done.status == "executed"
        assert done.trace is not None
        assert session.device_state.digest() != before

    def test_decline_preserves_state(self, registry):
        service = make_service(registry, approve=True)
        session = service.create_session()
        before = session.device_state.digest()
        turn = service.handle_query(session, FIG_QUERY)
        done = service.confirm_turn(session, turn.turn_id, approve=False)
        assert done.status == "declined"
        assert session.device_state.digest() == before

    def test_confirm_twice_not_pending(self, registry):
        service = make_service(registry, approve=True)
        session = service.create_session()
        turn = service.handle_query(session, FIG_QUERY)
        service.confirm_turn(session, turn.turn_id, approve=True)
        with pytest.raises(NotPending):
            service.confirm_turn(session, turn.turn_id, approve=True)

    def test_unknown_session(self, registry):
        service = make_service(registry)
        with pytest.raises(UnknownSession):
            service.session("nope")


@pytest.fixture
def client(registry):
    app = create_app(make_service(registry))
    return TestClient(app)


@pytest.fixture
def approval_client(registry):
    app = create_app(make_service(registry, approve=True))
    return TestClient(app)


def sse_events(client, session_id, since=0):
    events = []
    with client.stream(
        "GET", f"/sessions/{session_id}/events", params={"since": since, "follow": 0}
    ) as resp:
        current = {}
        for line in resp.iter_lines():
            if line.startswith("id: "):
                current["seq"] = int(line[4:])
            elif line.startswith("event: "):
                current["kind"] = line[7:]
            elif line.startswith("data: "):
                current["data"] = line[6:]
            elif line == "" and current:
                events.append(current)
                current = {}
    return events


class TestHttpApi:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"ok": True}

    def test_tools_lists_sixteen(self, client):
        body = client.get("/tools").json()
        assert body["count"] == 16
        assert len(body["tools"]) == 16
        assert body["tools"][0]["name"] == "compose_new_email"

    def test_create_session_and_info(self, client):
        created = client.post("/sessions", json={"seed": 0}).json()
        assert "session_id" in created and created["state_digest"]
        info = client.get(f"/sessions/{created['session_id']}").json()
        assert info["state_digest"] == created["state_digest"]
        assert info["turn_count"] == 0

    def test_query_then_events_in_order(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        turn = client.post(f"/sessions/{sid}/query", json={"query": FIG_QUERY}).json()
        assert turn["status"] == "executed"
        assert turn["dag"]["edges"] == [[1, 3], [2, 3]]
        events = sse_events(client, sid)
        kinds = [e["kind"] for e in events]
        assert kinds[:3] == ["retrieval_done", "plan_received", "validated"]
        assert kinds[-1] == "turn_done"
        assert [e["seq"] for e in events] == list(range(len(events)))

    def test_events_since(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        client.post(f"/sessions/{sid}/query", json={"query": FIG_QUERY})
        all_events = sse_events(client, sid)
        tail = sse_events(client, sid, since=3)
        assert [e["seq"] for e in tail] == [e["seq"] for e in all_events[3:]]

    def test_turns_endpoint_for_reconnect(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        client.post(f"/sessions/{sid}/query", json={"query": FIG_QUERY})
        body = client.get(f"/sessions/{sid}/turns").json()
        assert len(body["turns"]) == 1
        assert body["turns"][0]["query"] == FIG_QUERY

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/missing").status_code == 404
        assert (
            client.post("/sessions/missing/query", json={"query": "x"}).status_code
            == 404
        )

    def test_malformed_body_422(self, client):
        sid = client.post("/sessions", json={}).json()["session_id"]
        assert client.post(f"/sessions/{sid}/query", json={}).status_code == 422
        resp = client.post(
            f"/sessions/{sid}/query",
            content=b"not json",
            headers={"Content-Type": "application/json"},
        )
        assert resp.status_code == 422

    def test_approve_flow_mutates_state(self, approval_client):
        client = approval_client
        created = client.post("/sessions", json={}).json()
        sid = created["session_id"]
        turn = client.post(f"/sessions/{sid}/query", json={"query": FIG_QUERY}).json()
        assert turn["status"] == "awaiting_approval"
        confirmed = client.post(
            f"/sessions/{sid}/turns/{turn['turn_id']}/confirm", json={"approve": True}
        ).json()
        assert confirmed["status"] == "executed"
        assert confirmed["state_digest"] != created["state_digest"]
        again = client.post(
            f"/sessions/{sid}/turns/{turn['turn_id']}/confirm", json={"approve": True}
        )
        assert again.status_code == 409

    def test_decline_keeps_digest(self, approval_client):
        client = approval_client
        created = client.post("/sessions", json={}).json()
        sid = created["session_id"]
        turn = client.post(f"/sessions/{sid}/query", json={"query": FIG_QUERY}).json()
        declined = client.post(
            f"/sessions/{sid}/turns/{turn['turn_id']}/confirm", json={"approve": False}
        ).json()
        assert declined["status"] == "declined"
        assert declined["state_digest"] == created["state_digest"]

    def test_unknown_turn_404(self, approval_client):
        client = approval_client
        sid = client.post("/sessions", json={}).json()["session_id"]
        resp = client.post(
            f"/sessions/{sid}/turns/missing/confirm", json={"approve": True}
        )
        assert resp.status_code == 404
