"""Dependency-DAG construction and parallel plan execution.

Edges are derived solely from placeholder references: task b depends on
task a exactly when b's arguments contain ``$a``. Independent ready tasks
are dispatched to a bounded worker pool; device-state writes commit in task
completion order under a single serialization point, and each committing
task sees the latest committed state. Event ordering uses a monotone
logical clock committed on the coordinating thread, so dependency-safety
assertions never depend on wall clocks.
"""

from __future__ import annotations

import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable

from .plan import ListLit, Placeholder, Plan, Task, Value
from .registry import (
    DeviceState,
    SimulatedFailure,
    ToolRegistry,
    ToolResult,
    execute_simulated,
)


class ExecutorError(Exception):
    pass


class MissingDependencyResult(ExecutorError):
    def __init__(self, ref: int):
        super().__init__(f"no result for task {ref}")
        self.ref = ref


class SubstitutionTypeMismatch(ExecutorError):
    pass


class InvariantViolation(ExecutorError):
    """A malformed input escaped the caller's preconditions."""


@dataclass(frozen=True)
class TaskGraph:
    nodes: tuple[Task, ...]
    edges: frozenset[tuple[int, int]]

    def indices(self) -> list[int]:
        return [t.index for t in self.nodes]

    def node(self, index: int) -> Task:
        for t in self.nodes:
            if t.index == index:
                return t
        raise KeyError(index)


def build_dag(plan: Plan) -> TaskGraph:
    """Derive the dependency graph of a valid plan.

    Multiple references from one task to the same producer collapse to a
    single edge.
    """
    edges = set()
    for t in plan.tasks:
        for ref in t.placeholder_refs():
            edges.add((ref, t.index))
    return TaskGraph(nodes=tuple(plan.tasks), edges=frozenset(edges))


def check_acyclic(edges, n: int) -> bool:
    """True iff the directed graph on nodes 1..n (plus any endpoints named in
    ``edges``) contains no cycle. Accepts arbitrary edge sets, e.g. from
    imported external data."""
    nodes = set(range(1, n + 1))
    for a, b in edges:
        nodes.add(a)
        nodes.add(b)
    out: dict[int, list[int]] = {v: [] for v in nodes}
    indeg: dict[int, int] = {v: 0 for v in nodes}
    for a, b in edges:
        out[a].append(b)
        indeg[b] += 1
    queue = [v for v in nodes if indeg[v] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen == len(nodes)


def topological_layers(graph: TaskGraph) -> list[set[int]]:
    """Partition nodes into layers: layer k holds tasks whose predecessors
    all lie in layers < k. Layer 0 is the sources."""
    indices = graph.indices()
    preds: dict[int, set[int]] = {i: set() for i in indices}
    for a, b in graph.edges:
        preds[b].add(a)
    layers: list[set[int]] = []
    placed: set[int] = set()
    remaining = set(indices)
    while remaining:
        layer = {i for i in remaining if preds[i] <= placed}
        if not layer:
            raise InvariantViolation("graph has a cycle")
        layers.append(layer)
        placed |= layer
        remaining -= layer
    return layers


def substitute_placeholders(
    task: Task, results: dict[int, ToolResult], registry: ToolRegistry
) -> dict[str, Any]:
    """Replace every ``$k`` in the task's args with task k's result.

    The raw result value substitutes when its type matches the declared
    parameter type; otherwise the result's display string is used when a
    string is expected. List elements substitute element-wise as strings.
    """
    spec = registry.get(task.function) if task.function in registry else None

    def resolve(ref: int, expected: str | None) -> Any:
        if ref not in results:
            raise MissingDependencyResult(ref)
        res = results[ref]
        if expected is None or _value_fits(res.value, expected):
            return res.value
        if expected == "string":
            return res.display_string
        raise SubstitutionTypeMismatch(
            f"task {task.index}: ${ref} result does not fit param type {expected}"
        )

    out: dict[str, Any] = {}
    for name, v in task.args:
        p = spec.param(name) if spec else None
        expected = p.type if p else None
        if isinstance(v, Placeholder):
            out[name] = resolve(v.task_index, expected)
        elif isinstance(v, ListLit):
            elems = []
            for e in v.items:
                if isinstance(e, Placeholder):
                    elems.append(resolve(e.task_index, "string"))
                else:
                    elems.append(_concrete(e))
            out[name] = elems
        else:
            out[name] = _concrete(v)
    return out


def _concrete(v: Value) -> Any:
    from .plan import BoolLit, IntLit, NumLit, StringLit

    if isinstance(v, StringLit):
        return v.text
    if isinstance(v, IntLit):
        return v.value
    if isinstance(v, NumLit):
        return v.value
    if isinstance(v, BoolLit):
        return v.value
    raise InvariantViolation(f"cannot lower {v!r}")


def _value_fits(value: Any, expected: str) -> bool:
    if expected == "string":
        return isinstance(value, str)
    if expected == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "list-of-string":
        return isinstance(value, list) and all(isinstance(e, str) for e in value)
    return False


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

ABORT_DOWNSTREAM = "abort_downstream"
ABORT_ALL = "abort_all"

STARTED = "Started"
FINISHED = "Finished"
FAILED = "Failed"


@dataclass(frozen=True)
class ExecPolicy:
    max_parallelism: int = 4
    per_task_timeout: float | None = None  # seconds
    on_failure: str = ABORT_DOWNSTREAM

    def __post_init__(self):
        if self.max_parallelism < 1:
            raise InvariantViolation("max_parallelism must be >= 1")
        if self.on_failure not in (ABORT_DOWNSTREAM, ABORT_ALL):
            raise InvariantViolation(f"bad on_failure {self.on_failure!r}")


@dataclass(frozen=True)
class TraceEvent:
    task_index: int
    kind: str  # Started | Finished | Failed
    timestamp: int  # logical clock
    reason: str = ""


@dataclass
class ExecutionTrace:
    events: list[TraceEvent] = field(default_factory=list)
    results: dict[int, ToolResult] = field(default_factory=dict)
    resolved_args: dict[int, dict[str, Any]] = field(default_factory=dict)
    final_state: DeviceState | None = None
    wall_latency: float = 0.0

    def ok(self) -> bool:
        return all(e.kind != FAILED for e in self.events)

    def event_order(self, index: int, kind: str) -> int:
        for e in self.events:
            if e.task_index == index and e.kind == kind:
                return e.timestamp
        return -1

    def failure_reasons(self) -> dict[int, str]:
        return {e.task_index: e.reason for e in self.events if e.kind == FAILED}

    def to_json_dict(self) -> dict:
        return {
            "events": [
                {"task": e.task_index, "kind": e.kind, "ts": e.timestamp, "reason": e.reason}
                for e in self.events
            ],
            "results": {
                str(i): {"value": r.value, "display_string": r.display_string}
                for i, r in self.results.items()
            },
            "final_state_digest": self.final_state.digest() if self.final_state else "",
            "wall_latency_ms": round(self.wall_latency * 1000.0, 3),
        }


def execute_graph(
    graph: TaskGraph,
    registry: ToolRegistry,
    state: DeviceState,
    policy: ExecPolicy | None = None,
    simulated_latency: Callable[[int], float] | None = None,
    impls: dict[str, Callable] | None = None,
) -> ExecutionTrace:
    """Execute every task at most once, respecting dependency order.

    ``simulated_latency`` maps a task index to a sleep in seconds inside the
    worker, exercising arbitrary completion orders in tests. Failures mark
    the task Failed and, per policy, cancel downstream tasks (or everything
    not yet dispatched); cancelled tasks still appear as Started+Failed so
    traces account for each task exactly once.
    """
    policy = policy or ExecPolicy()
    start = time.perf_counter()

    indices = graph.indices()
    if len(set(indices)) != len(indices):
        raise InvariantViolation("duplicate task indices")
    children: dict[int, set[int]] = {i: set() for i in indices}
    pending: dict[int, int] = {i: 0 for i in indices}
    for a, b in graph.edges:
        if a not in children or b not in children:
            raise InvariantViolation("edge references unknown task")
        children[a].add(b)
        pending[b] += 1

    trace = ExecutionTrace()
    clock = 0

    def emit(index: int, kind: str, reason: str = "") -> None:
        nonlocal clock
        trace.events.append(TraceEvent(index, kind, clock, reason))
        clock += 1

    ready = sorted((i for i in indices if pending[i] == 0), reverse=True)
    committed = state
    done: set[int] = set()
    cancelled: set[int] = set()
    abort_everything = False

    def cancel(index: int) -> None:
        if index in done or index in cancelled:
            return
        cancelled.add(index)
        emit(index, STARTED)
        emit(index, FAILED, reason="cancelled")
        for c in sorted(children[index]):
            cancel(c)

    def fail(index: int, reason: str) -> None:
        nonlocal abort_everything
        emit(index, FAILED, reason=reason)
        done.add(index)
        if policy.on_failure == ABORT_ALL:
            abort_everything = True
            for i in sorted(indices):
                if i not in done and i not in in_flight.values():
                    cancel(i)
        else:
            for c in sorted(children[index]):
                cancel(c)

    def worker(index: int) -> float:
        t0 = time.perf_counter()
        if simulated_latency is not None:
            delay = simulated_latency(index)
            if delay > 0:
                time.sleep(delay)
        return time.perf_counter() - t0

    in_flight: dict[Any, int] = {}
    with ThreadPoolExecutor(max_workers=policy.max_parallelism) as pool:
        while True:
            while (
                ready
                and len(in_flight) < policy.max_parallelism
                and not abort_everything
            ):
                idx = ready.pop()
                if idx in cancelled:
                    continue
                emit(idx, STARTED)
                in_flight[pool.submit(worker, idx)] = idx
            if not in_flight:
                break
            finished, _ = wait(in_flight.keys(), return_when=FIRST_COMPLETED)
            # Sort simultaneous completions for determinism.
            for fut in sorted(finished, key=lambda f: in_flight[f]):
                idx = in_flight.pop(fut)
                elapsed = fut.result()
                if (
                    policy.per_task_timeout is not None
                    and elapsed > policy.per_task_timeout
                ):
                    fail(idx, "timeout")
                    continue
                task = graph.node(idx)
                try:
                    args = substitute_placeholders(task, trace.results, registry)
                    result, committed = execute_simulated(
                        registry, task.function, args, committed, impls=impls
                    )
                except (SimulatedFailure, ExecutorError) as exc:
                    reason = exc.reason if isinstance(exc, SimulatedFailure) else str(exc)
                    fail(idx, reason)
                    continue
                trace.results[idx] = result
                trace.resolved_args[idx] = args
                emit(idx, FINISHED)
                done.add(idx)
                for c in sorted(children[idx]):
                    if c in cancelled:
                        continue
                    pending[c] -= 1
                    if pending[c] == 0:
                        ready.append(c)
                ready.sort(reverse=True)

    trace.final_state = committed
    trace.wall_latency = time.perf_counter() - start
    return trace
