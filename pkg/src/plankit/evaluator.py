"""Success-rate metric: labeled-DAG isomorphism between predicted and gold plans.

A predicted plan scores 1 exactly when its dependency DAG is isomorphic to
the ground truth's, with node labels compared under the chosen match mode:

* ``STRICT``: function name, canonicalized literal arguments, and the set of
  placeholder positions must all agree.
* ``NAMES_ONLY``: only the function name matters.

``dags_isomorphic`` is a backtracking search with degree/label candidate
refinement; ``brute_force_isomorphic`` enumerates all bijections and serves
as its oracle on small graphs.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .executor import TaskGraph, build_dag
from .plan import (
    ListLit,
    Placeholder,
    PlanParseError,
    Task,
    canonicalize_value,
    parse_plan,
)


class MatchMode(Enum):
    STRICT = "strict"
    NAMES_ONLY = "names-only"


class EvaluatorError(Exception):
    pass


class TooLarge(EvaluatorError):
    pass


class LengthMismatch(EvaluatorError):
    pass


@dataclass(frozen=True)
class NodeLabel:
    """What a node must match on: function, literal args, placeholder slots.

    ``placeholder_params`` holds ``(param, position)`` pairs where position is
    the index within a list argument, or ``None`` for a whole-value
    placeholder.
    """

    function: str
    literal_args: tuple[tuple[str, object], ...]
    placeholder_params: frozenset[tuple[str, int | None]]


def node_label(task: Task, mode: MatchMode) -> NodeLabel:
    if mode is MatchMode.NAMES_ONLY:
        return NodeLabel(task.function, (), frozenset())
    literals: list[tuple[str, object]] = []
    phs: set[tuple[str, int | None]] = set()
    for name, v in task.args:
        if isinstance(v, Placeholder):
            phs.add((name, None))
        elif isinstance(v, ListLit):
            kept = []
            had_ph = False
            for pos, e in enumerate(v.items):
                if isinstance(e, Placeholder):
                    phs.add((name, pos))
                    had_ph = True
                else:
                    kept.append(canonicalize_value(e))
            if kept or not had_ph:
                literals.append((name, ListLit(tuple(kept))))
        else:
            literals.append((name, canonicalize_value(v)))
    literals.sort(key=lambda kv: kv[0])
    return NodeLabel(task.function, tuple(literals), frozenset(phs))


def _labeled(graph: TaskGraph, mode: MatchMode):
    labels = {t.index: node_label(t, mode) for t in graph.nodes}
    return labels, set(graph.edges)


def dags_isomorphic(
    g1: TaskGraph, g2: TaskGraph, mode: MatchMode = MatchMode.STRICT
) -> tuple[bool, dict[int, int] | None]:
    """Decide label-preserving DAG isomorphism; return a witness mapping when true.

    Rejects fast on node/edge counts and label multisets, then backtracks
    over label-compatible candidates, most-constrained node first.
    """
    labels1, edges1 = _labeled(g1, mode)
    labels2, edges2 = _labeled(g2, mode)
    if len(labels1) != len(labels2) or len(edges1) != len(edges2):
        return False, None
    if Counter(labels1.values()) != Counter(labels2.values()):
        return False, None
    if not labels1:
        return True, {}

    out1: dict[int, set[int]] = {v: set() for v in labels1}
    in1: dict[int, set[int]] = {v: set() for v in labels1}
    out2: dict[int, set[int]] = {v: set() for v in labels2}
    in2: dict[int, set[int]] = {v: set() for v in labels2}
    for a, b in edges1:
        out1[a].add(b)
        in1[b].add(a)
    for a, b in edges2:
        out2[a].add(b)
        in2[b].add(a)

    def sig1(v):
        return (labels1[v], len(in1[v]), len(out1[v]))

    def sig2(v):
        return (labels2[v], len(in2[v]), len(out2[v]))

    buckets: dict = {}
    for v in labels2:
        buckets.setdefault(sig2(v), []).append(v)
    candidates: dict[int, list[int]] = {}
    for v in labels1:
        cands = buckets.get(sig1(v))
        if not cands:
            return False, None
        candidates[v] = cands

    order = sorted(labels1, key=lambda v: (len(candidates[v]), -len(in1[v]) - len(out1[v]), v))
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def consistent(u: int, w: int) -> bool:
        # Adjacency to every already-mapped node must agree in both directions.
        for v, mv in mapping.items():
            if (mv in in2[w]) != (v in in1[u]):
                return False
            if (mv in out2[w]) != (v in out1[u]):
                return False
        return True

    def backtrack(k: int) -> bool:
        if k == len(order):
            return True
        u = order[k]
        for w in candidates[u]:
            if w in used:
                continue
            if not consistent(u, w):
                continue
            mapping[u] = w
            used.add(w)
            if backtrack(k + 1):
                return True
            del mapping[u]
            used.remove(w)
        return False

    if backtrack(0):
        return True, dict(mapping)
    return False, None


def brute_force_isomorphic(
    g1: TaskGraph, g2: TaskGraph, mode: MatchMode = MatchMode.STRICT
) -> bool:
    """Oracle: try every bijection. Only for graphs of at most 8 nodes."""
    labels1, edges1 = _labeled(g1, mode)
    labels2, edges2 = _labeled(g2, mode)
    if len(labels1) > 8 or len(labels2) > 8:
        raise TooLarge("brute force capped at 8 nodes")
    if len(labels1) != len(labels2) or len(edges1) != len(edges2):
        return False
    nodes1 = sorted(labels1)
    nodes2 = sorted(labels2)
    for perm in itertools.permutations(nodes2):
        f = dict(zip(nodes1, perm))
        if any(labels1[v] != labels2[f[v]] for v in nodes1):
            continue
        if all(((f[a], f[b]) in edges2) for a, b in edges1) and len(edges1) == len(
            edges2
        ):
            return True
    return False


def check_mapping(
    g1: TaskGraph, g2: TaskGraph, mode: MatchMode, mapping: dict[int, int]
) -> bool:
    """Verify a witness edge-by-edge and label-by-label."""
    labels1, edges1 = _labeled(g1, mode)
    labels2, edges2 = _labeled(g2, mode)
    if sorted(mapping) != sorted(labels1) or sorted(mapping.values()) != sorted(labels2):
        return False
    if any(labels1[v] != labels2[mapping[v]] for v in mapping):
        return False
    mapped = {(mapping[a], mapping[b]) for a, b in edges1}
    return mapped == edges2


def tool_multiset_match(pred, gold) -> bool:
    """True iff the two plans call the same multiset of function names."""
    return Counter(pred.functions()) == Counter(gold.functions())


# Failure reasons, in diagnostic order.
REASON_NONE = "none"
REASON_PARSE = "parse_error"
REASON_TOOLSET = "wrong_tool_set"
REASON_STRUCTURE = "wrong_structure"
REASON_ARGS = "wrong_args"


@dataclass(frozen=True)
class ExampleScore:
    example_id: str
    success: int
    failure_reason: str


@dataclass(frozen=True)
class EvalMetrics:
    success_rate: float
    per_example: tuple[ExampleScore, ...]

    def to_json_dict(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "per_example": [
                {
                    "example_id": s.example_id,
                    "success": s.success,
                    "failure_reason": s.failure_reason,
                }
                for s in self.per_example
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def format_table(self) -> str:
        n = len(self.per_example)
        reasons = Counter(s.failure_reason for s in self.per_example if not s.success)
        lines = [
            f"{'Examples':<24}{n:>10}",
            f"{'Success Rate (%)':<24}{100.0 * self.success_rate:>10.2f}",
        ]
        for reason in (REASON_PARSE, REASON_TOOLSET, REASON_STRUCTURE, REASON_ARGS):
            lines.append(f"{'  ' + reason:<24}{reasons.get(reason, 0):>10}")
        return "\n".join(lines)


def score_pair(pred_text: str, gold_plan, mode: MatchMode) -> tuple[int, str]:
    """Score one prediction against its gold plan."""
    try:
        pred = parse_plan(pred_text)
    except PlanParseError:
        return 0, REASON_PARSE
    ok, _ = dags_isomorphic(build_dag(pred), build_dag(gold_plan), mode)
    if ok:
        return 1, REASON_NONE
    if not tool_multiset_match(pred, gold_plan):
        return 0, REASON_TOOLSET
    names_ok, _ = dags_isomorphic(
        build_dag(pred), build_dag(gold_plan), MatchMode.NAMES_ONLY
    )
    if not names_ok:
        return 0, REASON_STRUCTURE
    return 0, REASON_ARGS


def score_dataset(predictions: list[str], gold, mode: MatchMode = MatchMode.STRICT) -> EvalMetrics:
    """Score position-aligned predictions against gold examples.

    ``gold`` entries need ``id`` and ``gold_plan`` attributes (dataset
    examples), or may be bare plans, in which case ids are positional.
    """
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gold)} gold")
    scores = []
    for i, (pred_text, g) in enumerate(zip(predictions, gold)):
        gold_plan = getattr(g, "gold_plan", g)
        example_id = getattr(g, "id", str(i))
        success, reason = score_pair(pred_text, gold_plan, mode)
        scores.append(ExampleScore(example_id, success, reason))
    rate = sum(s.success for s in scores) / len(scores) if scores else 0.0
    return EvalMetrics(success_rate=rate, per_example=tuple(scores))
