"""Shared test utilities: plan builders and seeded random generators."""

from __future__ import annotations

import random

from plankit.plan import (
    BoolLit,
    IntLit,
    ListLit,
    NumLit,
    Placeholder,
    Plan,
    StringLit,
    Task,
)
from plankit.registry import ParamSpec, ToolRegistry, ToolSpec


def build_plan(*tasks: tuple[str, dict]) -> Plan:
    """Build a plan from (function, args) pairs; indices assigned 1..n."""
    built = []
    for i, (fn, args) in enumerate(tasks, start=1):
        built.append(Task(index=i, function=fn, args=tuple(args.items())))
    return Plan(tasks=tuple(built))


_STRING_POOL = [
    "Sid",
    "Lutfi",
    " padded ",
    "with \"quotes\"",
    "back\\slash",
    "line\nbreak",
    "café visit",
    "hash # inside",
    "comma, dot.",
    "",
    "a",
    "money $5 now",
]

_IDENTS = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
_FNS = ["fetch_thing", "make_item", "send_it", "lookup_x", "combine_all", "archive"]


def random_value(rng: random.Random, task_index: int, allow_list: bool = True):
    kinds = ["str", "int", "num", "bool"]
    if task_index > 1:
        kinds.append("ph")
    if allow_list:
        kinds.append("list")
    kind = rng.choice(kinds)
    if kind == "str":
        return StringLit(rng.choice(_STRING_POOL))
    if kind == "int":
        return IntLit(rng.randint(-1000, 1000))
    if kind == "num":
        return NumLit(rng.random() * 10 ** rng.randint(-2, 3))
    if kind == "bool":
        return BoolLit(rng.random() < 0.5)
    if kind == "ph":
        return Placeholder(rng.randint(1, task_index - 1))
    items = tuple(
        random_value(rng, task_index, allow_list=False) for _ in range(rng.randint(0, 3))
    )
    return ListLit(items)


def random_plan(rng: random.Random, max_tasks: int = 8) -> Plan:
    """A random plan exercising the full value grammar; always valid."""
    n = rng.randint(1, max_tasks)
    tasks = []
    for i in range(1, n + 1):
        names = rng.sample(_IDENTS, rng.randint(0, 4))
        args = tuple((name, random_value(rng, i)) for name in names)
        tasks.append(Task(index=i, function=rng.choice(_FNS), args=args))
    return Plan(tasks=tuple(tasks))


def random_labeled_plan(
    rng: random.Random,
    n: int,
    fn_pool=("f", "g"),
    literal_pool=("p", "q"),
    edge_prob: float = 0.35,
) -> Plan:
    """Random DAG-shaped plan with heavily colliding node labels."""
    tasks = []
    for i in range(1, n + 1):
        refs = [j for j in range(1, i) if rng.random() < edge_prob]
        args = []
        if rng.random() < 0.7:
            args.append(("x", StringLit(rng.choice(literal_pool))))
        if refs:
            args.append(("deps", ListLit(tuple(Placeholder(r) for r in refs))))
        tasks.append(
            Task(index=i, function=rng.choice(fn_pool), args=tuple(args))
        )
    return Plan(tasks=tuple(tasks))


def renumber_plan(plan: Plan, rng: random.Random) -> Plan:
    """Renumber along a random dependency-respecting order."""
    deps = {t.index: set(t.placeholder_refs()) for t in plan.tasks}
    remaining = set(deps)
    order: list[int] = []
    placed: set[int] = set()
    while remaining:
        ready = sorted(i for i in remaining if deps[i] <= placed)
        pick = rng.choice(ready)
        order.append(pick)
        placed.add(pick)
        remaining.remove(pick)
    mapping = {old: new for new, old in enumerate(order, start=1)}

    def remap(v):
        if isinstance(v, Placeholder):
            return Placeholder(mapping[v.task_index])
        if isinstance(v, ListLit):
            return ListLit(tuple(remap(e) for e in v.items))
        return v

    by_old = {t.index: t for t in plan.tasks}
    tasks = []
    for new_idx, old_idx in enumerate(order, start=1):
        t = by_old[old_idx]
        tasks.append(
            Task(
                index=new_idx,
                function=t.function,
                args=tuple((k, remap(v)) for k, v in t.args),
            )
        )
    return Plan(tasks=tuple(tasks))


# A tiny conflict-free registry for executor stress tests: results are pure
# functions of arguments and all writes are appends.
def exec_test_registry() -> ToolRegistry:
    return ToolRegistry.from_specs(
        [
            ToolSpec(
                name="emit",
                description="Emit a tagged value.",
                params=(ParamSpec("tag", "string", True),),
                returns="string",
            ),
            ToolSpec(
                name="combine",
                description="Combine earlier results.",
                params=(
                    ParamSpec("parts", "list-of-string", True),
                    ParamSpec("sep", "string", False),
                ),
                returns="string",
            ),
        ]
    )


def _impl_emit(args, state):
    new = state.copy()
    new.sent_sms_log.append({"to": ["emit"], "message": args["tag"]})
    return f"r:{args['tag']}", new


def _impl_combine(args, state):
    sep = args.get("sep", "+")
    value = sep.join(args["parts"])
    new = state.copy()
    new.sent_sms_log.append({"to": ["combine"], "message": value})
    return value, new


EXEC_TEST_IMPLS = {"emit": _impl_emit, "combine": _impl_combine}


def random_exec_plan(rng: random.Random, max_tasks: int = 7) -> Plan:
    """Random plan over the conflict-free test registry."""
    n = rng.randint(1, max_tasks)
    tasks = []
    for i in range(1, n + 1):
        refs = sorted(rng.sample(range(1, i), rng.randint(0, min(3, i - 1))))
        if refs:
            args = (("parts", ListLit(tuple(Placeholder(r) for r in refs))),)
            fn = "combine"
        else:
            args = (("tag", StringLit(f"t{i}")),)
            fn = "emit"
        tasks.append(Task(index=i, function=fn, args=args))
    return Plan(tasks=tuple(tasks))
