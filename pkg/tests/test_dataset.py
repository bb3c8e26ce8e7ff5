import json
import random
from collections import Counter

import pytest

from plankit.dataset import (
    BAD_ARG_TYPE,
    DROP_TASK,
    EMPTY_QUERY,
    INFEASIBLE_GRAPH,
    MANGLE_SYNTAX,
    RENAME_FUNCTION,
    RETARGET_PLACEHOLDER,
    TOOL_NOT_AVAILABLE,
    DatasetConfig,
    DatasetExample,
    GrammarExhausted,
    NotApplicable,
    RejectedCandidate,
    corrupt_example,
    default_grammar,
    generate_dataset,
    generate_example,
    llm_generate_example,
    load_jsonl,
    sanity_check,
    save_jsonl,
    select_in_context_examples,
)
from plankit.evaluator import MatchMode, score_pair
from plankit.executor import build_dag
from plankit.plan import Placeholder, Plan, PlanParseError, StringLit, Task, parse_plan
from tests.helpers import build_plan


@pytest.fixture(scope="module")
def dataset(registry):
    return generate_dataset(
        DatasetConfig(n_train=800, n_val=50, n_test=50, seed=9), registry
    )


class TestGenerateExample:
    def test_deterministic(self, registry):
        g = default_grammar()
        assert generate_example(g, registry, 7) == generate_example(g, registry, 7)

    def test_batch_sanity(self, registry):
        g = default_grammar()
        for seed in range(300):
            ex = generate_example(g, registry, seed)
            assert sanity_check(ex, registry).ok

    def test_negatives_present(self, registry):
        g = default_grammar()
        for seed in range(50):
            ex = generate_example(g, registry, seed)
            gold = set(ex.gold_plan.functions())
            assert gold <= set(ex.available_tools)
            assert set(ex.available_tools) - gold
            assert len(ex.available_tools) >= 2

    def test_fanin_constraint(self, registry):
        g = default_grammar().restricted("fanin")
        for seed in range(40):
            ex = generate_example(g, registry, seed)
            graph = build_dag(ex.gold_plan)
            indeg = Counter(b for _, b in graph.edges)
            outdeg = Counter(a for a, _ in graph.edges)
            sources = [t.index for t in graph.nodes if indeg[t.index] == 0]
            sinks = [t.index for t in graph.nodes if outdeg[t.index] == 0]
            assert len(sources) >= 2 and len(sinks) == 1

    def test_unknown_shape_exhausts(self):
        with pytest.raises(GrammarExhausted):
            default_grammar().restricted("pentagram")


class TestGenerateDataset:
    def test_sizes(self, dataset):
        assert len(dataset["train"]) == 800
        assert len(dataset["validation"]) == 50
        assert len(dataset["test"]) == 50

    def test_reproducible(self, registry, dataset):
        again = generate_dataset(
            DatasetConfig(n_train=800, n_val=50, n_test=50, seed=9), registry
        )
        assert again == dataset

    def test_split_hygiene(self, dataset):
        ids = [ex.id for split in dataset.values() for ex in split]
        assert len(ids) == len(set(ids))
        pairs = {
            split: {(ex.query, ex.plan_text) for ex in examples}
            for split, examples in dataset.items()
        }
        assert not pairs["train"] & pairs["validation"]
        assert not pairs["train"] & pairs["test"]
        assert not pairs["validation"] & pairs["test"]

    def test_tool_coverage(self, registry, dataset):
        counts = Counter(
            fn for ex in dataset["train"] for fn in set(ex.gold_plan.functions())
        )
        for name in registry.names():
            assert counts[name] >= 0.01 * len(dataset["train"])


class TestSanityCheck:
    def test_tool_not_available(self, registry, dataset):
        ex = dataset["train"][0]
        stripped = DatasetExample(
            id="x",
            query=ex.query,
            available_tools=tuple(
                t for t in ex.available_tools if t not in ex.gold_plan.functions()
            ),
            gold_plan=ex.gold_plan,
        )
        report = sanity_check(stripped, registry)
        assert TOOL_NOT_AVAILABLE in report.violations

    def test_raw_cycle_reported(self, registry):
        # Hand-built, bypassing parser invariants: 1 -> 2 -> 1.
        cyclic = Plan(
            tasks=(
                Task(1, "open_note", (("title", Placeholder(2)),)),
                Task(2, "open_note", (("title", Placeholder(1)),)),
            )
        )
        ex = DatasetExample(
            id="cyc", query="loop", available_tools=("open_note",), gold_plan=cyclic
        )
        report = sanity_check(ex, registry)
        assert INFEASIBLE_GRAPH in report.violations

    def test_empty_query(self, registry):
        ex = DatasetExample(
            id="q",
            query="   ",
            available_tools=("open_note",),
            gold_plan=build_plan(("open_note", {"title": StringLit("Ideas")})),
        )
        assert EMPTY_QUERY in sanity_check(ex, registry).violations

    def test_unknown_function_and_bad_type(self, registry):
        ex = DatasetExample(
            id="u",
            query="do it",
            available_tools=("made_up_tool", "open_note"),
            gold_plan=build_plan(("made_up_tool", {})),
        )
        assert "UnknownFunction" in sanity_check(ex, registry).violations
        ex2 = DatasetExample(
            id="b",
            query="do it",
            available_tools=("open_note",),
            gold_plan=build_plan(("open_note", {"title": StringLit("Ideas"), "folder": StringLit("Notes"), "speed": StringLit("x")})),
        )
        assert BAD_ARG_TYPE in sanity_check(ex2, registry).violations


class TestCorruption:
    def kinds_applicable(self, ex):
        kinds = [RENAME_FUNCTION, MANGLE_SYNTAX]
        if len(ex.gold_plan) >= 2:
            kinds.append(DROP_TASK)
        return kinds

    def test_rename_scores_zero_both_modes(self, registry, dataset):
        rng = random.Random(1)
        for ex in dataset["test"][:30]:
            text = corrupt_example(ex, RENAME_FUNCTION, rng.randrange(2**32))
            for mode in MatchMode:
                success, _ = score_pair(text, ex.gold_plan, mode)
                assert success == 0

    def test_drop_scores_zero(self, registry, dataset):
        rng = random.Random(2)
        done = 0
        for ex in dataset["test"]:
            if len(ex.gold_plan) < 2:
                continue
            text = corrupt_example(ex, DROP_TASK, rng.randrange(2**32))
            parsed = parse_plan(text)  # stays well-formed
            assert len(parsed) == len(ex.gold_plan) - 1
            for mode in MatchMode:
                assert score_pair(text, ex.gold_plan, mode)[0] == 0
            done += 1
        assert done >= 10

    def test_retarget_strict_zero(self, registry, dataset):
        rng = random.Random(3)
        done = 0
        for ex in dataset["test"]:
            try:
                text = corrupt_example(ex, RETARGET_PLACEHOLDER, rng.randrange(2**32))
            except NotApplicable:
                continue
            assert score_pair(text, ex.gold_plan, MatchMode.STRICT)[0] == 0
            done += 1
        assert done >= 5

    def test_mangle_unparseable(self, dataset):
        rng = random.Random(4)
        for ex in dataset["test"][:30]:
            text = corrupt_example(ex, MANGLE_SYNTAX, rng.randrange(2**32))
            with pytest.raises(PlanParseError):
                parse_plan(text)

    def test_rename_matches_fig_bottom_shape(self, registry, fanin_plan):
        ex = DatasetExample(
            id="fig",
            query="Create a meeting with Sid and Lutfi",
            available_tools=tuple(registry.names()),
            gold_plan=fanin_plan,
        )
        text = corrupt_example(ex, RENAME_FUNCTION, 12)
        assert score_pair(text, ex.gold_plan, MatchMode.STRICT)[0] == 0

    def test_not_applicable(self, registry):
        single = DatasetExample(
            id="s",
            query="open it",
            available_tools=("open_note", "read_file"),
            gold_plan=build_plan(("open_note", {"title": StringLit("Ideas")})),
        )
        with pytest.raises(NotApplicable):
            corrupt_example(single, DROP_TASK, 0)
        with pytest.raises(NotApplicable):
            corrupt_example(single, RETARGET_PLACEHOLDER, 0)
        with pytest.raises(NotApplicable):
            corrupt_example(single, "unknown_kind", 0)


class TestInContextSelection:
    def test_exact_query_first(self, dataset):
        train = dataset["train"]
        target = train[17]
        hits = select_in_context_examples(target.query, train, 1)
        assert hits[0].query == target.query

    def test_k_zero(self, dataset):
        assert select_in_context_examples("anything", dataset["train"], 0) == []

    def test_calendar_theme(self, registry, dataset):
        hits = select_in_context_examples(
            "Create a calendar invite for Standup with Sid and Lutfi at noon",
            dataset["train"],
            3,
        )
        with_calendar = sum(
            1 for ex in hits if "create_calendar_event" in ex.gold_plan.functions()
        )
        assert with_calendar >= 2

    def test_k_too_large(self, dataset):
        with pytest.raises(Exception):
            select_in_context_examples("q", dataset["train"][:3], 5)


class _EchoBackend:
    def __init__(self, text):
        self.text = text

    def complete_text(self, prompt):
        return self.text


class TestLlmGeneration:
    def test_accepts_known_good(self, registry):
        response = (
            "QUERY: What is Sid's email address?\n"
            "PLAN:\n"
            '1. get_email_address(name="Sid")'
        )
        got = llm_generate_example(
            _EchoBackend(response), registry, ("get_email_address", "send_sms"), 1
        )
        assert isinstance(got, DatasetExample)
        assert got.query == "What is Sid's email address?"
        assert got.gold_plan.functions() == ["get_email_address"]

    def test_rejects_hallucinated_tool(self, registry):
        response = "QUERY: do a thing\nPLAN:\n1. teleport(name=\"Sid\")"
        got = llm_generate_example(
            _EchoBackend(response), registry, ("get_email_address",), 1
        )
        assert isinstance(got, RejectedCandidate)
        assert got.reason in ("UnknownFunction", "ToolNotAvailable")

    def test_rejects_bad_grammar(self, registry):
        response = "QUERY: loop\nPLAN:\n1. get_email_address(name=$1)"
        got = llm_generate_example(
            _EchoBackend(response), registry, ("get_email_address",), 1
        )
        assert isinstance(got, RejectedCandidate)
        assert got.reason == "parse_error"

    def test_rejects_missing_markers(self, registry):
        got = llm_generate_example(
            _EchoBackend("no structure here"), registry, ("send_sms",), 1
        )
        assert isinstance(got, RejectedCandidate)
        assert got.reason == "malformed_response"


class TestJsonl:
    def test_round_trip(self, tmp_path, dataset):
        path = tmp_path / "test.jsonl"
        save_jsonl(dataset["test"], str(path))
        loaded, rejected = load_jsonl(str(path))
        assert not rejected
        assert loaded == dataset["test"]

    def test_record_fields_exact(self, dataset):
        rec = dataset["test"][0].to_record()
        assert set(rec) == {"id", "query", "available_tools", "plan", "split"}

    def test_import_quarantines_bad_records(self, tmp_path, registry, dataset):
        path = tmp_path / "mixed.jsonl"
        side = tmp_path / "rejected.jsonl"
        good = dataset["test"][0].to_record()
        bad_plan = dict(good, id="bad1", plan="1. not_a_tool()")
        bad_json = '{"id": "bad2",'
        with open(path, "w") as f:
            f.write(json.dumps(good) + "\n")
            f.write(json.dumps(bad_plan) + "\n")
            f.write(bad_json + "\n")
        accepted, rejected = load_jsonl(str(path), registry, str(side))
        assert len(accepted) == 1 and len(rejected) == 2
        assert side.exists()
        assert len(side.read_text().splitlines()) == 2
