import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plankit.plan import (
    ARG_TYPE_MISMATCH,
    DANGLING_REF,
    DUPLICATE_INDEX,
    EMPTY_PLAN,
    GAP_IN_NUMBERING,
    MISSING_REQUIRED_PARAM,
    SYNTAX,
    UNKNOWN_FUNCTION,
    UNKNOWN_PARAM,
    BoolLit,
    IntLit,
    ListLit,
    NumLit,
    Placeholder,
    Plan,
    PlanParseError,
    StringLit,
    Task,
    canonicalize_value,
    parse_plan,
    serialize_plan,
    validate_plan,
)
from tests.conftest import FANIN_PLAN_TEXT
from tests.helpers import build_plan, random_plan


def errors_of(text):
    with pytest.raises(PlanParseError) as exc:
        parse_plan(text)
    return exc.value.errors


class TestParse:
    def test_fanin_fixture(self, fanin_plan):
        assert len(fanin_plan) == 3
        t3 = fanin_plan.tasks[2]
        assert t3.function == "create_calendar_event"
        attendees = dict(t3.args)["attendees"]
        assert attendees == ListLit((Placeholder(1), Placeholder(2)))

    def test_empty_input(self):
        errs = errors_of("")
        assert [e.kind for e in errs] == [EMPTY_PLAN]
        assert [e.kind for e in errors_of("   \n\t\n")] == [EMPTY_PLAN]

    def test_comment_only_is_empty(self):
        assert [e.kind for e in errors_of("# nothing here")] == [EMPTY_PLAN]

    def test_self_reference(self):
        errs = errors_of("1. f(x=$1)")
        assert [e.kind for e in errs] == [DANGLING_REF]

    def test_forward_reference(self):
        errs = errors_of('1. f(x=$2)\n2. g()')
        assert DANGLING_REF in {e.kind for e in errs}

    def test_placeholder_zero(self):
        assert DANGLING_REF in {e.kind for e in errors_of("1. f(x=$0)")}

    def test_duplicate_index(self):
        errs = errors_of('1. f()\n1. g()')
        assert DUPLICATE_INDEX in {e.kind for e in errs}

    def test_gap_in_numbering(self):
        errs = errors_of('1. f()\n3. g()')
        assert GAP_IN_NUMBERING in {e.kind for e in errs}

    def test_syntax_error_carries_position(self):
        errs = errors_of('1. f(x=)')
        assert errs[0].kind == SYNTAX
        assert errs[0].line == 1
        assert errs[0].col == 8

    def test_error_lines_within_range(self):
        text = '1. f(\n2. g()\n3. h(]'
        for e in errors_of(text):
            assert 1 <= e.line <= 3

    def test_values(self):
        plan = parse_plan(
            '1. f(a="hi", b=3, c=-2.5, d=true, e=false, f=[1, "x"], g=1e3)'
        )
        args = dict(plan.tasks[0].args)
        assert args["a"] == StringLit("hi")
        assert args["b"] == IntLit(3)
        assert args["c"] == NumLit(-2.5)
        assert args["d"] == BoolLit(True)
        assert args["e"] == BoolLit(False)
        assert args["f"] == ListLit((IntLit(1), StringLit("x")))
        assert args["g"] == NumLit(1000.0)

    def test_string_escapes(self):
        plan = parse_plan(r'1. f(x="a\"b\\c\nd")')
        assert dict(plan.tasks[0].args)["x"] == StringLit('a"b\\c\nd')

    def test_hash_inside_string_is_not_comment(self):
        plan = parse_plan('1. f(x="see #5") # trailing comment')
        assert dict(plan.tasks[0].args)["x"] == StringLit("see #5")

    def test_nested_list_rejected(self):
        errs = errors_of('1. f(x=[[1]])')
        assert errs[0].kind == SYNTAX

    def test_duplicate_arg_name(self):
        errs = errors_of('1. f(x=1, x=2)')
        assert errs[0].kind == SYNTAX
        assert "duplicate" in errs[0].detail

    def test_unterminated_string(self):
        errs = errors_of('1. f(x="oops)')
        assert errs[0].kind == SYNTAX

    def test_no_args(self):
        plan = parse_plan("1. open_note()")
        assert plan.tasks[0].args == ()

    def test_blank_lines_and_comments_skipped(self):
        plan = parse_plan('\n1. f()  # do f\n\n# note\n2. g(x=$1)\n')
        assert len(plan) == 2


class TestSerialize:
    def test_fanin_canonical_text(self, fanin_plan):
        assert serialize_plan(fanin_plan) == FANIN_PLAN_TEXT

    def test_no_args(self):
        assert serialize_plan(build_plan(("open_note", {}))) == "1. open_note()"

    def test_round_trip_seeded(self):
        rng = random.Random(99)
        for _ in range(1000):
            plan = random_plan(rng)
            assert parse_plan(serialize_plan(plan)) == plan

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31))
    def test_round_trip_property(self, seed):
        plan = random_plan(random.Random(seed))
        assert parse_plan(serialize_plan(plan)) == plan


class TestCanonicalize:
    def test_strip_and_nfc(self):
        assert canonicalize_value(StringLit(" Sid ")) == StringLit("Sid")
        composed = canonicalize_value(StringLit("café"))
        assert composed == StringLit("café")

    def test_integer_valued_float(self):
        assert canonicalize_value(NumLit(2.0)) == IntLit(2)
        assert canonicalize_value(NumLit(2.5)) == NumLit(2.5)

    def test_list_elementwise(self):
        v = ListLit((StringLit(" a"), StringLit("b ")))
        assert canonicalize_value(v) == ListLit((StringLit("a"), StringLit("b")))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31))
    def test_idempotent(self, seed):
        from tests.helpers import random_value

        rng = random.Random(seed)
        v = random_value(rng, task_index=4)
        once = canonicalize_value(v)
        assert canonicalize_value(once) == once


class TestValidate:
    def test_fanin_ok(self, registry, fanin_plan):
        report = validate_plan(fanin_plan, registry)
        assert report.ok and not report.issues

    def test_hallucinated_name(self, registry):
        plan = build_plan(("get_email_adress", {"name": StringLit("Sid")}))
        report = validate_plan(plan, registry)
        assert [i.kind for i in report.issues] == [UNKNOWN_FUNCTION]
        assert report.issues[0].task_index == 1

    def test_arg_type_mismatch_literal(self, registry):
        plan = build_plan(
            ("create_calendar_event", {"title": StringLit("X"), "attendees": IntLit(5)})
        )
        report = validate_plan(plan, registry)
        assert ARG_TYPE_MISMATCH in {i.kind for i in report.issues}

    def test_unknown_param(self, registry):
        plan = build_plan(("open_note", {"title": StringLit("A"), "speed": IntLit(1)}))
        report = validate_plan(plan, registry)
        assert UNKNOWN_PARAM in {i.kind for i in report.issues}

    def test_missing_required(self, registry):
        plan = build_plan(("create_note", {"title": StringLit("A")}))
        report = validate_plan(plan, registry)
        assert MISSING_REQUIRED_PARAM in {i.kind for i in report.issues}

    def test_placeholder_type_ok_via_string_coercion(self, registry):
        plan = Plan(
            tasks=(
                Task(1, "get_zoom_meeting_link", (("topic", StringLit("sync")),)),
                Task(2, "create_note", (("title", StringLit("T")), ("body", Placeholder(1)))),
            )
        )
        assert validate_plan(plan, registry).ok

    def test_placeholder_into_integer_param_rejected(self, registry):
        plan = Plan(
            tasks=(
                Task(1, "get_email_address", (("name", StringLit("Sid")),)),
                Task(
                    2,
                    "get_zoom_meeting_link",
                    (("topic", StringLit("x")), ("duration", Placeholder(1))),
                ),
            )
        )
        report = validate_plan(plan, registry)
        assert ARG_TYPE_MISMATCH in {i.kind for i in report.issues}

    def test_raw_plan_structure_reported(self, registry):
        # Built by hand, bypassing the parser: forward ref and bad numbering.
        plan = Plan(
            tasks=(
                Task(1, "open_note", (("title", Placeholder(2)),)),
                Task(3, "open_note", (("title", StringLit("x")),)),
            )
        )
        kinds = {i.kind for i in validate_plan(plan, registry).issues}
        assert DANGLING_REF in kinds
        assert GAP_IN_NUMBERING in kinds

    def test_empty_plan(self, registry):
        report = validate_plan(Plan(tasks=()), registry)
        assert [i.kind for i in report.issues] == [EMPTY_PLAN]
