"""The function-calling plan language: values, parser, serializer, validator.

Grammar (frozen; this is the wire format emitted by planner backends and
stored in dataset files):

    plan    := line (NEWLINE line)*
    line    := [task] [comment]              ; blank/comment-only lines ignored
    task    := INT "." IDENT "(" arglist? ")"
    arglist := arg ("," arg)*
    arg     := IDENT "=" value
    value   := STRING | NUMBER | BOOL | PLACEHOLDER | list
    list    := "[" (scalar ("," scalar)*)? "]"
    scalar  := STRING | NUMBER | BOOL | PLACEHOLDER

STRING is double-quoted with ``\\"``, ``\\\\`` and ``\\n`` escapes; NUMBER is a
decimal integer or float (optional sign and exponent); BOOL is ``true`` or
``false``; PLACEHOLDER is ``$`` followed by a task index. A ``#`` outside a
string starts a comment running to end of line.

Task numbering must be exactly 1..n in order, and every placeholder must
reference a strictly earlier task, so any parsed plan is acyclic by
construction.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from typing import Union


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StringLit:
    text: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class NumLit:
    value: float


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Placeholder:
    task_index: int


@dataclass(frozen=True)
class ListLit:
    items: tuple  # scalar values only; lists never nest


Value = Union[StringLit, IntLit, NumLit, BoolLit, Placeholder, ListLit]


@dataclass(frozen=True)
class Task:
    index: int
    function: str
    args: tuple[tuple[str, Value], ...]

    def placeholder_refs(self) -> list[int]:
        refs = []
        for _, v in self.args:
            if isinstance(v, Placeholder):
                refs.append(v.task_index)
            elif isinstance(v, ListLit):
                refs.extend(e.task_index for e in v.items if isinstance(e, Placeholder))
        return refs


@dataclass(frozen=True)
class Plan:
    tasks: tuple[Task, ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def functions(self) -> list[str]:
        return [t.function for t in self.tasks]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

# Parse error kinds
SYNTAX = "SyntaxError"
DANGLING_REF = "DanglingRef"
DUPLICATE_INDEX = "DuplicateIndex"
GAP_IN_NUMBERING = "GapInNumbering"
EMPTY_PLAN = "EmptyPlan"


@dataclass(frozen=True)
class ParseError:
    kind: str
    line: int  # 1-based; 0 for whole-input errors
    col: int   # 1-based; 0 when not meaningful
    detail: str


class PlanParseError(Exception):
    """Raised by :func:`parse_plan`; carries every error found, with lines."""

    def __init__(self, errors: list[ParseError]):
        super().__init__("; ".join(f"line {e.line}: {e.detail}" for e in errors))
        self.errors = errors


_TOKEN_SPEC = [
    ("STRING", r'"(?:\\.|[^"\\\n])*"'),
    ("NUMBER", r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?"),
    ("PLACEHOLDER", r"\$\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"[().,=\[\]]"),
    ("WS", r"[ \t]+"),
    ("BAD", r"."),
]
_LEXER = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n"}


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _lex_line(line_no: int, text: str) -> tuple[list[_Tok], list[ParseError]]:
    toks: list[_Tok] = []
    errors: list[ParseError] = []
    for m in _LEXER.finditer(text):
        kind = m.lastgroup
        tok = m.group()
        col = m.start() + 1
        if kind == "WS":
            continue
        if kind == "BAD":
            if tok == "#":
                break  # comment to end of line
            if tok == '"':
                errors.append(
                    ParseError(SYNTAX, line_no, col, "unterminated string literal")
                )
                break
            errors.append(
                ParseError(SYNTAX, line_no, col, f"unexpected character {tok!r}")
            )
            break
        toks.append(_Tok(kind, tok, col))
    return toks, errors


def _unescape(raw: str, line_no: int, col: int, errors: list[ParseError]) -> str:
    body = raw[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            esc = body[i + 1] if i + 1 < len(body) else ""
            if esc in _ESCAPES:
                out.append(_ESCAPES[esc])
                i += 2
                continue
            errors.append(
                ParseError(SYNTAX, line_no, col, f"bad escape \\{esc} in string")
            )
            i += 2
            continue
        out.append(c)
        i += 1
    return "".join(out)


class _LineParser:
    """Recursive-descent parser for a single `N. fn(arg=value, ...)` line."""

    def __init__(self, line_no: int, toks: list[_Tok], line_len: int):
        self.line_no = line_no
        self.toks = toks
        self.pos = 0
        self.end_col = line_len + 1
        self.errors: list[ParseError] = []

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self) -> _Tok | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def fail(self, expected: str) -> None:
        tok = self.peek()
        col = tok.col if tok else self.end_col
        got = f"{tok.text!r}" if tok else "end of line"
        self.errors.append(
            ParseError(SYNTAX, self.line_no, col, f"expected {expected}, got {got}")
        )
        raise _Abort()

    def expect(self, kind: str, text: str | None, expected: str) -> _Tok:
        tok = self.peek()
        if tok is None or tok.kind != kind or (text is not None and tok.text != text):
            self.fail(expected)
        return self.take()

    def parse_task(self) -> Task:
        idx_tok = self.expect("NUMBER", None, "task index")
        if not idx_tok.text.isdigit():
            self.errors.append(
                ParseError(SYNTAX, self.line_no, idx_tok.col, "task index must be a positive integer")
            )
            raise _Abort()
        index = int(idx_tok.text)
        self.expect("OP", ".", "'.' after task index")
        fn_tok = self.expect("IDENT", None, "function name")
        self.expect("OP", "(", "'(' after function name")
        args: list[tuple[str, Value]] = []
        seen: set[str] = set()
        nxt = self.peek()
        if not (nxt and nxt.kind == "OP" and nxt.text == ")"):
            while True:
                name_tok = self.expect("IDENT", None, "argument name")
                if name_tok.text in seen:
                    self.errors.append(
                        ParseError(
                            SYNTAX,
                            self.line_no,
                            name_tok.col,
                            f"duplicate argument name {name_tok.text!r}",
                        )
                    )
                    raise _Abort()
                seen.add(name_tok.text)
                self.expect("OP", "=", "'=' after argument name")
                args.append((name_tok.text, self.parse_value(allow_list=True)))
                nxt = self.peek()
                if nxt and nxt.kind == "OP" and nxt.text == ",":
                    self.take()
                    continue
                break
        self.expect("OP", ")", "')' or ',' in argument list")
        if self.peek() is not None:
            self.fail("end of line after ')'")
        return Task(index=index, function=fn_tok.text, args=tuple(args))

    def parse_value(self, allow_list: bool) -> Value:
        tok = self.peek()
        if tok is None:
            self.fail("a value")
        if tok.kind == "STRING":
            self.take()
            return StringLit(_unescape(tok.text, self.line_no, tok.col, self.errors))
        if tok.kind == "NUMBER":
            self.take()
            if re.fullmatch(r"-?\d+", tok.text):
                return IntLit(int(tok.text))
            return NumLit(float(tok.text))
        if tok.kind == "PLACEHOLDER":
            self.take()
            return Placeholder(int(tok.text[1:]))
        if tok.kind == "IDENT" and tok.text in ("true", "false"):
            self.take()
            return BoolLit(tok.text == "true")
        if tok.kind == "OP" and tok.text == "[":
            if not allow_list:
                self.fail("a non-list value (lists cannot nest)")
            self.take()
            items: list[Value] = []
            nxt = self.peek()
            if not (nxt and nxt.kind == "OP" and nxt.text == "]"):
                while True:
                    items.append(self.parse_value(allow_list=False))
                    nxt = self.peek()
                    if nxt and nxt.kind == "OP" and nxt.text == ",":
                        self.take()
                        continue
                    break
            self.expect("OP", "]", "']' or ',' in list")
            return ListLit(tuple(items))
        self.fail("a value")


class _Abort(Exception):
    pass


def parse_plan(text: str) -> Plan:
    """Parse plan text, or raise :class:`PlanParseError` with every issue found.

    Errors are collected per line where possible so one malformed line does
    not mask later ones.
    """
    errors: list[ParseError] = []
    parsed: list[tuple[int, Task]] = []  # (line_no, task)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        toks, lex_errors = _lex_line(line_no, raw)
        errors.extend(lex_errors)
        if lex_errors or not toks:
            continue
        parser = _LineParser(line_no, toks, len(raw))
        try:
            task = parser.parse_task()
        except _Abort:
            errors.extend(parser.errors)
            continue
        errors.extend(parser.errors)
        if not parser.errors:
            parsed.append((line_no, task))

    if not parsed and not errors:
        raise PlanParseError([ParseError(EMPTY_PLAN, 0, 0, "plan has no tasks")])

    seen_indices: set[int] = set()
    expected = 1
    for line_no, task in parsed:
        if task.index in seen_indices:
            errors.append(
                ParseError(
                    DUPLICATE_INDEX, line_no, 0, f"task index {task.index} repeats"
                )
            )
        elif task.index != expected:
            errors.append(
                ParseError(
                    GAP_IN_NUMBERING,
                    line_no,
                    0,
                    f"expected task index {expected}, got {task.index}",
                )
            )
            expected = task.index + 1
        else:
            expected += 1
        seen_indices.add(task.index)
        for ref in task.placeholder_refs():
            if ref < 1 or ref >= task.index:
                errors.append(
                    ParseError(
                        DANGLING_REF,
                        line_no,
                        0,
                        f"${ref} does not reference an earlier task",
                    )
                )

    if errors:
        raise PlanParseError(errors)
    return Plan(tasks=tuple(task for _, task in parsed))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def serialize_value(v: Value) -> str:
    if isinstance(v, StringLit):
        return f'"{_escape(v.text)}"'
    if isinstance(v, IntLit):
        return str(v.value)
    if isinstance(v, NumLit):
        return repr(v.value)
    if isinstance(v, BoolLit):
        return "true" if v.value else "false"
    if isinstance(v, Placeholder):
        return f"${v.task_index}"
    if isinstance(v, ListLit):
        return "[" + ", ".join(serialize_value(e) for e in v.items) + "]"
    raise TypeError(f"not a plan value: {v!r}")


def serialize_plan(plan: Plan) -> str:
    """Canonical one-task-per-line text; ``parse_plan`` inverts it exactly."""
    lines = []
    for t in plan.tasks:
        args = ", ".join(f"{k}={serialize_value(v)}" for k, v in t.args)
        lines.append(f"{t.index}. {t.function}({args})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Canonicalization
# ---------------------------------------------------------------------------

def canonicalize_value(v: Value) -> Value:
    """Normalize a value for label comparison; idempotent.

    Strings are NFC-normalized and stripped of surrounding whitespace;
    integer-valued floats collapse to integers; lists canonicalize
    element-wise with order preserved.
    """
    if isinstance(v, StringLit):
        return StringLit(unicodedata.normalize("NFC", v.text).strip())
    if isinstance(v, NumLit):
        if math.isfinite(v.value) and v.value == int(v.value):
            return IntLit(int(v.value))
        return v
    if isinstance(v, ListLit):
        return ListLit(tuple(canonicalize_value(e) for e in v.items))
    return v


# ---------------------------------------------------------------------------
# Validation against a registry
# ---------------------------------------------------------------------------

# Validation issue kinds
UNKNOWN_FUNCTION = "UnknownFunction"
UNKNOWN_PARAM = "UnknownParam"
MISSING_REQUIRED_PARAM = "MissingRequiredParam"
ARG_TYPE_MISMATCH = "ArgTypeMismatch"


@dataclass(frozen=True)
class ValidationIssue:
    task_index: int
    kind: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...]

    @classmethod
    def from_issues(cls, issues: list[ValidationIssue]) -> "ValidationReport":
        return cls(ok=not issues, issues=tuple(issues))


def _literal_matches(v: Value, expected: str) -> bool:
    if expected == "string":
        return isinstance(v, StringLit)
    if expected == "integer":
        return isinstance(v, IntLit)
    if expected == "number":
        return isinstance(v, (IntLit, NumLit))
    if expected == "boolean":
        return isinstance(v, BoolLit)
    if expected == "list-of-string":
        return isinstance(v, ListLit) and all(
            isinstance(e, (StringLit, Placeholder)) for e in v.items
        )
    return False


def _placeholder_ok(return_type: str, expected: str) -> bool:
    # A result substitutes directly when types agree, and coerces to its
    # display string when a string is expected.
    return return_type == expected or expected == "string"


def validate_plan(plan: Plan, registry) -> ValidationReport:
    """Check every task against the registry's tool signatures.

    Also re-checks structural invariants (numbering, backward references) so
    that raw plan values built outside the parser are fully reported.
    """
    issues: list[ValidationIssue] = []

    if not plan.tasks:
        issues.append(ValidationIssue(0, EMPTY_PLAN, "plan has no tasks"))
        return ValidationReport.from_issues(issues)

    seen: set[int] = set()
    expected_idx = 1
    return_types: dict[int, str] = {}
    for t in plan.tasks:
        if t.index in seen:
            issues.append(
                ValidationIssue(t.index, DUPLICATE_INDEX, f"task index {t.index} repeats")
            )
        elif t.index != expected_idx:
            issues.append(
                ValidationIssue(
                    t.index,
                    GAP_IN_NUMBERING,
                    f"expected task index {expected_idx}, got {t.index}",
                )
            )
            expected_idx = t.index + 1
        else:
            expected_idx += 1
        seen.add(t.index)
        if t.function in registry:
            return_types[t.index] = registry.get(t.function).returns

    for t in plan.tasks:
        for ref in t.placeholder_refs():
            if ref < 1 or ref >= t.index:
                issues.append(
                    ValidationIssue(
                        t.index, DANGLING_REF, f"${ref} does not reference an earlier task"
                    )
                )

        if t.function not in registry:
            issues.append(
                ValidationIssue(t.index, UNKNOWN_FUNCTION, f"unknown function {t.function!r}")
            )
            continue
        spec = registry.get(t.function)

        given = {k for k, _ in t.args}
        for k, v in t.args:
            p = spec.param(k)
            if p is None:
                issues.append(
                    ValidationIssue(
                        t.index, UNKNOWN_PARAM, f"{t.function} has no param {k!r}"
                    )
                )
                continue
            if isinstance(v, Placeholder):
                rt = return_types.get(v.task_index)
                if rt is not None and not _placeholder_ok(rt, p.type):
                    issues.append(
                        ValidationIssue(
                            t.index,
                            ARG_TYPE_MISMATCH,
                            f"param {k!r} expects {p.type}, ${v.task_index} returns {rt}",
                        )
                    )
            elif not _literal_matches(v, p.type):
                issues.append(
                    ValidationIssue(
                        t.index,
                        ARG_TYPE_MISMATCH,
                        f"param {k!r} expects {p.type}",
                    )
                )
        for p in spec.params:
            if p.required and p.name not in given:
                issues.append(
                    ValidationIssue(
                        t.index,
                        MISSING_REQUIRED_PARAM,
                        f"{t.function} requires param {p.name!r}",
                    )
                )

    return ValidationReport.from_issues(issues)
