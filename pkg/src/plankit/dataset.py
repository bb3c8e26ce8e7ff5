"""Synthetic function-calling dataset: generation, checking, corruption.

Examples are produced from a template grammar spanning all 16 tools and the
plan shapes that matter (single calls, chains, fan-ins, mixed DAGs), with
entities drawn from the same fixed pools the simulated device is seeded
from, so every generated plan is executable. An LLM-backed generation path
exists behind the same sanity-check gate.

Dataset files are line-delimited JSON with fields exactly
``(id, query, available_tools, plan, split)``; the plan is stored as
canonical plan-grammar text.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field, replace

from .executor import build_dag, check_acyclic
from .plan import (
    ListLit,
    Placeholder,
    Plan,
    PlanParseError,
    StringLit,
    parse_plan,
    serialize_plan,
    serialize_value,
)
from .plan import (
    ARG_TYPE_MISMATCH,
    MISSING_REQUIRED_PARAM,
    UNKNOWN_FUNCTION,
    UNKNOWN_PARAM,
    validate_plan,
)
from .registry import CONTACT_POOL, CORE_CONTACTS, FILE_POOL, NOTE_POOL, ToolRegistry
from .retriever import cosine, featurize

GRAMMAR_VERSION = 1

SPLITS = ("train", "validation", "test")


class DatasetError(Exception):
    pass


class GrammarExhausted(DatasetError):
    pass


class NotApplicable(DatasetError):
    def __init__(self, kind: str, why: str):
        super().__init__(f"{kind}: {why}")
        self.kind = kind


@dataclass(frozen=True)
class DatasetExample:
    id: str
    query: str
    available_tools: tuple[str, ...]
    gold_plan: Plan
    split: str = "train"

    @property
    def plan_text(self) -> str:
        return serialize_plan(self.gold_plan)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "query": self.query,
            "available_tools": list(self.available_tools),
            "plan": self.plan_text,
            "split": self.split,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DatasetExample":
        return cls(
            id=rec["id"],
            query=rec["query"],
            available_tools=tuple(rec["available_tools"]),
            gold_plan=parse_plan(rec["plan"]),
            split=rec["split"],
        )


# ---------------------------------------------------------------------------
# Entity pools and templates
# ---------------------------------------------------------------------------

CONTACTS = list(CORE_CONTACTS) + CONTACT_POOL

NEW_NOTE_TITLES = [
    "Trip Packing", "Gift Ideas", "Sprint Retro", "Reading List", "Garden Plan",
    "Apartment Hunt", "Workout Log", "Interview Prep", "Menu Draft", "Call Notes",
    "Side Project", "Savings Plan", "Party Checklist", "Course Outline",
    "Repair List", "Photo Shoot", "Band Practice", "Moving Day",
]

EVENT_TITLES = [
    "Team Sync", "Budget Review", "Design Workshop", "Board Meeting",
    "Lunch Catchup", "Code Review", "Planning Session", "All Hands",
    "Client Demo", "Study Group", "Project Kickoff", "Retro", "1:1 Chat",
    "Office Hours", "Book Club", "Standup",
]

_DAYS = [
    "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday",
    "Sunday", "tomorrow", "next Monday", "next Friday", "March 3", "April 12",
    "May 20", "June 8",
]
_TIMES = ["9am", "10am", "11:30am", "noon", "1pm", "2pm", "3:30pm", "5pm", "7pm"]
DATETIMES = [f"{d} at {t}" for d in _DAYS for t in _TIMES]

DUE_DATES = [
    "tonight", "tomorrow", "tomorrow morning", "Friday", "next week",
    "Sunday evening", "June 1", "the 15th", "end of month", "this weekend",
]

REMINDER_TASKS = [
    "pay the rent", "call the dentist", "renew the passport", "water the plants",
    "submit the report", "book the flights", "pick up the dry cleaning",
    "back up the laptop", "buy a birthday card", "schedule the oil change",
    "return the library books", "take out the recycling", "sign the lease",
    "update the budget", "charge the camera", "refill the prescription",
]

MESSAGES = [
    "running 10 minutes late", "the meeting moved to 3pm", "dinner is at 7",
    "the package arrived", "see you at the gym", "bring the charger",
    "the game starts soon", "parking is on level 2", "flight lands at 9",
    "the doc is ready for review", "lunch is on me today", "call me when free",
    "the printer is fixed", "practice is cancelled", "tickets are booked",
    "we won the raffle", "the code is 4512", "leaving the office now",
    "traffic is terrible", "movie night is on",
]

SUBJECTS = [
    "Quarterly results", "Trip plans", "Project timeline", "Budget question",
    "Weekend plans", "Meeting follow-up", "Draft feedback", "Contract renewal",
    "Team offsite", "Release schedule", "Invoice details", "Design mockups",
    "Interview schedule", "Vacation request",
]

BODIES = [
    "let's sync on this before Friday", "please take a look when you can",
    "here are the details we discussed", "can you confirm the numbers",
    "sending this over as promised", "let me know your thoughts",
    "happy to discuss this week", "attached are my comments",
    "this should unblock the next step", "feel free to forward this along",
    "the draft is ready for a pass", "I added the missing sections",
    "we should loop in the vendor", "see the summary below",
    "this covers the open questions", "reply with your availability",
]

TOPICS = [
    "design review", "sprint planning", "quarterly roadmap", "user research",
    "onboarding walkthrough", "budget deep dive", "incident postmortem",
    "hiring debrief", "launch checklist", "growth experiments",
    "api migration", "support triage", "partner intro", "demo rehearsal",
]

DESTINATIONS = [
    "the airport", "downtown", "the dentist office", "the stadium",
    "the farmers market", "city hall", "the beach", "the train station",
    "the conference center", "the library", "the botanical garden",
    "the ferry terminal", "the science museum", "the climbing gym",
]

ORIGINS = ["home", "the office", "campus"]
TRANSPORTS = ["driving", "walking", "transit"]
LOCATIONS = [
    "Room 4", "the cafe", "the main office", "Building B", "the park",
    "the lobby", "Conference Room A", "the studio", "the lab", "the rooftop",
]
NOTE_CONTENTS = [
    "buy oat milk", "review chapter three", "ask about the warranty",
    "idea: weekly digest email", "check tire pressure", "fix the login bug",
    "quote from the plumber", "try the new recipe", "book club pick",
    "possible venue: the annex", "follow up with the landlord",
    "draft the intro paragraph", "measure the hallway", "order more filament",
]
DURATIONS = [15, 30, 45, 60]

POOLS: dict[str, list] = {
    "contact": CONTACTS,
    "path": FILE_POOL,
    "seeded_note": NOTE_POOL,
    "new_note_title": NEW_NOTE_TITLES,
    "folder": ["Notes", "Work", "Personal"],
    "event_title": EVENT_TITLES,
    "datetime": DATETIMES,
    "due": DUE_DATES,
    "reminder_task": REMINDER_TASKS,
    "message": MESSAGES,
    "subject": SUBJECTS,
    "body": BODIES,
    "topic": TOPICS,
    "destination": DESTINATIONS,
    "origin": ORIGINS,
    "transport": TRANSPORTS,
    "location": LOCATIONS,
    "note_content": NOTE_CONTENTS,
    "duration": DURATIONS,
}


@dataclass(frozen=True)
class Template:
    name: str
    query_patterns: tuple[str, ...]
    plan_pattern: tuple[str, ...]
    slots: tuple[tuple[str, str], ...]  # (slot key, pool name)


def _t(name, queries, plan, slots) -> Template:
    return Template(
        name=name,
        query_patterns=tuple(queries),
        plan_pattern=tuple(plan),
        slots=tuple(slots),
    )


TEMPLATES: tuple[Template, ...] = (
    _t(
        "lookup_email",
        ["What is {c1}'s email address?", "Find the email address for {c1}", "Look up {c1}'s email"],
        ['1. get_email_address(name={c1})'],
        [("c1", "contact")],
    ),
    _t(
        "lookup_phone",
        ["What is {c1}'s phone number?", "Find {c1}'s number for me", "Get the phone number for {c1}"],
        ['1. get_phone_number(name={c1})'],
        [("c1", "contact")],
    ),
    _t(
        "reminder",
        ["Remind me to {task} {due}", "Set a reminder to {task} {due}", "Add a reminder for {due}: {task}"],
        ['1. create_reminder(name={task}, due_date={due})'],
        [("task", "reminder_task"), ("due", "due")],
    ),
    _t(
        "new_note",
        [
            "Create a note called {title} in my {folder} folder that says {content}",
            "Make a new note titled {title} in {folder} saying {content}",
        ],
        ['1. create_note(title={title}, body={content}, folder={folder})'],
        [("title", "new_note_title"), ("folder", "folder"), ("content", "note_content")],
    ),
    _t(
        "open_note",
        ["Open my {note_title} note from the {note_folder} folder", "Show me the {note_title} note in {note_folder}"],
        ['1. open_note(title={note_title}, folder={note_folder})'],
        [("note", "seeded_note")],
    ),
    _t(
        "read_file",
        ["Read the file {path}", "Read {path} for me", "What does {path} say?"],
        ['1. read_file(path={path})'],
        [("path", "path")],
    ),
    _t(
        "open_file",
        ["Open the file {path}", "Open {path}", "Pull up {path} on screen"],
        ['1. open_file(path={path})'],
        [("path", "path")],
    ),
    _t(
        "summarize",
        ["Summarize the document at {path}", "Give me a summary of {path}", "Summarize {path}"],
        ['1. summarize_document(path={path})'],
        [("path", "path")],
    ),
    _t(
        "directions",
        ["How do I get to {dest}?", "Show me directions to {dest}"],
        ['1. show_directions(destination={dest})'],
        [("dest", "destination")],
    ),
    _t(
        "directions_full",
        ["Get me {transport} directions from {origin} to {dest}"],
        ['1. show_directions(destination={dest}, origin={origin}, transport={transport})'],
        [("dest", "destination"), ("origin", "origin"), ("transport", "transport")],
    ),
    _t(
        "calendar_solo",
        ["Schedule {title} on {dt}", "Put {title} on my calendar for {dt}"],
        ['1. create_calendar_event(title={title}, start_time={dt})'],
        [("title", "event_title"), ("dt", "datetime")],
    ),
    _t(
        "calendar_located",
        ["Book {title} at {dt} in {loc}"],
        ['1. create_calendar_event(title={title}, start_time={dt}, location={loc})'],
        [("title", "event_title"), ("dt", "datetime"), ("loc", "location")],
    ),
    _t(
        "file_to_note",
        [
            "Read {path} and save the contents to a new note called {title}",
            "Copy {path} into a note titled {title}",
        ],
        ['1. read_file(path={path})', '2. create_note(title={title}, body=$1)'],
        [("path", "path"), ("title", "new_note_title")],
    ),
    _t(
        "summary_email",
        [
            "Summarize {path} and email the summary to {c1} with subject {subject}",
            "Send {c1} an email with subject {subject} containing a summary of {path}",
        ],
        [
            '1. summarize_document(path={path})',
            '2. get_email_address(name={c1})',
            '3. compose_new_email(recipients=[$2], subject={subject}, body=$1)',
        ],
        [("path", "path"), ("c1", "contact"), ("subject", "subject")],
    ),
    _t(
        "meeting_two",
        [
            "Create a meeting with {c1} and {c2} titled {title} on {dt}",
            "Create a calendar invite for {title} with {c1} and {c2} at {dt}",
            "Schedule {title} with {c1} and {c2} for {dt}",
        ],
        [
            '1. get_email_address(name={c1})',
            '2. get_email_address(name={c2})',
            '3. create_calendar_event(title={title}, start_time={dt}, attendees=[$1, $2])',
        ],
        [("c1", "contact"), ("c2", "contact"), ("title", "event_title"), ("dt", "datetime")],
    ),
    _t(
        "meeting_three",
        ["Set up {title} with {c1}, {c2}, and {c3} on {dt}"],
        [
            '1. get_email_address(name={c1})',
            '2. get_email_address(name={c2})',
            '3. get_email_address(name={c3})',
            '4. create_calendar_event(title={title}, start_time={dt}, attendees=[$1, $2, $3])',
        ],
        [("c1", "contact"), ("c2", "contact"), ("c3", "contact"), ("title", "event_title"), ("dt", "datetime")],
    ),
    _t(
        "sms_one",
        ["Text {c1} that {msg}", "Send {c1} a text saying {msg}", "Message {c1}: {msg}"],
        [
            '1. get_phone_number(name={c1})',
            '2. send_sms(recipients=[$1], message={msg})',
        ],
        [("c1", "contact"), ("msg", "message")],
    ),
    _t(
        "sms_two",
        ["Text {c1} and {c2} that {msg}", "Send a text to {c1} and {c2} saying {msg}"],
        [
            '1. get_phone_number(name={c1})',
            '2. get_phone_number(name={c2})',
            '3. send_sms(recipients=[$1, $2], message={msg})',
        ],
        [("c1", "contact"), ("c2", "contact"), ("msg", "message")],
    ),
    _t(
        "email_one",
        [
            "Email {c1} about {subject} saying {body}",
            "Send an email to {c1} with subject {subject} that says {body}",
        ],
        [
            '1. get_email_address(name={c1})',
            '2. compose_new_email(recipients=[$1], subject={subject}, body={body})',
        ],
        [("c1", "contact"), ("subject", "subject"), ("body", "body")],
    ),
    _t(
        "email_two",
        ["Email {c1} and {c2} about {subject}; say {body}"],
        [
            '1. get_email_address(name={c1})',
            '2. get_email_address(name={c2})',
            '3. compose_new_email(recipients=[$1, $2], subject={subject}, body={body})',
        ],
        [("c1", "contact"), ("c2", "contact"), ("subject", "subject"), ("body", "body")],
    ),
    _t(
        "reply",
        ["Reply to {c1}'s last email saying {body}", "Respond to the email from {c1} with {body}"],
        [
            '1. get_email_address(name={c1})',
            '2. reply_to_email(sender=$1, body={body})',
        ],
        [("c1", "contact"), ("body", "body")],
    ),
    _t(
        "forward",
        ["Forward the email from {c1} to {c2}", "Forward {c1}'s last email to {c2}"],
        [
            '1. get_email_address(name={c1})',
            '2. get_email_address(name={c2})',
            '3. forward_email(sender=$1, recipients=[$2])',
        ],
        [("c1", "contact"), ("c2", "contact")],
    ),
    _t(
        "zoom",
        ["Set up a Zoom meeting about {topic} at {dt}", "Create a Zoom link for {topic} on {dt}"],
        ['1. get_zoom_meeting_link(topic={topic}, start_time={dt})'],
        [("topic", "topic"), ("dt", "datetime")],
    ),
    _t(
        "zoom_timed",
        ["Schedule a {dur} minute Zoom about {topic} at {dt}"],
        ['1. get_zoom_meeting_link(topic={topic}, start_time={dt}, duration={dur})'],
        [("topic", "topic"), ("dt", "datetime"), ("dur", "duration")],
    ),
    _t(
        "zoom_email",
        ["Create a Zoom about {topic} at {dt} and email the link to {c1}"],
        [
            '1. get_zoom_meeting_link(topic={topic}, start_time={dt})',
            '2. get_email_address(name={c1})',
            '3. compose_new_email(recipients=[$2], subject={topic}, body=$1)',
        ],
        [("topic", "topic"), ("dt", "datetime"), ("c1", "contact")],
    ),
    _t(
        "append_note",
        [
            "Add {content} to my {note_title} note in {note_folder}",
            "Append {content} to the {note_title} note in my {note_folder} folder",
        ],
        ['1. append_note_content(title={note_title}, content={content}, folder={note_folder})'],
        [("note", "seeded_note"), ("content", "note_content")],
    ),
    _t(
        "file_to_existing_note",
        ["Append the contents of {path} to my {note_title} note in {note_folder}"],
        [
            '1. read_file(path={path})',
            '2. append_note_content(title={note_title}, content=$1, folder={note_folder})',
        ],
        [("path", "path"), ("note", "seeded_note")],
    ),
    _t(
        "zoom_calendar",
        ["Create a Zoom meeting about {topic} and add {title} to my calendar at {dt} with the link in the notes"],
        [
            '1. get_zoom_meeting_link(topic={topic}, start_time={dt})',
            '2. create_calendar_event(title={title}, start_time={dt}, notes=$1)',
        ],
        [("topic", "topic"), ("title", "event_title"), ("dt", "datetime")],
    ),
    _t(
        "summary_email_reminder",
        [
            "Summarize {path}, email it to {c1} and {c2} with subject {subject}, and remind me to follow up {due}",
        ],
        [
            '1. summarize_document(path={path})',
            '2. get_email_address(name={c1})',
            '3. get_email_address(name={c2})',
            '4. compose_new_email(recipients=[$2, $3], subject={subject}, body=$1)',
            '5. create_reminder(name={followup}, due_date={due})',
        ],
        [("path", "path"), ("c1", "contact"), ("c2", "contact"), ("subject", "subject"), ("due", "due")],
    ),
    _t(
        "directions_sms",
        ["Send {c1} directions to {dest}", "Text {c1} the directions to {dest}"],
        [
            '1. show_directions(destination={dest})',
            '2. get_phone_number(name={c1})',
            '3. send_sms(recipients=[$2], message=$1)',
        ],
        [("c1", "contact"), ("dest", "destination")],
    ),
    _t(
        "note_sms",
        ["Text my {note_title} note to {c1}"],
        [
            '1. open_note(title={note_title}, folder={note_folder})',
            '2. get_phone_number(name={c1})',
            '3. send_sms(recipients=[$2], message=$1)',
        ],
        [("note", "seeded_note"), ("c1", "contact")],
    ),
    _t(
        "file_email",
        ["Email the contents of {path} to {c1} with subject {subject}"],
        [
            '1. read_file(path={path})',
            '2. get_email_address(name={c1})',
            '3. compose_new_email(recipients=[$2], subject={subject}, body=$1)',
        ],
        [("path", "path"), ("c1", "contact"), ("subject", "subject")],
    ),
)


def _plan_shape(plan: Plan) -> str:
    """Classify a plan as single / chain / fanin / mixed from its DAG."""
    n = len(plan.tasks)
    if n == 1:
        return "single"
    graph = build_dag(plan)
    indeg = {t.index: 0 for t in plan.tasks}
    outdeg = {t.index: 0 for t in plan.tasks}
    for a, b in graph.edges:
        outdeg[a] += 1
        indeg[b] += 1
    sources = [i for i, d in indeg.items() if d == 0]
    sinks = [i for i, d in outdeg.items() if d == 0]
    if len(graph.edges) == n - 1 and all(d <= 1 for d in indeg.values()) and all(
        d <= 1 for d in outdeg.values()
    ):
        return "chain"
    if len(sources) >= 2 and len(sinks) == 1:
        return "fanin"
    return "mixed"


@dataclass(frozen=True)
class TemplateGrammar:
    """Scenario templates plus the entity pools they draw from."""

    templates: tuple[Template, ...] = TEMPLATES
    pools: dict = field(default_factory=lambda: dict(POOLS))
    version: int = GRAMMAR_VERSION

    def restricted(self, shape: str) -> "TemplateGrammar":
        """Keep only templates whose plans have the given shape."""
        keep = []
        for tpl in self.templates:
            probe = _instantiate(tpl, self.pools, random.Random(0))
            if _plan_shape(probe[1]) == shape:
                keep.append(tpl)
        if not keep:
            raise GrammarExhausted(f"no templates of shape {shape!r}")
        return replace(self, templates=tuple(keep))


def default_grammar() -> TemplateGrammar:
    return TemplateGrammar()


def _format_slot_value(value) -> str:
    if isinstance(value, int):
        return str(value)
    return serialize_value(StringLit(value))


def _instantiate(tpl: Template, pools: dict, rng: random.Random) -> tuple[str, Plan]:
    # Slots sharing a pool draw without replacement so paired entities differ.
    by_pool: dict[str, list[str]] = {}
    for key, pool_name in tpl.slots:
        by_pool.setdefault(pool_name, []).append(key)
    raw: dict[str, object] = {}
    for pool_name, keys in by_pool.items():
        pool = pools[pool_name]
        picks = rng.sample(pool, len(keys))
        for key, value in zip(keys, picks):
            raw[key] = value

    query_values: dict[str, str] = {}
    plan_values: dict[str, str] = {}
    for key, value in raw.items():
        if isinstance(value, tuple):  # (folder, title) pairs
            folder, title = value
            query_values[f"{key}_folder"] = folder
            query_values[f"{key}_title"] = title
            plan_values[f"{key}_folder"] = _format_slot_value(folder)
            plan_values[f"{key}_title"] = _format_slot_value(title)
        else:
            query_values[key] = str(value)
            plan_values[key] = _format_slot_value(value)
    if tpl.name == "summary_email_reminder":
        followup = f"follow up on {raw['subject']}"
        query_values["followup"] = followup
        plan_values["followup"] = _format_slot_value(followup)

    query = rng.choice(tpl.query_patterns).format(**query_values)
    plan_text = "\n".join(line.format(**plan_values) for line in tpl.plan_pattern)
    return query, parse_plan(plan_text)


def generate_example(
    grammar: TemplateGrammar,
    registry: ToolRegistry,
    rng_seed: int,
    available_tools_size: int = 8,
) -> DatasetExample:
    """Instantiate one example deterministically from ``rng_seed``.

    Negative tools are sampled uniformly from the unused portion of the
    registry until ``available_tools_size`` is reached; the result always
    passes :func:`sanity_check`.
    """
    if not grammar.templates:
        raise GrammarExhausted("grammar has no templates")
    rng = random.Random(rng_seed)
    tpl = rng.choice(grammar.templates)
    query, plan = _instantiate(tpl, grammar.pools, rng)
    gold_tools = sorted(set(plan.functions()))
    unused = [n for n in registry.names() if n not in gold_tools]
    n_negatives = max(1, min(available_tools_size - len(gold_tools), len(unused)))
    negatives = rng.sample(unused, n_negatives)
    chosen = set(gold_tools) | set(negatives)
    available = tuple(n for n in registry.names() if n in chosen)
    return DatasetExample(
        id=f"ex-{rng_seed:010d}",
        query=query,
        available_tools=available,
        gold_plan=plan,
    )


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 8000
    n_val: int = 100
    n_test: int = 100
    seed: int = 0
    available_tools_size: int = 8

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "seed": self.seed,
            "available_tools_size": self.available_tools_size,
            "grammar_version": GRAMMAR_VERSION,
        }


def _example_seed(master_seed: int, split: str, i: int, attempt: int) -> int:
    key = f"{master_seed}:{split}:{i}:{attempt}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def generate_dataset(
    config: DatasetConfig,
    registry: ToolRegistry,
    grammar: TemplateGrammar | None = None,
) -> dict[str, list[DatasetExample]]:
    """Generate disjoint train/validation/test splits.

    Train may repeat (query, plan) pairs naturally; validation and test never
    share a pair with any other split.
    """
    grammar = grammar or default_grammar()
    splits: dict[str, list[DatasetExample]] = {s: [] for s in SPLITS}
    sizes = {"train": config.n_train, "validation": config.n_val, "test": config.n_test}
    cross_split_pairs: set[tuple[str, str]] = set()

    for split in SPLITS:
        for i in range(sizes[split]):
            example = None
            for attempt in range(200):
                seed = _example_seed(config.seed, split, i, attempt)
                candidate = generate_example(
                    grammar, registry, seed, config.available_tools_size
                )
                pair = (candidate.query, candidate.plan_text)
                if split != "train" and pair in cross_split_pairs:
                    continue
                example = replace(
                    candidate, id=f"{split}-{i:06d}", split=split
                )
                break
            if example is None:
                raise GrammarExhausted(
                    f"could not place a fresh example in {split} after 200 attempts"
                )
            splits[split].append(example)
            cross_split_pairs.add((example.query, example.plan_text))
    return splits


# ---------------------------------------------------------------------------
# Sanity checks
# ---------------------------------------------------------------------------

INFEASIBLE_GRAPH = "InfeasibleGraph"
BAD_ARG_TYPE = "BadArgType"
TOOL_NOT_AVAILABLE = "ToolNotAvailable"
EMPTY_QUERY = "EmptyQuery"

_STRUCTURE_KINDS = {
    "DanglingRef",
    "DuplicateIndex",
    "GapInNumbering",
    "EmptyPlan",
}
_ARG_KINDS = {UNKNOWN_PARAM, MISSING_REQUIRED_PARAM, ARG_TYPE_MISMATCH}


@dataclass(frozen=True)
class CheckReport:
    ok: bool
    violations: tuple[str, ...]

    @classmethod
    def from_violations(cls, violations) -> "CheckReport":
        ordered = tuple(sorted(set(violations)))
        return cls(ok=not ordered, violations=ordered)


def sanity_check(example: DatasetExample, registry: ToolRegistry) -> CheckReport:
    """Run the feasibility/typing/availability checks on one example.

    Works on raw, hand-built examples as well: structural violations that the
    parser would normally reject (cycles, bad numbering) surface as
    ``InfeasibleGraph``.
    """
    violations: list[str] = []
    if not example.query.strip():
        violations.append(EMPTY_QUERY)

    plan = example.gold_plan
    report = validate_plan(plan, registry)
    for issue in report.issues:
        if issue.kind == UNKNOWN_FUNCTION:
            violations.append(UNKNOWN_FUNCTION)
        elif issue.kind in _ARG_KINDS:
            violations.append(BAD_ARG_TYPE)
        elif issue.kind in _STRUCTURE_KINDS:
            violations.append(INFEASIBLE_GRAPH)

    if plan.tasks:
        graph = build_dag(plan)
        if not check_acyclic(graph.edges, max(t.index for t in plan.tasks)):
            violations.append(INFEASIBLE_GRAPH)

    available = set(example.available_tools)
    if any(fn not in available for fn in plan.functions()):
        violations.append(TOOL_NOT_AVAILABLE)
    return CheckReport.from_violations(violations)


# ---------------------------------------------------------------------------
# Controlled corruption
# ---------------------------------------------------------------------------

RENAME_FUNCTION = "rename_function"
DROP_TASK = "drop_task"
RETARGET_PLACEHOLDER = "retarget_placeholder"
MANGLE_SYNTAX = "mangle_syntax"
CORRUPTION_KINDS = (RENAME_FUNCTION, DROP_TASK, RETARGET_PLACEHOLDER, MANGLE_SYNTAX)


def _strict_labels(plan: Plan):
    from .evaluator import MatchMode, node_label

    return {t.index: node_label(t, MatchMode.STRICT) for t in plan.tasks}


def _retarget_candidates(plan: Plan) -> list[tuple[int, str, int | None, int, int]]:
    """(task index, param, list position, old ref, new ref) rewrites guaranteed
    to break strict isomorphism.

    The old ref must occur exactly once in the task, so the old edge
    disappears; the new target must carry a different strict label. Then
    either the edge count shrinks (new target already referenced) or the
    edge label-pair multiset changes - both isomorphism invariants."""
    labels = _strict_labels(plan)
    out = []
    for t in plan.tasks:
        refs = t.placeholder_refs()
        for name, v in t.args:
            spots: list[tuple[int | None, int]] = []
            if isinstance(v, Placeholder):
                spots.append((None, v.task_index))
            elif isinstance(v, ListLit):
                spots.extend(
                    (pos, e.task_index)
                    for pos, e in enumerate(v.items)
                    if isinstance(e, Placeholder)
                )
            for pos, old in spots:
                if refs.count(old) != 1:
                    continue  # another reference keeps the old edge alive
                for new in range(1, t.index):
                    if new == old or labels[new] == labels[old]:
                        continue
                    out.append((t.index, name, pos, old, new))
    return out


def corrupt_example(example: DatasetExample, kind: str, rng_seed: int) -> str:
    """Produce plan text guaranteed not to score against ``example``'s gold.

    rename/drop break label or node-count equality under both match modes;
    retarget breaks strict-label edge structure (names-only equivalence is
    possible and checked per case by callers); mangle breaks parsing.
    """
    rng = random.Random(rng_seed)
    plan = example.gold_plan
    if kind == RENAME_FUNCTION:
        if not plan.tasks:
            raise NotApplicable(kind, "empty plan")
        t = rng.choice(plan.tasks)
        from .registry import canonical_catalog

        names = [n for n in canonical_catalog().names() if n != t.function]
        new_name = rng.choice(names)
        tasks = tuple(
            replace(x, function=new_name) if x.index == t.index else x
            for x in plan.tasks
        )
        return serialize_plan(Plan(tasks=tasks))

    if kind == DROP_TASK:
        if len(plan.tasks) < 2:
            raise NotApplicable(kind, "need at least two tasks")
        referenced = {r for t in plan.tasks for r in t.placeholder_refs()}
        sinks = [t.index for t in plan.tasks if t.index not in referenced]
        drop = rng.choice(sinks)
        tasks = []
        for t in plan.tasks:
            if t.index == drop:
                continue
            new_index = t.index - 1 if t.index > drop else t.index
            new_args = tuple(
                (n, _shift_refs(v, drop)) for n, v in t.args
            )
            tasks.append(replace(t, index=new_index, args=new_args))
        return serialize_plan(Plan(tasks=tuple(tasks)))

    if kind == RETARGET_PLACEHOLDER:
        candidates = _retarget_candidates(plan)
        if not candidates:
            raise NotApplicable(kind, "no safely retargetable placeholder")
        task_idx, param, pos, _, new_ref = rng.choice(candidates)
        tasks = []
        for t in plan.tasks:
            if t.index != task_idx:
                tasks.append(t)
                continue
            new_args = []
            for n, v in t.args:
                if n == param:
                    if pos is None:
                        v = Placeholder(new_ref)
                    else:
                        items = list(v.items)
                        items[pos] = Placeholder(new_ref)
                        v = ListLit(tuple(items))
                new_args.append((n, v))
            tasks.append(replace(t, args=tuple(new_args)))
        return serialize_plan(Plan(tasks=tuple(tasks)))

    if kind == MANGLE_SYNTAX:
        if not plan.tasks:
            raise NotApplicable(kind, "empty plan")
        text = serialize_plan(plan)
        lines = text.splitlines()
        row = rng.randrange(len(lines))
        style = rng.randrange(4)
        line = lines[row]
        if style == 0:
            line = line.replace("(", "", 1)
        elif style == 1:
            line = line.replace(".", ":", 1)
        elif style == 2:
            line = line.rstrip(")") + '"'
        else:
            line = "@@ " + line
        lines[row] = line
        return "\n".join(lines)

    raise NotApplicable(kind, f"unknown corruption kind {kind!r}")


def _shift_refs(v, dropped: int):
    if isinstance(v, Placeholder) and v.task_index > dropped:
        return Placeholder(v.task_index - 1)
    if isinstance(v, ListLit):
        return ListLit(tuple(_shift_refs(e, dropped) for e in v.items))
    return v


# ---------------------------------------------------------------------------
# In-context example retrieval
# ---------------------------------------------------------------------------

def select_in_context_examples(
    query: str, train_set, k: int
) -> list[DatasetExample]:
    """Top-k training examples by query feature similarity; ties break by id."""
    examples = list(train_set)
    if k > len(examples):
        raise DatasetError(f"k={k} exceeds train set size {len(examples)}")
    if k == 0:
        return []
    qv = featurize(query)
    scored = sorted(
        examples, key=lambda ex: (-cosine(qv, featurize(ex.query)), ex.id)
    )
    return scored[:k]


# ---------------------------------------------------------------------------
# LLM-backed generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RejectedCandidate:
    reason: str
    detail: str
    raw_response: str


GENERATION_PROMPT = """You write training examples for a device assistant that \
plans tool calls. Available tools:

{tools}

Write one realistic user request that needs one or more of these tools, then \
the exact plan that fulfils it. Number tasks from 1 and reference earlier \
results as $N. Respond in exactly this format:

QUERY: <the user request on one line>
PLAN:
<one numbered task per line>"""


def llm_generate_example(
    backend, registry: ToolRegistry, tool_subset, rng_seed: int
) -> DatasetExample | RejectedCandidate:
    """Ask a planner backend to synthesize a (query, plan) candidate.

    Every candidate passes through the same sanity checks as template
    generation; anything that fails comes back as a
    :class:`RejectedCandidate` and is never written to a split.
    """
    from .registry import render_descriptions

    subset = tuple(tool_subset)
    fragment = render_descriptions(registry, subset)
    prompt = GENERATION_PROMPT.format(tools=fragment.text)
    response = backend.complete_text(prompt)

    m = re.search(r"^QUERY:\s*(.+)$", response, re.MULTILINE)
    p = re.search(r"^PLAN:\s*$(.*)", response, re.MULTILINE | re.DOTALL)
    if not m or not p:
        return RejectedCandidate("malformed_response", "missing QUERY/PLAN markers", response)
    query = m.group(1).strip()
    plan_text = p.group(1).strip("\n")
    try:
        plan = parse_plan(plan_text)
    except PlanParseError as exc:
        return RejectedCandidate("parse_error", str(exc), response)
    available = tuple(n for n in registry.names() if n in set(subset))
    candidate = DatasetExample(
        id=f"llm-{rng_seed:010d}",
        query=query,
        available_tools=available,
        gold_plan=plan,
    )
    report = sanity_check(candidate, registry)
    if not report.ok:
        return RejectedCandidate(report.violations[0], ", ".join(report.violations), response)
    return candidate


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def save_jsonl(examples, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(ex.to_record(), sort_keys=True) + "\n")


def load_jsonl(
    path: str,
    registry: ToolRegistry | None = None,
    quarantine_path: str | None = None,
) -> tuple[list[DatasetExample], list[dict]]:
    """Read a dataset file; with a registry, sanity-check every record.

    Failing records are returned (and optionally written to a
    ``rejected.jsonl`` sidecar) instead of being admitted.
    """
    accepted: list[DatasetExample] = []
    rejected: list[dict] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ex = DatasetExample.from_record(rec)
            except (json.JSONDecodeError, KeyError, PlanParseError) as exc:
                rejected.append({"line": line_no, "reason": str(exc), "record": line})
                continue
            if registry is not None:
                report = sanity_check(ex, registry)
                if not report.ok:
                    rejected.append(
                        {
                            "line": line_no,
                            "reason": ",".join(report.violations),
                            "record": line,
                        }
                    )
                    continue
            accepted.append(ex)
    if quarantine_path and rejected:
        with open(quarantine_path, "w", encoding="utf-8") as f:
            for rec in rejected:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    return accepted, rejected
