"""Tool catalog and simulated device backing the assistant's 16 tools.

The canonical catalog is loaded from ``data/registry.json``, which is the
single source of truth for tool names, signatures, and descriptions; its
ordering fixes the output dimension of the tool classifier. Tool
implementations run against an in-memory :class:`DeviceState` and never
touch the real OS.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Iterator

from .tokens import count_tokens

VALUE_TYPES = ("string", "integer", "number", "boolean", "list-of-string")

_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")


class RegistryError(Exception):
    """Base class for registry errors."""


class InvalidSpec(RegistryError):
    """A tool spec violates its structural invariants."""


class DuplicateName(RegistryError):
    """A tool with this name is already registered."""


class UnknownTool(RegistryError):
    """No tool with this name is registered."""


class ArgTypeMismatch(RegistryError):
    """A concrete argument does not match the declared parameter type."""


class SimulatedFailure(RegistryError):
    """A tool's precondition on device state failed (e.g. contact not found).

    Carries a machine-readable ``reason`` so executors can surface partial
    traces instead of crashing.
    """

    def __init__(self, tool: str, reason: str):
        super().__init__(f"{tool}: {reason}")
        self.tool = tool
        self.reason = reason


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool


@dataclass(frozen=True)
class ToolSpec:
    """Name, typed parameters, and prose description of one tool."""

    name: str
    description: str
    params: tuple[ParamSpec, ...]
    returns: str

    def check(self) -> None:
        if not _NAME_RE.match(self.name):
            raise InvalidSpec(f"bad tool name {self.name!r}")
        seen = set()
        for p in self.params:
            if p.name in seen:
                raise InvalidSpec(f"{self.name}: repeated param {p.name!r}")
            seen.add(p.name)
            if p.type not in VALUE_TYPES:
                raise InvalidSpec(f"{self.name}: bad param type {p.type!r}")
        if self.returns not in VALUE_TYPES:
            raise InvalidSpec(f"{self.name}: bad return type {self.returns!r}")

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def signature(self) -> str:
        parts = []
        for p in self.params:
            mark = "" if p.required else "?"
            parts.append(f"{p.name}{mark}: {p.type}")
        return f"{self.name}({', '.join(parts)}) -> {self.returns}"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "params": [
                {"name": p.name, "type": p.type, "required": p.required}
                for p in self.params
            ],
            "returns": self.returns,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToolSpec":
        spec = cls(
            name=d["name"],
            description=d["description"],
            params=tuple(
                ParamSpec(p["name"], p["type"], bool(p["required"]))
                for p in d["params"]
            ),
            returns=d["returns"],
        )
        spec.check()
        return spec


@dataclass(frozen=True)
class ToolRegistry:
    """Ordered, immutable collection of tool specs.

    The position of each tool is stable and defines the classifier's output
    dimension order.
    """

    tools: tuple[ToolSpec, ...]
    _index: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {t.name: i for i, t in enumerate(self.tools)}
        )

    def __len__(self) -> int:
        return len(self.tools)

    def __iter__(self) -> Iterator[ToolSpec]:
        return iter(self.tools)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def names(self) -> list[str]:
        return [t.name for t in self.tools]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownTool(name) from None

    def get(self, name: str) -> ToolSpec:
        return self.tools[self.index_of(name)]

    def to_json(self) -> str:
        return json.dumps([t.to_dict() for t in self.tools], indent=2)

    def fingerprint(self) -> str:
        """Stable hash of the registry contents (not file formatting)."""
        canon = json.dumps(
            [t.to_dict() for t in self.tools], sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_specs(cls, specs: list[ToolSpec] | tuple[ToolSpec, ...]) -> "ToolRegistry":
        reg = cls(tools=())
        for s in specs:
            reg = register_tool(reg, s)
        return reg

    @classmethod
    def from_json(cls, text: str) -> "ToolRegistry":
        return cls.from_specs([ToolSpec.from_dict(d) for d in json.loads(text)])


def register_tool(registry: ToolRegistry, spec: ToolSpec) -> ToolRegistry:
    """Return a new registry with ``spec`` appended; the input is unchanged."""
    spec.check()
    if spec.name in registry:
        raise DuplicateName(spec.name)
    return ToolRegistry(tools=registry.tools + (spec,))


_canonical: ToolRegistry | None = None


def canonical_catalog() -> ToolRegistry:
    """The fixed 16-tool catalog, loaded once from the packaged registry file."""
    global _canonical
    if _canonical is None:
        text = resources.files("plankit.data").joinpath("registry.json").read_text()
        reg = ToolRegistry.from_json(text)
        _canonical = reg
    return _canonical


def load_registry(path: str | None) -> ToolRegistry:
    """Load a registry file, or the canonical catalog when ``path`` is None."""
    if path is None:
        return canonical_catalog()
    with open(path, "r", encoding="utf-8") as f:
        return ToolRegistry.from_json(f.read())


# Category of each canonical tool; used for catalog reporting, not stored in
# the registry file schema.
TOOL_CATEGORIES = {
    "compose_new_email": "Email",
    "reply_to_email": "Email",
    "forward_email": "Email",
    "get_email_address": "Contacts",
    "get_phone_number": "Contacts",
    "send_sms": "SMS",
    "create_calendar_event": "Calendar",
    "create_note": "Notes",
    "open_note": "Notes",
    "append_note_content": "Notes",
    "create_reminder": "Reminders",
    "open_file": "Files",
    "read_file": "Files",
    "summarize_document": "Files",
    "get_zoom_meeting_link": "Zoom",
    "show_directions": "Directions",
}

# Tools that never modify device state.
READONLY_TOOLS = frozenset(
    {
        "get_email_address",
        "get_phone_number",
        "open_note",
        "open_file",
        "read_file",
        "summarize_document",
        "show_directions",
    }
)


@dataclass(frozen=True)
class PromptFragment:
    text: str
    token_count: int


def render_descriptions(registry: ToolRegistry, subset) -> PromptFragment:
    """Render one `signature + description` entry per selected tool.

    Entries appear in registry order regardless of ``subset`` ordering, so
    the rendered block is deterministic for a given selection.
    """
    chosen = set(subset)
    for name in chosen:
        if name not in registry:
            raise UnknownTool(name)
    lines = []
    for spec in registry:
        if spec.name in chosen:
            lines.append(f"- {spec.signature()}")
            lines.append(f"  {spec.description}")
    text = "\n".join(lines)
    return PromptFragment(text=text, token_count=count_tokens(text))


# ---------------------------------------------------------------------------
# Simulated device
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToolResult:
    """Typed tool return value plus its canonical string rendering."""

    value: Any
    display_string: str

    @classmethod
    def of(cls, value: Any) -> "ToolResult":
        return cls(value=value, display_string=display_value(value))


def display_value(value: Any) -> str:
    """Canonical rendering used when substituting results into string slots."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        return str(value)
    if isinstance(value, list):
        return ", ".join(display_value(v) for v in value)
    raise TypeError(f"unsupported result value {value!r}")


@dataclass
class DeviceState:
    """In-memory stand-in for the device the tools operate on.

    Transitions are value-to-value: tool execution returns a new state and
    never mutates its input. ``calendar``, ``reminders``, ``meetings`` and the
    two sent-logs are append-only and compared as multisets by
    :meth:`equivalent`, since parallel schedules may permute independent
    appends; everything else is compared exactly.
    """

    contacts: dict[str, dict[str, str]] = field(default_factory=dict)
    calendar: list[dict] = field(default_factory=list)
    notes: dict[tuple[str, str], str] = field(default_factory=dict)
    reminders: list[dict] = field(default_factory=list)
    virtual_files: dict[str, str] = field(default_factory=dict)
    sent_email_log: list[dict] = field(default_factory=list)
    sent_sms_log: list[dict] = field(default_factory=list)
    meetings: list[dict] = field(default_factory=list)

    _APPEND_LOGS = ("calendar", "reminders", "meetings", "sent_email_log", "sent_sms_log")

    def copy(self) -> "DeviceState":
        return DeviceState(
            contacts={k: dict(v) for k, v in self.contacts.items()},
            calendar=[dict(e) for e in self.calendar],
            notes=dict(self.notes),
            reminders=[dict(e) for e in self.reminders],
            virtual_files=dict(self.virtual_files),
            sent_email_log=[dict(e) for e in self.sent_email_log],
            sent_sms_log=[dict(e) for e in self.sent_sms_log],
            meetings=[dict(e) for e in self.meetings],
        )

    def to_json(self) -> str:
        """Canonical serialization; byte-identical for equal states."""
        doc = {
            "contacts": {k: self.contacts[k] for k in sorted(self.contacts)},
            "calendar": self.calendar,
            "notes": [
                {"folder": f, "title": t, "body": b}
                for (f, t), b in sorted(self.notes.items())
            ],
            "reminders": self.reminders,
            "virtual_files": {
                k: self.virtual_files[k] for k in sorted(self.virtual_files)
            },
            "sent_email_log": self.sent_email_log,
            "sent_sms_log": self.sent_sms_log,
            "meetings": self.meetings,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def _log_multiset(self, name: str):
        entries = getattr(self, name)
        return sorted(json.dumps(e, sort_keys=True) for e in entries)

    def equivalent(self, other: "DeviceState") -> bool:
        """Equality with append-only collections compared order-insensitively."""
        if (
            self.contacts != other.contacts
            or self.notes != other.notes
            or self.virtual_files != other.virtual_files
        ):
            return False
        return all(
            self._log_multiset(log) == other._log_multiset(log)
            for log in self._APPEND_LOGS
        )


# Fixed entity pools. "Sid" and "Lutfi" are golden-test fixtures and are
# present in every seeded state with stable email addresses.
CORE_CONTACTS = {
    "Sid": {"email": "sid@example.com", "phone": "+1-555-0100"},
    "Lutfi": {"email": "lutfi@example.com", "phone": "+1-555-0101"},
}

CONTACT_POOL = [
    "Amir", "Nina", "Sehoon", "Michael", "Sophia", "Hiroki", "Daniel",
    "Emma", "Olivia", "Liam", "Noah", "Ava", "Ethan", "Mia", "Lucas",
    "Zoe", "Hannah", "Felix", "Priya", "Diego", "Clara", "Tomas",
]

FILE_POOL = [
    "/docs/quarterly_report.txt",
    "/docs/meeting_minutes.txt",
    "/docs/budget_2025.txt",
    "/docs/research_notes.txt",
    "/docs/travel_itinerary.txt",
    "/docs/project_plan.txt",
    "/docs/grocery_list.txt",
    "/docs/book_draft.txt",
    "/docs/invoice_march.txt",
    "/docs/resume.txt",
    "/docs/lecture_outline.txt",
    "/docs/recipe_collection.txt",
]

NOTE_POOL = [
    ("Notes", "Ideas"),
    ("Notes", "Groceries"),
    ("Work", "Standup"),
    ("Work", "Roadmap"),
    ("Personal", "Journal"),
    ("Personal", "Books"),
]

_FILE_SENTENCES = [
    "The quarterly numbers improved across every region.",
    "Action items were assigned during the morning session.",
    "Several milestones slipped by one week.",
    "The committee approved the revised draft.",
    "Costs remained flat compared with the previous cycle.",
    "Attendance was higher than expected.",
    "The prototype passed all integration checks.",
    "Further review is scheduled for next month.",
]


def seed_device_state(seed: int) -> DeviceState:
    """Deterministically populate a device state from the fixed entity pools.

    Every seed yields all pool contacts, files, and notes (so generated plans
    always find their entities), with seed-dependent phone numbers, file
    contents, and note bodies.
    """
    rng = random.Random(seed)
    state = DeviceState()
    for name, entry in CORE_CONTACTS.items():
        state.contacts[name] = dict(entry)
    for name in CONTACT_POOL:
        phone = "+1-555-" + "".join(str(rng.randrange(10)) for _ in range(4))
        domain = rng.choice(["example.com", "example.org", "mail.example.net"])
        state.contacts[name] = {"email": f"{name.lower()}@{domain}", "phone": phone}
    for path in FILE_POOL:
        k = rng.randrange(2, 5)
        body = " ".join(rng.choice(_FILE_SENTENCES) for _ in range(k))
        state.virtual_files[path] = body
    for folder, title in NOTE_POOL:
        state.notes[(folder, title)] = rng.choice(_FILE_SENTENCES)
    return state


# ---------------------------------------------------------------------------
# Tool implementations
# ---------------------------------------------------------------------------

def _check_arg_types(spec: ToolSpec, args: dict[str, Any]) -> None:
    for key in args:
        if spec.param(key) is None:
            raise ArgTypeMismatch(f"{spec.name}: unknown param {key!r}")
    for p in spec.params:
        if p.name not in args:
            if p.required:
                raise ArgTypeMismatch(f"{spec.name}: missing required param {p.name!r}")
            continue
        v = args[p.name]
        ok = {
            "string": lambda v: isinstance(v, str),
            "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
            "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
            "boolean": lambda v: isinstance(v, bool),
            "list-of-string": lambda v: isinstance(v, list)
            and all(isinstance(e, str) for e in v),
        }[p.type](v)
        if not ok:
            raise ArgTypeMismatch(
                f"{spec.name}: param {p.name!r} expects {p.type}, got {type(v).__name__}"
            )


def _contact_field(state: DeviceState, tool: str, name: str, field_name: str) -> str:
    entry = state.contacts.get(name)
    if entry is None:
        raise SimulatedFailure(tool, "contact_not_found")
    return entry[field_name]


def _impl_compose_new_email(args, state):
    new = state.copy()
    new.sent_email_log.append(
        {
            "kind": "new",
            "to": list(args["recipients"]),
            "subject": args["subject"],
            "body": args["body"],
            "attachments": list(args.get("attachments", [])),
        }
    )
    return f"Email sent to {', '.join(args['recipients'])}", new


def _impl_reply_to_email(args, state):
    new = state.copy()
    new.sent_email_log.append(
        {"kind": "reply", "to": args["sender"], "body": args["body"]}
    )
    return f"Reply sent to {args['sender']}", new


def _impl_forward_email(args, state):
    new = state.copy()
    new.sent_email_log.append(
        {"kind": "forward", "from": args["sender"], "to": list(args["recipients"])}
    )
    return f"Email from {args['sender']} forwarded to {', '.join(args['recipients'])}", new


def _impl_get_email_address(args, state):
    return _contact_field(state, "get_email_address", args["name"], "email"), state


def _impl_get_phone_number(args, state):
    return _contact_field(state, "get_phone_number", args["name"], "phone"), state


def _impl_send_sms(args, state):
    new = state.copy()
    new.sent_sms_log.append(
        {"to": list(args["recipients"]), "message": args["message"]}
    )
    return f"Message sent to {', '.join(args['recipients'])}", new


def _impl_create_calendar_event(args, state):
    new = state.copy()
    new.calendar.append(
        {
            "title": args["title"],
            "start_time": args.get("start_time", ""),
            "end_time": args.get("end_time", ""),
            "location": args.get("location", ""),
            "attendees": list(args.get("attendees", [])),
            "notes": args.get("notes", ""),
        }
    )
    return f"Event '{args['title']}' created", new


def _impl_create_note(args, state):
    new = state.copy()
    folder = args.get("folder", "Notes")
    new.notes[(folder, args["title"])] = args["body"]
    return f"Note '{args['title']}' created in {folder}", new


def _note_key(state: DeviceState, tool: str, args) -> tuple[str, str]:
    folder = args.get("folder", "Notes")
    key = (folder, args["title"])
    if key not in state.notes:
        raise SimulatedFailure(tool, "note_not_found")
    return key


def _impl_open_note(args, state):
    key = _note_key(state, "open_note", args)
    return state.notes[key], state


def _impl_append_note_content(args, state):
    key = _note_key(state, "append_note_content", args)
    new = state.copy()
    new.notes[key] = new.notes[key] + "\n" + args["content"]
    return f"Appended to note '{args['title']}'", new


def _impl_create_reminder(args, state):
    new = state.copy()
    new.reminders.append(
        {
            "name": args["name"],
            "due_date": args.get("due_date", ""),
            "notes": args.get("notes", ""),
        }
    )
    return f"Reminder '{args['name']}' created", new


def _file_content(state: DeviceState, tool: str, path: str) -> str:
    if path not in state.virtual_files:
        raise SimulatedFailure(tool, "file_not_found")
    return state.virtual_files[path]


def _impl_open_file(args, state):
    _file_content(state, "open_file", args["path"])
    return f"Opened {args['path']}", state


def _impl_read_file(args, state):
    return _file_content(state, "read_file", args["path"]), state


def _impl_summarize_document(args, state):
    content = _file_content(state, "summarize_document", args["path"])
    first = content.split(".")[0].strip()
    return f"Summary of {args['path']}: {first}.", state


def _impl_get_zoom_meeting_link(args, state):
    # Link is a pure function of the arguments so that schedules which
    # permute independent tasks still produce identical per-task results.
    key = json.dumps(
        {
            "topic": args["topic"],
            "start_time": args.get("start_time", ""),
            "duration": args.get("duration", 30),
        },
        sort_keys=True,
    )
    code = int.from_bytes(hashlib.sha256(key.encode()).digest()[:5], "big")
    link = f"https://zoom.example/j/{code:012d}"
    new = state.copy()
    new.meetings.append(
        {
            "topic": args["topic"],
            "start_time": args.get("start_time", ""),
            "duration": args.get("duration", 30),
            "invitees": list(args.get("invitees", [])),
            "link": link,
        }
    )
    return link, new


def _impl_show_directions(args, state):
    origin = args.get("origin", "Current Location")
    transport = args.get("transport", "driving")
    return f"Directions from {origin} to {args['destination']} by {transport}", state


_IMPLS: dict[str, Callable[[dict, DeviceState], tuple[Any, DeviceState]]] = {
    "compose_new_email": _impl_compose_new_email,
    "reply_to_email": _impl_reply_to_email,
    "forward_email": _impl_forward_email,
    "get_email_address": _impl_get_email_address,
    "get_phone_number": _impl_get_phone_number,
    "send_sms": _impl_send_sms,
    "create_calendar_event": _impl_create_calendar_event,
    "create_note": _impl_create_note,
    "open_note": _impl_open_note,
    "append_note_content": _impl_append_note_content,
    "create_reminder": _impl_create_reminder,
    "open_file": _impl_open_file,
    "read_file": _impl_read_file,
    "summarize_document": _impl_summarize_document,
    "get_zoom_meeting_link": _impl_get_zoom_meeting_link,
    "show_directions": _impl_show_directions,
}


def execute_simulated(
    registry: ToolRegistry,
    name: str,
    args: dict[str, Any],
    state: DeviceState,
    impls: dict[str, Callable] | None = None,
) -> tuple[ToolResult, DeviceState]:
    """Run one tool against ``state`` and return (result, new state).

    Pure: the same (args, state) always yields the same output, and read-only
    tools return ``state`` unchanged. Custom registries may pass their own
    ``impls`` table keyed by tool name.
    """
    spec = registry.get(name)
    _check_arg_types(spec, args)
    table = _IMPLS if impls is None else impls
    impl = table.get(name)
    if impl is None:
        raise UnknownTool(f"no implementation for {name!r}")
    value, new_state = impl(args, state)
    return ToolResult.of(value), new_state
