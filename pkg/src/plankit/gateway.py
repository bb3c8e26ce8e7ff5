"""Planner backends behind one completion interface, plus prompt assembly.

Backends: a deterministic mock that answers with the gold plan, a noisy
mock that corrupts a seeded fraction of answers (for calibrating the
scorer), and an HTTP client speaking the de-facto OpenAI-compatible
chat-completion JSON so local inference servers work unmodified. The
gateway never interprets response content; parsing and validation belong
to the plan language.
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import dataclass

import requests

from .dataset import CORRUPTION_KINDS, DatasetExample, NotApplicable, corrupt_example
from .plan import serialize_plan
from .registry import PromptFragment, ToolRegistry, render_descriptions
from .retriever import cosine, featurize
from .tokens import count_tokens

MOCK_GOLD = "mock_gold"
MOCK_NOISY = "mock_noisy"
HTTP = "http"


class GatewayError(Exception):
    pass


class BackendUnavailable(GatewayError):
    pass


class CompletionTimeout(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


SYSTEM_INSTRUCTIONS = """You are a planning assistant for a personal device. \
Turn the user's request into a numbered plan of tool calls, one per line, in \
the form `N. tool_name(param=value, ...)`. Values are double-quoted strings, \
numbers, true/false, $K references to the result of task K, or [..] lists of \
those. Reference a result only from a strictly earlier task. Use only the \
tools listed below, set every required parameter, and emit nothing but the \
plan."""


@dataclass(frozen=True)
class Prompt:
    system_instructions: str
    tool_descriptions: PromptFragment
    icl_examples: tuple[tuple[str, str], ...]
    user_query: str
    token_count: int

    def render(self) -> str:
        return _render_prompt(
            self.system_instructions,
            self.tool_descriptions,
            self.icl_examples,
            self.user_query,
        )


def _render_prompt(system, tools, icl, query) -> str:
    sections = [system, "Tools:", tools.text]
    for ex_query, ex_plan in icl:
        sections.append(f"Example:\nQuery: {ex_query}\nPlan:\n{ex_plan}")
    sections.append(f"Query: {query}\nPlan:")
    return "\n\n".join(sections)


def build_planner_prompt(
    query: str,
    selected_tools,
    icl_examples,
    registry: ToolRegistry,
) -> Prompt:
    """Assemble the planner prompt in fixed section order.

    ``icl_examples`` are (query, plan text) pairs, typically retrieved from
    the training set by query similarity.
    """
    selected = tuple(selected_tools)
    if not selected:
        raise ValueError("selected_tools must be nonempty")
    fragment = render_descriptions(registry, selected)
    icl = tuple((q, p) for q, p in icl_examples)
    text = _render_prompt(SYSTEM_INSTRUCTIONS, fragment, icl, query)
    return Prompt(
        system_instructions=SYSTEM_INSTRUCTIONS,
        tool_descriptions=fragment,
        icl_examples=icl,
        user_query=query,
        token_count=count_tokens(text),
    )


@dataclass(frozen=True)
class CompletionContext:
    """Carries the gold example when the caller is iterating a dataset."""

    example: DatasetExample | None = None


@dataclass(frozen=True)
class BackendConfig:
    kind: str = MOCK_GOLD
    # mock_noisy
    corruption_rate: float = 0.0
    corruption_kinds: tuple[str, ...] = CORRUPTION_KINDS
    seed: int = 0
    # http
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "local-planner"
    timeout: float = 30.0
    max_retries: int = 2
    api_key_env: str = "PLANKIT_API_KEY"

    def __post_init__(self):
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must be in [0, 1]")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


class Backend:
    """Uniform completion surface; concrete backends override both methods."""

    kind = "base"

    def complete(self, prompt: Prompt, context: CompletionContext | None = None) -> str:
        raise NotImplementedError

    def complete_text(self, text: str) -> str:
        """Raw text completion used by generation pipelines."""
        raise NotImplementedError


class MockGoldBackend(Backend):
    """Returns the gold plan; a stand-in for a perfectly fine-tuned planner.

    With a context it answers from the provided example; otherwise it looks
    the query up in its reference dataset (exact match first, then nearest by
    query similarity).
    """

    kind = MOCK_GOLD

    def __init__(self, reference: list[DatasetExample] | None = None):
        self.reference = list(reference or [])
        self._by_query = {ex.query: ex for ex in self.reference}

    def _lookup(self, query: str) -> DatasetExample:
        ex = self._by_query.get(query)
        if ex is not None:
            return ex
        if not self.reference:
            raise BackendUnavailable(
                "mock backend has no reference dataset and no gold context"
            )
        qv = featurize(query)
        return max(
            self.reference, key=lambda ex: (cosine(qv, featurize(ex.query)), ex.id)
        )

    def resolve(self, prompt: Prompt, context: CompletionContext | None) -> DatasetExample:
        if context is not None and context.example is not None:
            return context.example
        return self._lookup(prompt.user_query)

    def complete(self, prompt: Prompt, context: CompletionContext | None = None) -> str:
        return serialize_plan(self.resolve(prompt, context).gold_plan)

    def complete_text(self, text: str) -> str:
        raise BackendUnavailable("mock_gold cannot answer free-form prompts")


class MockNoisyBackend(MockGoldBackend):
    """Gold plan with probability 1-p, a guaranteed-wrong corruption with p.

    Corruption decisions are keyed by example id, not call order, so repeated
    runs over a dataset are reproducible regardless of scheduling.
    """

    kind = MOCK_NOISY

    def __init__(
        self,
        reference: list[DatasetExample] | None = None,
        corruption_rate: float = 0.0,
        corruption_kinds=CORRUPTION_KINDS,
        seed: int = 0,
    ):
        super().__init__(reference)
        self.corruption_rate = corruption_rate
        self.corruption_kinds = tuple(corruption_kinds)
        self.seed = seed

    def complete(self, prompt: Prompt, context: CompletionContext | None = None) -> str:
        example = self.resolve(prompt, context)
        rng = random.Random(f"{self.seed}:{example.id}")
        if rng.random() >= self.corruption_rate:
            return serialize_plan(example.gold_plan)
        kinds = list(self.corruption_kinds)
        rng.shuffle(kinds)
        for kind in kinds:
            try:
                return corrupt_example(example, kind, rng.randrange(2**32))
            except NotApplicable:
                continue
        # mangle_syntax applies to any nonempty plan; unreachable for valid data
        raise BackendUnavailable(f"no applicable corruption for {example.id}")


class ScriptedBackend(Backend):
    """Returns canned text; used to exercise generation and error paths."""

    kind = "scripted"

    def __init__(self, responses):
        self.responses = [responses] if isinstance(responses, str) else list(responses)
        self.calls = 0

    def _next(self) -> str:
        text = self.responses[min(self.calls, len(self.responses) - 1)]
        self.calls += 1
        return text

    def complete(self, prompt: Prompt, context: CompletionContext | None = None) -> str:
        return self._next()

    def complete_text(self, text: str) -> str:
        return self._next()


class HttpBackend(Backend):
    """OpenAI-compatible chat-completion client.

    Retries transport errors (connection failures, timeouts) at most
    ``max_retries`` times with exponential backoff; malformed bodies are
    never retried.
    """

    kind = HTTP

    def __init__(self, config: BackendConfig):
        self.config = config

    def _request_body(self, text: str) -> dict:
        return {
            "model": self.config.model,
            "messages": [{"role": "user", "content": text}],
            "temperature": 0,
        }

    def complete_text(self, text: str) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = self._request_body(text)
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(min(0.25 * (2 ** (attempt - 1)), 2.0))
            try:
                resp = requests.post(
                    cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout
                )
            except requests.Timeout as exc:
                last = CompletionTimeout(str(exc))
                continue
            except requests.RequestException as exc:
                last = BackendUnavailable(str(exc))
                continue
            if resp.status_code != 200:
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                doc = resp.json()
                return doc["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"bad completion body: {exc}") from exc
        assert last is not None
        raise last

    def complete(self, prompt: Prompt, context: CompletionContext | None = None) -> str:
        return self.complete_text(prompt.render())


def make_backend(
    config: BackendConfig, reference: list[DatasetExample] | None = None
) -> Backend:
    if config.kind == MOCK_GOLD:
        return MockGoldBackend(reference)
    if config.kind == MOCK_NOISY:
        return MockNoisyBackend(
            reference,
            corruption_rate=config.corruption_rate,
            corruption_kinds=config.corruption_kinds,
            seed=config.seed,
        )
    if config.kind == HTTP:
        return HttpBackend(config)
    raise ValueError(f"unknown backend kind {config.kind!r}")


def complete(
    backend: Backend, prompt: Prompt, context: CompletionContext | None = None
) -> str:
    """Run one planner completion; raises gateway errors for the caller to record."""
    return backend.complete(prompt, context)


def timed_complete(
    backend: Backend, prompt: Prompt, context: CompletionContext | None = None
) -> tuple[str, float]:
    t0 = time.perf_counter()
    text = backend.complete(prompt, context)
    return text, time.perf_counter() - t0


def measure_latency(
    backend: Backend, prompt: Prompt, context: CompletionContext | None = None
) -> float:
    """Wall-clock seconds from request issue to full text received."""
    _, elapsed = timed_complete(backend, prompt, context)
    return elapsed
