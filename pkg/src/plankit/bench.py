"""Benchmark harness: one row per (retrieval method x backend).

Each row reports tool recall, average prompt tokens, planner latency
(mean/median), and the success rate of the completed plans under the
configured match mode. Output is machine-readable JSON plus a plain-text
table for report diffing.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field

from .evaluator import MatchMode, score_dataset
from .gateway import Backend, CompletionContext, build_planner_prompt, complete
from .registry import ToolRegistry
from .retriever import Retriever


class BenchError(Exception):
    pass


@dataclass(frozen=True)
class BenchRow:
    method: str
    backend: str
    tool_recall: float
    avg_prompt_tokens: float
    mean_latency_ms: float
    median_latency_ms: float
    success_rate: float

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "backend": self.backend,
            "tool_recall": self.tool_recall,
            "avg_prompt_tokens": self.avg_prompt_tokens,
            "mean_latency_ms": self.mean_latency_ms,
            "median_latency_ms": self.median_latency_ms,
            "success_rate": self.success_rate,
        }


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    match_mode: str = MatchMode.STRICT.value
    n_examples: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "match_mode": self.match_mode,
                "n_examples": self.n_examples,
                "rows": [r.to_json_dict() for r in self.rows],
            },
            indent=2,
        )

    def format_table(self) -> str:
        header = (
            f"{'Method':<14}{'Backend':<12}{'Tool Recall':>12}"
            f"{'Prompt Tokens':>15}{'Mean ms':>10}{'Median ms':>11}{'Success %':>11}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.method:<14}{r.backend:<12}{r.tool_recall:>12.3f}"
                f"{r.avg_prompt_tokens:>15.1f}{r.mean_latency_ms:>10.2f}"
                f"{r.median_latency_ms:>11.2f}{100.0 * r.success_rate:>11.2f}"
            )
        return "\n".join(lines)


def bench_run(
    dataset,
    retrievers: list[Retriever],
    backends: list[Backend],
    registry: ToolRegistry,
    mode: MatchMode = MatchMode.STRICT,
    repetitions: int = 1,
) -> BenchReport:
    """Run every (retriever, backend) pair over the dataset.

    Per-turn latency accounting is validated: measured phase times can never
    exceed the example's wall time.
    """
    examples = list(dataset)
    if not examples:
        raise BenchError("dataset is empty")
    report = BenchReport(match_mode=mode.value, n_examples=len(examples))
    for retriever in retrievers:
        for backend in backends:
            latencies: list[float] = []
            recall_sum = 0.0
            tokens_sum = 0
            predictions: list[str] = []
            for rep in range(max(1, repetitions)):
                for ex in examples:
                    wall0 = time.perf_counter()
                    r0 = time.perf_counter()
                    retrieval = retriever.retrieve(ex.query)
                    retrieval_s = time.perf_counter() - r0
                    prompt = build_planner_prompt(
                        ex.query, retrieval.selected, [], registry
                    )
                    b0 = time.perf_counter()
                    text = complete(backend, prompt, CompletionContext(example=ex))
                    backend_s = time.perf_counter() - b0
                    wall = time.perf_counter() - wall0
                    if retrieval_s + backend_s > wall + 1e-9:
                        raise BenchError("phase timings exceed wall time")
                    latencies.append(backend_s * 1000.0)
                    if rep == 0:
                        gold = set(ex.gold_plan.functions())
                        hit = len(gold & set(retrieval.selected))
                        recall_sum += hit / len(gold) if gold else 1.0
                        tokens_sum += prompt.tool_descriptions.token_count
                        predictions.append(text)
            metrics = score_dataset(predictions, examples, mode)
            report.rows.append(
                BenchRow(
                    method=retriever.name,
                    backend=backend.kind,
                    tool_recall=recall_sum / len(examples),
                    avg_prompt_tokens=tokens_sum / len(examples),
                    mean_latency_ms=statistics.fmean(latencies),
                    median_latency_ms=statistics.median(latencies),
                    success_rate=metrics.success_rate,
                )
            )
    return report
