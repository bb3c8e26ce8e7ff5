"""Tool retrieval: pick the tool subset worth putting in the planner prompt.

Two methods are provided behind one result shape: a top-k baseline ranking
tools by cosine similarity between query and description features, and a
per-tool one-vs-rest logistic classifier over hashed lexical features with
a probability threshold (default 50%). The classifier learns that queries
need auxiliary tools (e.g. contact lookups for a calendar invite) whose
descriptions share no words with the query, which is exactly where the
similarity baseline misses.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .registry import ToolRegistry, render_descriptions

FEATURE_DIM = 2**18

METHOD_CLASSIFIER = "classifier_threshold"
METHOD_TOPK = "topk_similarity"
METHOD_ALL = "all_tools"


class RetrieverError(Exception):
    pass


class EmptyDataset(RetrieverError):
    pass


class RegistryMismatch(RetrieverError):
    pass


_WORD_RE = re.compile(r"[a-z0-9']+")


def _hash_token(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % FEATURE_DIM


def featurize(text: str) -> dict[int, float]:
    """Hashed counts of word unigrams, bigrams, and character trigrams.

    Deterministic across runs and processes; case-insensitive; the empty
    string maps to the zero vector.
    """
    vec: dict[int, float] = {}

    def add(token: str) -> None:
        fid = _hash_token(token)
        vec[fid] = vec.get(fid, 0.0) + 1.0

    lowered = re.sub(r"\s+", " ", text.lower()).strip()
    if not lowered:
        return vec
    words = _WORD_RE.findall(lowered)
    for w in words:
        add("w:" + w)
    for a, b in zip(words, words[1:]):
        add(f"b:{a} {b}")
    padded = f"^{lowered}$"
    if len(padded) <= 3:
        add("c:" + padded)
    else:
        for i in range(len(padded) - 2):
            add("c:" + padded[i : i + 3])
    return vec


def _norm(vec: dict[int, float]) -> float:
    return math.sqrt(sum(w * w for w in vec.values()))


def cosine(a: dict[int, float], b: dict[int, float]) -> float:
    if not a or not b:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(w * b[f] for f, w in a.items() if f in b)
    na, nb = _norm(a), _norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


@dataclass(frozen=True)
class RetrievalResult:
    probabilities: dict[str, float]
    selected: tuple[str, ...]
    method: str
    fallback_used: bool = False

    def to_json_dict(self) -> dict:
        return {
            "probabilities": self.probabilities,
            "selected": list(self.selected),
            "method": self.method,
            "fallback_used": self.fallback_used,
        }


@dataclass
class TrainConfig:
    epochs: int = 4
    learning_rate: float = 0.5
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
        }


MODEL_FORMAT_VERSION = 1


@dataclass
class ClassifierModel:
    """Per-tool logistic weights over the hashed feature space."""

    tool_names: list[str]
    weights: np.ndarray  # (n_tools, FEATURE_DIM)
    bias: np.ndarray  # (n_tools,)
    registry_fingerprint: str
    config: TrainConfig
    epoch_losses: list[float] = field(default_factory=list)

    def check_registry(self, registry: ToolRegistry) -> None:
        if registry.fingerprint() != self.registry_fingerprint:
            raise RegistryMismatch(
                "model was trained against a different tool registry"
            )
        if registry.names() != self.tool_names:
            raise RegistryMismatch("tool ordering differs from training registry")

    def save(self, path: str) -> None:
        """Deterministic text format: JSON header + base64 weight blocks."""
        nz_cols = np.flatnonzero(np.any(self.weights != 0.0, axis=0))
        block = self.weights[:, nz_cols]
        header = {
            "format_version": MODEL_FORMAT_VERSION,
            "feature_dim": FEATURE_DIM,
            "tool_names": self.tool_names,
            "registry_fingerprint": self.registry_fingerprint,
            "config": self.config.to_dict(),
            "epoch_losses": self.epoch_losses,
            "n_cols": int(nz_cols.size),
        }
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(header, sort_keys=True) + "\n")
            f.write(base64.b64encode(nz_cols.astype("<i8").tobytes()).decode() + "\n")
            f.write(base64.b64encode(block.astype("<f8").tobytes()).decode() + "\n")
            f.write(base64.b64encode(self.bias.astype("<f8").tobytes()).decode() + "\n")

    @classmethod
    def load(cls, path: str) -> "ClassifierModel":
        with open(path, "r", encoding="utf-8") as f:
            header = json.loads(f.readline())
            cols = np.frombuffer(base64.b64decode(f.readline()), dtype="<i8")
            n_tools = len(header["tool_names"])
            block = np.frombuffer(base64.b64decode(f.readline()), dtype="<f8").reshape(
                n_tools, header["n_cols"]
            )
            bias = np.frombuffer(base64.b64decode(f.readline()), dtype="<f8")
        weights = np.zeros((n_tools, header["feature_dim"]))
        weights[:, cols] = block
        cfg = TrainConfig(**header["config"])
        return cls(
            tool_names=list(header["tool_names"]),
            weights=weights,
            bias=bias.copy(),
            registry_fingerprint=header["registry_fingerprint"],
            config=cfg,
            epoch_losses=list(header["epoch_losses"]),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30.0, 30.0)))


def train_classifier(
    train_set, registry: ToolRegistry, config: TrainConfig | None = None
) -> ClassifierModel:
    """Train one-vs-rest logistic models with seeded SGD.

    Targets are per-tool membership in each example's gold plan. Training is
    single-threaded and a pure function of (data, registry, seed); per-epoch
    mean log-loss is recorded on the model.
    """
    config = config or TrainConfig()
    examples = list(train_set)
    if not examples:
        raise EmptyDataset("train set is empty")
    names = registry.names()
    name_to_idx = {n: i for i, n in enumerate(names)}
    n_tools = len(names)

    feats: list[tuple[np.ndarray, np.ndarray]] = []
    targets = np.zeros((len(examples), n_tools))
    for row, ex in enumerate(examples):
        vec = featurize(ex.query)
        idx = np.fromiter(sorted(vec), dtype=np.int64, count=len(vec))
        vals = np.array([vec[i] for i in sorted(vec)])
        norm = np.linalg.norm(vals)
        if norm > 0:
            vals = vals / norm
        feats.append((idx, vals))
        for fn in set(ex.gold_plan.functions()):
            if fn not in name_to_idx:
                raise RegistryMismatch(f"gold plan uses unregistered tool {fn!r}")
            targets[row, name_to_idx[fn]] = 1.0

    rng = np.random.default_rng(config.seed)
    weights = np.zeros((n_tools, FEATURE_DIM))
    bias = np.zeros(n_tools)
    losses: list[float] = []
    order = np.arange(len(examples))
    for _ in range(config.epochs):
        rng.shuffle(order)
        total = 0.0
        for row in order:
            idx, vals = feats[row]
            y = targets[row]
            z = weights[:, idx] @ vals + bias
            p = _sigmoid(z)
            eps = 1e-12
            total += float(-np.sum(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
            grad = p - y
            weights[:, idx] -= config.learning_rate * np.outer(grad, vals)
            bias -= config.learning_rate * grad
        losses.append(total / len(examples))

    return ClassifierModel(
        tool_names=list(names),
        weights=weights,
        bias=bias,
        registry_fingerprint=registry.fingerprint(),
        config=config,
        epoch_losses=losses,
    )


def predict_probabilities(model: ClassifierModel, query: str) -> dict[str, float]:
    vec = featurize(query)
    if vec:
        idx = np.fromiter(sorted(vec), dtype=np.int64, count=len(vec))
        vals = np.array([vec[i] for i in sorted(vec)])
        norm = np.linalg.norm(vals)
        if norm > 0:
            vals = vals / norm
        z = model.weights[:, idx] @ vals + model.bias
    else:
        z = model.bias.copy()
    probs = _sigmoid(z)
    return {name: float(p) for name, p in zip(model.tool_names, probs)}


def predict_tools(
    model: ClassifierModel,
    query: str,
    registry: ToolRegistry,
    threshold: float = 0.5,
) -> RetrievalResult:
    """Select every tool whose probability exceeds ``threshold``.

    An empty selection falls back to the single most probable tool, flagged
    on the result, since an agent with zero tools cannot act.
    """
    model.check_registry(registry)
    probs = predict_probabilities(model, query)
    selected = tuple(n for n in model.tool_names if probs[n] > threshold)
    fallback = False
    if not selected:
        best = max(model.tool_names, key=lambda n: (probs[n], -model.tool_names.index(n)))
        selected = (best,)
        fallback = True
    return RetrievalResult(
        probabilities=probs,
        selected=selected,
        method=METHOD_CLASSIFIER,
        fallback_used=fallback,
    )


def tool_text(spec) -> str:
    return spec.name.replace("_", " ") + " " + spec.description


def basic_rag_rank(query: str, registry: ToolRegistry, k: int) -> RetrievalResult:
    """Baseline: top-k tools by query/description cosine similarity.

    Ties break toward earlier registry positions so rankings are stable.
    """
    if not 1 <= k <= len(registry):
        raise RetrieverError(f"k must be in 1..{len(registry)}")
    qv = featurize(query)
    sims = {spec.name: cosine(qv, featurize(tool_text(spec))) for spec in registry}
    ranked = sorted(
        registry.names(), key=lambda n: (-sims[n], registry.index_of(n))
    )
    chosen = set(ranked[:k])
    selected = tuple(n for n in registry.names() if n in chosen)
    return RetrievalResult(probabilities=sims, selected=selected, method=METHOD_TOPK)


def all_tools_result(registry: ToolRegistry) -> RetrievalResult:
    return RetrievalResult(
        probabilities={n: 1.0 for n in registry.names()},
        selected=tuple(registry.names()),
        method=METHOD_ALL,
    )


# ---------------------------------------------------------------------------
# Retrieval evaluation
# ---------------------------------------------------------------------------

class Retriever:
    """A retrieval method bound to its parameters; callable per query."""

    name = "retriever"

    def retrieve(self, query: str) -> RetrievalResult:
        raise NotImplementedError


class AllToolsRetriever(Retriever):
    def __init__(self, registry: ToolRegistry):
        self.registry = registry
        self.name = "all_tools"

    def retrieve(self, query: str) -> RetrievalResult:
        return all_tools_result(self.registry)


class TopKRetriever(Retriever):
    def __init__(self, registry: ToolRegistry, k: int):
        self.registry = registry
        self.k = k
        self.name = f"top-{k}"

    def retrieve(self, query: str) -> RetrievalResult:
        return basic_rag_rank(query, self.registry, self.k)


class ClassifierRetriever(Retriever):
    def __init__(self, registry: ToolRegistry, model: ClassifierModel, threshold: float = 0.5):
        model.check_registry(registry)
        self.registry = registry
        self.model = model
        self.threshold = threshold
        self.name = "classifier"

    def retrieve(self, query: str) -> RetrievalResult:
        return predict_tools(self.model, query, self.registry, self.threshold)


@dataclass(frozen=True)
class RetrievalMetrics:
    tool_recall: float
    avg_tools: float
    avg_prompt_tokens: float

    def to_json_dict(self) -> dict:
        return {
            "tool_recall": self.tool_recall,
            "avg_tools": self.avg_tools,
            "avg_prompt_tokens": self.avg_prompt_tokens,
        }


def eval_retrieval(retriever: Retriever, dataset, registry: ToolRegistry) -> RetrievalMetrics:
    """Measure recall of gold tools, selection size, and rendered prompt size."""
    examples = list(dataset)
    if not examples:
        raise EmptyDataset("no examples to evaluate")
    recall_sum = 0.0
    tools_sum = 0.0
    tokens_sum = 0.0
    fragment_tokens: dict[tuple[str, ...], int] = {}
    for ex in examples:
        result = retriever.retrieve(ex.query)
        gold = set(ex.gold_plan.functions())
        hit = len(gold & set(result.selected))
        recall_sum += hit / len(gold) if gold else 1.0
        tools_sum += len(result.selected)
        key = result.selected
        if key not in fragment_tokens:
            fragment_tokens[key] = render_descriptions(registry, key).token_count
        tokens_sum += fragment_tokens[key]
    n = len(examples)
    return RetrievalMetrics(
        tool_recall=recall_sum / n,
        avg_tools=tools_sum / n,
        avg_prompt_tokens=tokens_sum / n,
    )
