"""Command-line entry points: data generation, training, evaluation, serving.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .evaluator import MatchMode, score_dataset


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--registry", default=None, help="registry JSON file (default: built-in catalog)")
    parser.add_argument(
        "--mode",
        choices=["strict", "names-only"],
        default="strict",
        help="plan match mode for scoring",
    )


def _mode(args) -> MatchMode:
    return MatchMode.STRICT if args.mode == "strict" else MatchMode.NAMES_ONLY


def _registry(args):
    from .registry import load_registry

    return load_registry(args.registry)


def _build_retriever(spec: str, registry, model_path: str | None):
    from .retriever import (
        AllToolsRetriever,
        ClassifierModel,
        ClassifierRetriever,
        TopKRetriever,
    )

    if spec == "all":
        return AllToolsRetriever(registry)
    if spec.startswith("topk:"):
        return TopKRetriever(registry, int(spec.split(":", 1)[1]))
    if spec == "classifier":
        if not model_path:
            raise SystemExit2("--model is required for the classifier retriever")
        return ClassifierRetriever(registry, ClassifierModel.load(model_path))
    raise SystemExit2(f"unknown retrieval method {spec!r}")


class SystemExit2(Exception):
    """Usage error discovered after argparse; maps to exit code 2."""


def _build_backend(args, registry, reference):
    from .gateway import BackendConfig, make_backend

    name = args.backend
    if name == "mock-gold":
        return make_backend(BackendConfig(kind="mock_gold"), reference)
    if name == "mock-noisy":
        return make_backend(
            BackendConfig(
                kind="mock_noisy", corruption_rate=args.noise, seed=args.seed
            ),
            reference,
        )
    if name == "http":
        return make_backend(
            BackendConfig(kind="http", endpoint=args.endpoint, model=args.model_name)
        )
    raise SystemExit2(f"unknown backend {name!r}")


def _load_dataset(path: str, registry, quarantine: str | None = None):
    from .dataset import load_jsonl

    accepted, rejected = load_jsonl(path, registry, quarantine)
    if rejected:
        print(f"quarantined {len(rejected)} invalid record(s)", file=sys.stderr)
    return accepted


def cmd_gen_data(args) -> int:
    from .dataset import DatasetConfig, generate_dataset, save_jsonl

    registry = _registry(args)
    config = DatasetConfig(
        n_train=args.train,
        n_val=args.val,
        n_test=args.test,
        seed=args.seed,
        available_tools_size=args.available_tools,
    )
    splits = generate_dataset(config, registry)
    os.makedirs(args.out, exist_ok=True)
    for split, examples in splits.items():
        save_jsonl(examples, os.path.join(args.out, f"{split}.jsonl"))
    meta = dict(config.to_dict(), registry_fingerprint=registry.fingerprint())
    with open(os.path.join(args.out, "metadata.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    total = sum(len(v) for v in splits.values())
    print(f"wrote {total} examples to {args.out}")
    return 0


def cmd_train_retriever(args) -> int:
    from .retriever import TrainConfig, train_classifier

    registry = _registry(args)
    train_set = _load_dataset(args.train, registry)
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed)
    model = train_classifier(train_set, registry, config)
    model.save(args.out)
    losses = ", ".join(f"{l:.4f}" for l in model.epoch_losses)
    print(f"trained on {len(train_set)} examples; epoch losses: {losses}")
    print(f"saved model to {args.out}")
    return 0


def cmd_eval_retrieval(args) -> int:
    from .retriever import eval_retrieval

    registry = _registry(args)
    dataset = _load_dataset(args.dataset, registry)
    retriever = _build_retriever(args.method, registry, args.model)
    metrics = eval_retrieval(retriever, dataset, registry)
    print(json.dumps(dict(metrics.to_json_dict(), method=retriever.name), indent=2))
    return 0


def cmd_score(args) -> int:
    registry = _registry(args)
    gold = _load_dataset(args.gold, registry)
    predictions = []
    with open(args.pred, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                predictions.append(json.loads(line)["plan"])
    metrics = score_dataset(predictions, gold, _mode(args))
    print(metrics.format_table())
    print(f"success_rate {metrics.success_rate:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(metrics.to_json())
    return 0


def cmd_run(args) -> int:
    from .executor import ExecPolicy
    from .retriever import AllToolsRetriever
    from .service import AgentService, ServiceConfig

    registry = _registry(args)
    reference = _load_dataset(args.dataset, registry) if args.dataset else []
    backend = _build_backend(args, registry, reference)
    retriever = _build_retriever(args.method, registry, args.model)
    service = AgentService(
        ServiceConfig(
            registry=registry,
            backend=backend,
            retriever=retriever,
            exec_policy=ExecPolicy(),
            approve_before_execute=False,
            default_seed=args.seed,
        )
    )
    session = service.create_session()
    turn = service.handle_query(session, args.query)
    print(json.dumps(turn.to_wire(session.device_state.digest()), indent=2))
    return 0 if turn.status == "executed" else 1


def cmd_serve(args) -> int:
    from .executor import ExecPolicy
    from .service import AgentService, ServiceConfig, serve

    registry = _registry(args)
    reference = _load_dataset(args.dataset, registry) if args.dataset else []
    backend = _build_backend(args, registry, reference)
    retriever = _build_retriever(args.method, registry, args.model)
    service = AgentService(
        ServiceConfig(
            registry=registry,
            backend=backend,
            retriever=retriever,
            exec_policy=ExecPolicy(),
            approve_before_execute=not args.no_approval,
            default_seed=args.seed,
        )
    )
    print(f"serving on http://{args.host}:{args.port}")
    serve(
        service,
        host=args.host,
        port=args.port,
        console_dir=args.console,
        snapshot_path=args.snapshot,
    )
    return 0


def cmd_bench(args) -> int:
    from .bench import bench_run

    registry = _registry(args)
    dataset = _load_dataset(args.dataset, registry)
    retrievers = [
        _build_retriever(m.strip(), registry, args.model)
        for m in args.methods.split(",")
        if m.strip()
    ]
    backends = [_build_backend(args, registry, dataset)]
    report = bench_run(
        dataset, retrievers, backends, registry, _mode(args), args.repetitions
    )
    print(report.format_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(report.to_json())
        print(f"wrote {args.out}")
    return 0


def expand_config(argv: list[str]) -> list[str]:
    """Expand `--config FILE` into flags read from a key-value file.

    Lines are `key = value` with `#` comments; keys mirror the flag names.
    Values from the file are inserted right after the subcommand so explicit
    command-line flags still win.
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2 :]
    tokens: list[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            flag = "--" + key.strip().replace("_", "-")
            value = value.strip()
            if value.lower() == "true":
                tokens.append(flag)
            elif value.lower() == "false":
                continue
            else:
                tokens.extend([flag, value])
    return rest[:1] + tokens + rest[1:]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plankit",
        description="Function-calling plan runtime: data, training, eval, serving.",
        epilog="Any subcommand accepts `--config FILE`, a key-value file "
        "(`port = 8080`) mirroring its flags; explicit flags override it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate dataset splits")
    _add_common(p)
    p.add_argument("--train", type=int, default=8000)
    p.add_argument("--val", type=int, default=100)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--available-tools", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-retriever", help="train the tool classifier")
    _add_common(p)
    p.add_argument("--train", required=True, help="train split JSONL")
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.5)
    p.set_defaults(fn=cmd_train_retriever)

    p = sub.add_parser("eval-retrieval", help="measure retrieval quality")
    _add_common(p)
    p.add_argument("--method", required=True, help="all | topk:K | classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", default=None, help="classifier model path")
    p.set_defaults(fn=cmd_eval_retrieval)

    p = sub.add_parser("score", help="score predictions against gold plans")
    _add_common(p)
    p.add_argument("--pred", required=True, help='JSONL with {"plan": text} rows')
    p.add_argument("--gold", required=True, help="gold dataset JSONL")
    p.add_argument("--out", default=None, help="write metrics JSON here")
    p.set_defaults(fn=cmd_score)

    def add_backend_flags(p):
        p.add_argument("--backend", default="mock-gold", help="mock-gold | mock-noisy | http")
        p.add_argument("--noise", type=float, default=0.0, help="mock-noisy corruption rate")
        p.add_argument("--endpoint", default="http://localhost:8000/v1/chat/completions")
        p.add_argument("--model-name", default="local-planner")
        p.add_argument("--dataset", default=None, help="reference dataset for mock backends")
        p.add_argument("--method", default="all", help="retrieval method")
        p.add_argument("--model", default=None, help="classifier model path")

    p = sub.add_parser("run", help="run one query end to end")
    _add_common(p)
    add_backend_flags(p)
    p.add_argument("--query", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("serve", help="start the HTTP agent service")
    _add_common(p)
    add_backend_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--no-approval", action="store_true", help="execute without confirmation")
    p.add_argument("--console", default=None, help="directory with the built web console")
    p.add_argument("--snapshot", default=None, help="write sessions JSON here on shutdown")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("bench", help="latency/prompt-size/success comparison")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--methods", default="all,topk:3,classifier")
    p.add_argument("--model", default=None, help="classifier model path")
    p.add_argument("--backend", default="mock-gold")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--endpoint", default="http://localhost:8000/v1/chat/completions")
    p.add_argument("--model-name", default="local-planner")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bench)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = expand_config(list(argv))
    except IndexError:
        print("error: --config requires a file path", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.fn(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # operational failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
