"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ROUTING_STRATEGIES, EVOLUTION_SCOPES, RETRIEVAL_MODES, ConfigError, EngineConfig
from .dataset import DatasetError, QaDataset, load_dataset
from .embedding import EmbeddingError, HashingEmbedder, RemoteEmbedder
from .engine import MemoryEngine, cluster_stats
from .gateway import ChatCompletionsClient, DecisionLog, ScriptedStub, SlmError, SlmGateway
from .harness import ABLATIONS, IMPORTERS, evaluate, ingest_stream
from .store import MemoryStore, SnapshotError, StoreError
from .stubs import HeuristicStub
from .synthetic import SyntheticSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

log = logging.getLogger("clustermem")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _engine_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat JSON file of EngineConfig fields")
    p.add_argument("--full-scale", action="store_true",
                   help="start from the full-scale hyperparameters instead of desk defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=ROUTING_STRATEGIES)
    p.add_argument("--evolution-scope", choices=EVOLUTION_SCOPES)
    p.add_argument("--mode", choices=RETRIEVAL_MODES)
    p.add_argument("--k", type=int, help="retrieve top-k")


def _backend_flags(p: argparse.ArgumentParser):
    p.add_argument("--stub", help="decision table JSON for the scripted model stub")
    p.add_argument("--slm-url", default=os.environ.get("SLM_URL"),
                   help="OpenAI-compatible chat completions URL (env SLM_URL)")
    p.add_argument("--slm-model", default="qwen2.5-1.5b-instruct")
    p.add_argument("--embed-url", default=os.environ.get("EMBEDDINGS_URL"),
                   help="embedding service URL (env EMBEDDINGS_URL)")
    p.add_argument("--embed-model", default="all-MiniLM-L6-v2")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clustermem", description="Self-organizing clustered memory for small-model agents.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a seeded synthetic dataset and its topic labels")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="labels sidecar path (default: <out>.labels.json)")
    p.add_argument("--topics", type=int, default=3)
    p.add_argument("--notes-per-topic", type=int, default=10)
    p.add_argument("--words-per-note", type=int, default=6)
    p.add_argument("--distractor-rate", type=float, default=0.0)
    p.add_argument("--drift-at", type=int)
    p.add_argument("--questions-per-topic", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest", help="ingest a dataset's memory streams into a snapshot")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="snapshot path")
    p.add_argument("--strict", action="store_true", help="abort on the first malformed line")
    p.add_argument("--audit", help="append evolution audit rows (JSONL) here")
    p.add_argument("--json", action="store_true")
    _engine_flags(p)
    _backend_flags(p)

    p = sub.add_parser("query", help="answer one question against a snapshot")
    p.add_argument("snapshot")
    p.add_argument("question")
    p.add_argument("--json", action="store_true", help="also print the retrieval result")
    _engine_flags(p)
    _backend_flags(p)

    p = sub.add_parser("evaluate", help="score a dataset end to end")
    p.add_argument("dataset")
    p.add_argument("--snapshot", help="answer against this store instead of ingesting the streams")
    p.add_argument("--ablate", choices=sorted(ABLATIONS))
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of the table")
    _engine_flags(p)
    _backend_flags(p)

    p = sub.add_parser("stats", help="cluster statistics of a snapshot")
    p.add_argument("snapshot")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("import", help="convert a public benchmark file to the dataset format")
    p.add_argument("format", choices=sorted(IMPORTERS))
    p.add_argument("source")
    p.add_argument("--out", required=True)

    p = sub.add_parser("snapshot", help="validate a snapshot, optionally re-save or export its notes")
    p.add_argument("snapshot")
    p.add_argument("--out", help="re-save the validated snapshot here")
    p.add_argument("--export-notes", help="write the notes as JSONL")
    p.add_argument("--json", action="store_true")
    return parser


# -- construction helpers --------------------------------------------------


def build_config(args, base: EngineConfig | None = None) -> EngineConfig:
    if base is None:
        base = EngineConfig() if args.full_scale else EngineConfig.desk_defaults()
    if args.config:
        base = EngineConfig.load(args.config, base)
    changes = {}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.strategy:
        changes["routing_strategy"] = args.strategy
    if args.evolution_scope:
        changes["evolution_scope"] = args.evolution_scope
    if args.mode:
        changes["retrieval_mode"] = args.mode
    if args.k is not None:
        changes["retrieve_top_k"] = args.k
    return base.replace(**changes) if changes else base


def build_backend(args):
    if args.stub and args.slm_url:
        raise UsageError("--stub and --slm-url are mutually exclusive")
    if args.stub:
        try:
            return ScriptedStub.from_file(args.stub)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"cannot load decision table {args.stub}: {exc}") from exc
    if args.slm_url:
        return ChatCompletionsClient(args.slm_url, args.slm_model)
    log.info("no model backend given; using the built-in heuristic responder")
    return HeuristicStub()


def build_embedder(args, dim: int):
    if args.embed_url:
        return RemoteEmbedder(args.embed_url, dim, model=args.embed_model)
    return HashingEmbedder(dim)


def _snapshot_config(path) -> EngineConfig:
    from .store import read_snapshot

    document = read_snapshot(path)
    try:
        return EngineConfig.from_dict(document["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"snapshot config is invalid: {exc}") from exc


def _print_stats(stats: dict, as_json: bool):
    if as_json:
        print(json.dumps(stats, sort_keys=True, indent=2))
        return
    print(f"clusters: {stats['count']}  notes: {stats['notes']}  assigned: {stats['assigned']}")
    print(f"size mean {stats['mean_size']:.2f}  std {stats['std_size']:.2f}  "
          f"min {stats['min_size']}  max {stats['max_size']}")
    for c in stats["clusters"]:
        print(f"  cluster_{c['cluster_id']:<4} {c['size']:>5}  {c['summary']}  [{', '.join(c['tags'])}]")


# -- subcommands -----------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        topic_count=args.topics,
        notes_per_topic=args.notes_per_topic,
        words_per_note=args.words_per_note,
        distractor_rate=args.distractor_rate,
        drift_at=args.drift_at,
        questions_per_topic=args.questions_per_topic,
        seed=args.seed,
    )
    try:
        data = generate(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    data.dataset.write_jsonl(args.out)
    labels_path = args.labels or f"{args.out}.labels.json"
    Path(labels_path).write_text(json.dumps({"topics": data.topic_names, "labels": data.labels}) + "\n")
    print(f"wrote {len(data.stream)} memories and {len(data.dataset.records)} questions to {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    config = build_config(args)
    dataset = load_dataset(args.dataset, strict=args.strict)
    engine = MemoryEngine(config, embedder=build_embedder(args, config.embedding_dim),
                          gateway=SlmGateway(build_backend(args)), audit_path=args.audit)
    items = dataset.all_items()
    ingest_stream(engine, items)
    engine.snapshot(args.out)
    if dataset.skipped:
        print(f"skipped {dataset.skipped} malformed line(s)", file=sys.stderr)
    _print_stats(engine.cluster_stats(), args.json)
    return EXIT_OK


def cmd_query(args) -> int:
    stored = _snapshot_config(args.snapshot)
    config = build_config(args, base=stored)
    engine = MemoryEngine.restore(args.snapshot, gateway=SlmGateway(build_backend(args)),
                                  embedder=build_embedder(args, config.embedding_dim), config=config)
    answer, result = engine.answer(args.question)
    print(answer)
    if args.json:
        print(json.dumps(result.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.dataset, strict=args.strict)
    backend = build_backend(args)
    engine = None
    if args.snapshot:
        config = build_config(args, base=_snapshot_config(args.snapshot))
        engine = MemoryEngine.restore(args.snapshot, gateway=SlmGateway(backend),
                                      embedder=build_embedder(args, config.embedding_dim), config=config)
    else:
        config = build_config(args)
    report = evaluate(
        dataset,
        config,
        gateway_factory=lambda: SlmGateway(backend, DecisionLog()),
        embedder=build_embedder(args, config.embedding_dim),
        ablation=args.ablate,
        engine=engine,
        workers=args.workers,
    )
    if args.report:
        report.write(args.report)
    if args.json:
        print(report.to_json())
    else:
        print(report.table())
        print(f"wall-clock {report.timings['total_s']:.2f}s", file=sys.stderr)
    return EXIT_OK


def cmd_stats(args) -> int:
    store = MemoryStore.restore(args.snapshot)
    _print_stats(cluster_stats(store), args.json)
    return EXIT_OK


def cmd_import(args) -> int:
    try:
        raw = json.loads(Path(args.source).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read {args.source}: {exc}") from exc
    if not isinstance(raw, list):
        raise DatasetError("benchmark file must hold a JSON list")
    try:
        dataset: QaDataset = IMPORTERS[args.format](raw)
    except (AttributeError, TypeError, ValueError, KeyError) as exc:
        raise DatasetError(f"unexpected {args.format} layout: {exc}") from exc
    dataset.write_jsonl(args.out)
    print(f"imported {len(dataset.records)} questions ({dataset.skipped} skipped) to {args.out}")
    return EXIT_OK


def cmd_snapshot(args) -> int:
    from .store import read_snapshot

    document = read_snapshot(args.snapshot)
    store = MemoryStore.restore(args.snapshot)
    if args.out:
        store.snapshot(args.out, _snapshot_config(args.snapshot))
    if args.export_notes:
        store.write_notes_jsonl(args.export_notes)
    summary = {"version": document.get("version"), "notes": len(store), "clusters": len(store.clusters),
               "processed": store.processed}
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "query": cmd_query,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
    "import": cmd_import,
    "snapshot": cmd_snapshot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, SnapshotError, StoreError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SlmError, EmbeddingError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
