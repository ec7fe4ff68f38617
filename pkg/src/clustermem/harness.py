"""Batch evaluation, ablations and benchmark importers."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import EngineConfig
from .dataset import MemoryItem, QaDataset, QaRecord
from .engine import MemoryEngine, cluster_stats
from .gateway import SlmError
from .embedding import EmbeddingError
from .metrics import metric_bundle

log = logging.getLogger(__name__)

ABLATIONS = {
    "evolution=global": {"evolution_scope": "global"},
    "retrieval=global": {"retrieval_mode": "global"},
    "strategy=cosine_greedy": {"routing_strategy": "cosine_greedy"},
    "strategy=kmeans_fixed": {"routing_strategy": "kmeans_fixed"},
}


def apply_ablation(config: EngineConfig, ablation: str | None) -> EngineConfig:
    if ablation is None:
        return config
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}; choose from {sorted(ABLATIONS)}")
    return config.replace(**ABLATIONS[ablation])


def _summary(values) -> dict:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        return {"mean": None, "std": None, "min": None, "max": None}
    return {"mean": float(arr.mean()), "std": float(arr.std()), "min": float(arr.min()), "max": float(arr.max())}


def aggregate(bundles) -> dict:
    """Mean of each metric over the records where it is defined."""
    keys: list[str] = []
    for bundle in bundles:
        for key in bundle:
            if key not in keys:
                keys.append(key)
    out = {}
    for key in keys:
        values = [b[key] for b in bundles if key in b and b[key] is not None]
        out[key] = math.fsum(values) / len(values) if values else None
    return out


@dataclass
class EvalReport:
    config: dict
    seed: int
    ablation: str | None
    records: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    cluster_stats: dict = field(default_factory=dict)
    r_stats: dict = field(default_factory=dict)
    failed_queries: int = 0
    skipped_records: int = 0
    # wall-clock seconds; kept out of to_dict so report files replay byte-for-byte
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "ablation": self.ablation,
            "records": self.records,
            "aggregates": self.aggregates,
            "cluster_stats": self.cluster_stats,
            "r_stats": self.r_stats,
            "failed_queries": self.failed_queries,
            "skipped_records": self.skipped_records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    def table(self) -> str:
        """Aggregate metrics as an aligned two-column table."""
        rows = [(k, "n/a" if v is None else f"{v:.4f}") for k, v in self.aggregates.items()]
        rows.append(("r_mean", "n/a" if self.r_stats.get("mean") is None else f"{self.r_stats['mean']:.4f}"))
        rows.append(("clusters", f"{self.cluster_stats.get('count_mean', 0):.2f}"))
        rows.append(("failed", str(self.failed_queries)))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def ingest_stream(engine: MemoryEngine, items) -> int:
    for item in items:
        engine.add_memory(item.content, item.timestamp)
    return len(items)


def _answer_one(engine: MemoryEngine, record: QaRecord, k: int | None):
    try:
        answer, result = engine.answer(record.question, k=k)
    except (SlmError, EmbeddingError) as exc:
        log.warning("query failed: %s", exc)
        return {"question": record.question, "error": str(exc)}, None
    texts = [engine.store.notes[nid].content for nid in result.note_ids]
    bundle = metric_bundle(answer, record.gold_answer, texts, record.gold_evidence or None)
    row = {
        "question": record.question,
        "prediction": answer,
        "gold_answer": record.gold_answer,
        "metrics": bundle,
        "retrieval": {
            "mode": result.mode,
            "selected_cluster_ids": result.selected_cluster_ids,
            "candidate_cluster_ids": result.candidate_cluster_ids,
            "searched_count": result.searched_count,
            "total_count": result.total_count,
            "r_reduction": result.r_reduction,
            "empty_selection_fallback": result.empty_selection_fallback,
            "note_ids": result.note_ids,
        },
    }
    return row, result


def evaluate(
    dataset: QaDataset,
    config: EngineConfig,
    gateway_factory,
    embedder=None,
    ablation: str | None = None,
    engine: MemoryEngine | None = None,
    workers: int = 4,
    k: int | None = None,
) -> EvalReport:
    """Ingest each stream in order, answer its questions, score everything.

    ``gateway_factory()`` returns a fresh :class:`SlmGateway`; one is built per
    stream. With ``engine`` given the dataset's streams are ignored and every
    question is asked against that pre-built store.
    """
    started = time.perf_counter()
    config = apply_ablation(config, ablation)
    if engine is not None:
        engine.config = config
        engine.router.config = config
        engine.retriever.config = config
    report = EvalReport(config=config.to_dict(), seed=config.rng_seed, ablation=ablation,
                        skipped_records=dataset.skipped)

    groups: dict[str, list[int]] = {}
    for index in range(len(dataset.records)):
        key, _ = dataset.stream_for(index) if engine is None else ("snapshot", [])
        groups.setdefault(key, []).append(index)

    rows: dict[int, dict] = {}
    per_stream = []
    reductions = []
    ingest_seconds = query_seconds = 0.0
    for key, indices in groups.items():
        if engine is None:
            stream_engine = MemoryEngine(config, embedder=embedder, gateway=gateway_factory())
            _, items = dataset.stream_for(indices[0])
            t0 = time.perf_counter()
            ingest_stream(stream_engine, items)
            ingest_seconds += time.perf_counter() - t0
        else:
            stream_engine = engine
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            outcomes = list(pool.map(lambda i: _answer_one(stream_engine, dataset.records[i], k), indices))
        query_seconds += time.perf_counter() - t0
        for index, (row, result) in zip(indices, outcomes):
            rows[index] = row
            if result is None:
                report.failed_queries += 1
            elif result.total_count:
                reductions.append(result.r_reduction)
        stats = cluster_stats(stream_engine.store)
        stats.pop("clusters")
        per_stream.append(dict(stats, stream=key))

    report.records = [rows[i] for i in range(len(dataset.records))]
    report.aggregates = aggregate([r["metrics"] for r in report.records if "metrics" in r])
    report.r_stats = _summary(reductions)
    counts = [s["count"] for s in per_stream]
    sizes = [s["mean_size"] for s in per_stream if s["count"]]
    report.cluster_stats = {
        "streams": len(per_stream),
        "count_mean": float(np.mean(counts)) if counts else 0.0,
        "count_std": float(np.std(counts)) if counts else 0.0,
        "mean_size": float(np.mean(sizes)) if sizes else 0.0,
        "max_size": max((s["max_size"] for s in per_stream), default=0),
        "per_stream": per_stream,
    }
    report.timings = {"ingest_s": ingest_seconds, "query_s": query_seconds,
                      "total_s": time.perf_counter() - started}
    return report


# -- importers -------------------------------------------------------------


def import_hotpotqa(raw) -> QaDataset:
    """HotpotQA-style JSON (list of examples) into passage-style records.

    Each context paragraph becomes one memory; the supporting-fact sentences
    become the gold evidence.
    """
    dataset = QaDataset()
    for example in raw:
        if not example.get("question") or not str(example.get("answer", "")).strip():
            dataset.skipped += 1
            continue
        paragraphs = {title: sentences for title, sentences in example.get("context", [])}
        stream = [MemoryItem(f"{title}: {' '.join(s.strip() for s in sents)}", "") for title, sents in paragraphs.items()]
        evidence = []
        for title, idx in example.get("supporting_facts", []):
            sents = paragraphs.get(title, [])
            if 0 <= idx < len(sents) and sents[idx].strip():
                evidence.append(sents[idx].strip())
        if not stream:
            dataset.skipped += 1
            continue
        dataset.records.append(QaRecord(example["question"], str(example["answer"]), evidence, memory_stream=stream))
    return dataset


def import_locomo(raw) -> QaDataset:
    """LoCoMo-style conversations into session-style records.

    Each dialogue turn becomes one memory ``"<speaker>: <text>"`` stamped with
    its session date; evidence dialogue ids resolve to those turn texts.
    Questions without a plain answer (the adversarial category) are skipped.
    """
    dataset = QaDataset()
    for n, sample in enumerate(raw):
        sid = str(sample.get("sample_id", n))
        conversation = sample.get("conversation", {})
        sessions = sorted(
            (k for k in conversation if k.startswith("session_") and not k.endswith("date_time")),
            key=lambda k: int(k.split("_")[1]),
        )
        stream, by_dia = [], {}
        for session in sessions:
            stamp = str(conversation.get(f"{session}_date_time", ""))
            for turn in conversation[session]:
                text = f"{turn.get('speaker', '?')}: {turn.get('text', '')}".strip()
                stream.append(MemoryItem(text, stamp))
                if "dia_id" in turn:
                    by_dia[turn["dia_id"]] = text
        dataset.streams[sid] = stream
        for qa in sample.get("qa", []):
            answer = qa.get("answer")
            if answer is None or not str(answer).strip() or not qa.get("question"):
                dataset.skipped += 1
                continue
            evidence = [by_dia[d] for d in qa.get("evidence", []) if d in by_dia]
            dataset.records.append(QaRecord(qa["question"], str(answer), evidence, stream_id=sid))
    return dataset


IMPORTERS = {"hotpotqa": import_hotpotqa, "locomo": import_locomo}
