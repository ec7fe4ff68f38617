"""The memory engine: ingestion (annotate, embed, route, evolve) and querying."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .embedding import HashingEmbedder
from .evolution import EvolutionReport, run_evolution
from .gateway import Annotation, SlmGateway
from .retrieval import RetrievalResult, Retriever
from .routing import BUFFERED, Router, RoutingOutcome
from .store import MemoryNote, MemoryStore, SnapshotError, read_snapshot


@dataclass
class IngestResult:
    note_id: int
    routing: RoutingOutcome
    evolution: EvolutionReport | None


class MemoryEngine:
    """Self-organizing clustered memory.

    >>> from clustermem.gateway import ScriptedStub, SlmGateway
    >>> engine = MemoryEngine(EngineConfig(embedding_dim=64), gateway=SlmGateway(ScriptedStub({})))
    >>> len(engine.store)
    0
    """

    def __init__(self, config: EngineConfig | None = None, embedder=None, gateway: SlmGateway | None = None,
                 store: MemoryStore | None = None, audit_path=None):
        self.config = config or EngineConfig()
        self.embedder = embedder or HashingEmbedder(self.config.embedding_dim)
        if self.embedder.dim != self.config.embedding_dim:
            raise ValueError(f"embedder dimension {self.embedder.dim} != configured {self.config.embedding_dim}")
        if gateway is None:
            raise ValueError("a model gateway is required")
        self.gateway = gateway
        self.store = store or MemoryStore(self.config.embedding_dim, embedder=self.embedder)
        self.store.embedder = self.embedder
        self.router = Router(self.store, self.gateway, self.config)
        self.retriever = Retriever(self.store, self.gateway, self.embedder, self.config)
        self.audit_path = audit_path

    @property
    def initialized(self) -> bool:
        return self.router.initialized

    def add_memory(self, content: str, timestamp: str, annotation: Annotation | None = None) -> IngestResult:
        """Run one full ingestion step for a raw memory."""
        if not isinstance(content, str) or not content.strip():
            raise ValueError("memory content must be non-empty text")
        annotation = annotation or self.gateway.annotate_note(content)
        with self.store.lock:
            note = MemoryNote(
                content=content,
                timestamp=timestamp,
                keywords=list(annotation.keywords),
                tags=list(annotation.tags),
                context=annotation.context,
            )
            note_id = self.store.put_note(note)
            outcome = self.router.route(note_id)
            report = None
            if outcome.decision != BUFFERED and outcome.phase == "B":
                report = run_evolution(self.store, self.gateway, note_id, self.config)
                self._audit(report)
        return IngestResult(note_id, outcome, report)

    def _audit(self, report: EvolutionReport):
        if self.audit_path is None:
            return
        with open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")

    def retrieve(self, query: str, mode: str | None = None, query_tags=None, k: int | None = None) -> RetrievalResult:
        return self.retriever.retrieve(query, mode=mode, query_tags=query_tags, k=k)

    def answer(self, question: str, mode: str | None = None, query_tags=None, k: int | None = None):
        """Retrieve then answer; returns ``(answer, RetrievalResult)``."""
        result = self.retrieve(question, mode=mode, query_tags=query_tags, k=k)
        notes = [self.store.notes[nid] for nid in result.note_ids]
        return self.gateway.answer_query(question, notes), result

    def snapshot(self, path):
        with self.store.lock:
            self.store.snapshot(path, self.config)

    @classmethod
    def restore(cls, path, gateway: SlmGateway, embedder=None, config: EngineConfig | None = None,
                audit_path=None) -> "MemoryEngine":
        """Rebuild an engine from a snapshot.

        ``config`` overrides the snapshot's configuration, e.g. to switch the
        retrieval mode for an ablation; the embedding dimension must agree.
        """
        document = read_snapshot(path)
        try:
            stored = EngineConfig.from_dict(document["config"])
        except (TypeError, ValueError) as exc:
            raise SnapshotError(f"snapshot config is invalid: {exc}") from exc
        config = config or stored
        if config.embedding_dim != stored.embedding_dim:
            raise SnapshotError("embedding dimension differs from the snapshot")
        engine = cls(config, embedder=embedder, gateway=gateway, audit_path=audit_path)
        engine.store.load_dict(document)
        return engine

    def cluster_stats(self) -> dict:
        return cluster_stats(self.store)


def cluster_stats(store: MemoryStore) -> dict:
    sizes = [c.size for _, c in sorted(store.clusters.items())]
    stats = {"count": len(sizes), "notes": len(store), "assigned": store.assigned_count()}
    if sizes:
        arr = np.array(sizes, dtype=float)
        stats.update(mean_size=float(arr.mean()), std_size=float(arr.std()), min_size=int(arr.min()),
                     max_size=int(arr.max()))
    else:
        stats.update(mean_size=0.0, std_size=0.0, min_size=0, max_size=0)
    stats["clusters"] = [
        {"cluster_id": cid, "size": c.size, "summary": c.profile.summary, "tags": list(c.profile.tags)}
        for cid, c in sorted(store.clusters.items())
    ]
    return stats
