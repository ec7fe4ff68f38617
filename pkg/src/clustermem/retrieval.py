"""Cluster-aware two-stage retrieval and the flat global ablation."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .config import EngineConfig
from .embedding import cosine_similarity
from .gateway import ClusterCandidate, SlmGateway
from .routing import CANDIDATE_SNIPPETS, nearest_clusters, recent_members
from .store import MemoryStore

TWO_STAGE = "two_stage"
GLOBAL = "global"
FLAT_FALLBACK = "flat_fallback"


@dataclass
class RetrievalResult:
    query: str
    mode: str
    ranked_notes: list[tuple[int, float]] = field(default_factory=list)
    candidate_cluster_ids: list[int] = field(default_factory=list)
    selected_cluster_ids: list[int] = field(default_factory=list)
    searched_count: int = 0
    total_count: int = 0
    r_reduction: float = 0.0
    empty_selection_fallback: bool = False
    query_tags: list[str] = field(default_factory=list)

    @property
    def note_ids(self) -> list[int]:
        return [nid for nid, _ in self.ranked_notes]

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "mode": self.mode,
            "ranked_notes": [[nid, score] for nid, score in self.ranked_notes],
            "candidate_cluster_ids": list(self.candidate_cluster_ids),
            "selected_cluster_ids": list(self.selected_cluster_ids),
            "searched_count": self.searched_count,
            "total_count": self.total_count,
            "r_reduction": self.r_reduction,
            "empty_selection_fallback": self.empty_selection_fallback,
            "query_tags": list(self.query_tags),
        }


def search_space_reduction(searched: int, total: int) -> float:
    """Fraction of the store skipped: ``1 - searched / total``."""
    if total < 1:
        raise ValueError("search-space reduction is undefined for an empty store")
    if not 0 <= searched <= total:
        raise ValueError(f"searched count {searched} outside [0, {total}]")
    return 1.0 - searched / total


def rank_notes(store: MemoryStore, note_ids, query_embedding, k: int) -> list[tuple[int, float]]:
    scored = [(nid, cosine_similarity(query_embedding, store.notes[nid].embedding)) for nid in note_ids]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def query_text(query: str, tags) -> str:
    tags = [t for t in tags if t]
    return f"{query}\n{' '.join(tags)}" if tags else query


class Retriever:
    def __init__(self, store: MemoryStore, gateway: SlmGateway, embedder, config: EngineConfig):
        self.store = store
        self.gateway = gateway
        self.embedder = embedder
        self.config = config
        self._tag_cache: dict[str, list[str]] = {}
        self._tag_lock = threading.Lock()

    def query_tags(self, query: str) -> list[str]:
        """Annotator tags for a query, generated once and cached."""
        with self._tag_lock:
            if query not in self._tag_cache:
                self._tag_cache[query] = list(self.gateway.annotate_note(query).tags)
            return list(self._tag_cache[query])

    def stage1_select(self, query: str, query_embedding, tags) -> tuple[list[int], list[int], bool]:
        """Candidate clusters by centroid, then the model's variable-size pick.

        An empty pick falls back to the single nearest candidate; the third
        element of the result flags that fallback.
        """
        store = self.store
        ranked = nearest_clusters(store, query_embedding, self.config.stage1_candidates)
        candidate_ids = [cid for cid, _ in ranked]
        if len(ranked) == 1:
            return candidate_ids, candidate_ids, False
        candidates = [
            ClusterCandidate(
                cluster_id=cid,
                profile=store.clusters[cid].profile,
                snippets=[store.notes[i].content for i in recent_members(store.clusters[cid], CANDIDATE_SNIPPETS)],
                similarity=sim,
            )
            for cid, sim in ranked
        ]
        selected = self.gateway.select_retrieval_clusters(query, tags, candidates, len(candidates))
        if not selected:
            return candidate_ids, candidate_ids[:1], True
        return candidate_ids, selected, False

    def stage2_retrieve(self, query, selected_ids, k: int | None = None) -> list[tuple[int, float]]:
        """Exhaustive cosine ranking over the union of the selected clusters."""
        k = self.config.retrieve_top_k if k is None else k
        embedding = self.embedder.embed_text(query) if isinstance(query, str) else query
        pool = sorted({nid for cid in selected_ids for nid in self.store.get_cluster(cid).member_ids})
        return rank_notes(self.store, pool, embedding, k)

    def retrieve(self, query: str, mode: str | None = None, query_tags=None, k: int | None = None) -> RetrievalResult:
        mode = mode or self.config.retrieval_mode
        k = self.config.retrieve_top_k if k is None else k
        store = self.store
        total = len(store)
        if not store.clusters:
            mode = FLAT_FALLBACK
        if total == 0:
            return RetrievalResult(query=query, mode=mode)
        tags = list(query_tags) if query_tags is not None else self.query_tags(query)
        result = RetrievalResult(query=query, mode=mode, total_count=total, query_tags=tags)
        embedding = self.embedder.embed_text(query_text(query, tags))
        if mode in (GLOBAL, FLAT_FALLBACK):
            result.ranked_notes = rank_notes(store, sorted(store.notes), embedding, k)
            result.searched_count = total
            result.r_reduction = 0.0
            return result
        if mode != TWO_STAGE:
            raise ValueError(f"unknown retrieval mode {mode!r}")
        candidates, selected, fallback = self.stage1_select(query, embedding, tags)
        result.candidate_cluster_ids = candidates
        result.selected_cluster_ids = selected
        result.empty_selection_fallback = fallback
        result.ranked_notes = self.stage2_retrieve(embedding, selected, k)
        result.searched_count = sum(store.clusters[c].size for c in selected)
        result.r_reduction = search_space_reduction(result.searched_count, total)
        return result
