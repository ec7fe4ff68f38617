"""Cold-start initialization, online routing and adaptive splitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EngineConfig
from .embedding import cosine_similarity
from .gateway import ClusterCandidate, SlmGateway
from .kmeans import kmeans
from .store import Cluster, MemoryStore

BUFFERED = "buffered"
ROUTED = "routed"
NEW_CLUSTER = "new_cluster"

CANDIDATE_SNIPPETS = 3


@dataclass
class RoutingOutcome:
    decision: str
    cluster_id: int | None = None
    similarity: float | None = None
    candidates_considered: list[int] = field(default_factory=list)
    phase: str = "B"
    initialized: bool = False
    split_into: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "cluster_id": self.cluster_id,
            "similarity": self.similarity,
            "candidates_considered": list(self.candidates_considered),
            "phase": self.phase,
            "initialized": self.initialized,
            "split_into": list(self.split_into),
        }


def nearest_clusters(store: MemoryStore, embedding, k: int, centroids=None) -> list[tuple[int, float]]:
    """Clusters by descending centroid cosine, ties to the smaller id."""
    if centroids is None:
        centroids = {cid: c.centroid for cid, c in store.clusters.items()}
    scored = [(cid, cosine_similarity(embedding, vec)) for cid, vec in centroids.items()]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def recent_members(cluster: Cluster, limit: int) -> list[int]:
    """Most recently touched member ids, newest first."""
    return list(reversed(cluster.recent[-limit:]))


def profile_for(store: MemoryStore, gateway: SlmGateway, member_ids, reader=None):
    read = reader or store.get_note
    notes = [read(i) for i in member_ids]
    keywords = [kw for n in notes for kw in n.keywords]
    return gateway.generate_profile([n.content for n in notes], pad_terms=keywords)


def _kmeans_seed(config: EngineConfig, store: MemoryStore):
    return [config.rng_seed, store.next_cluster_id]


def initialize_clusters(store: MemoryStore, gateway: SlmGateway, buffer_ids, config: EngineConfig) -> list[Cluster]:
    """Partition the buffered notes into ``init_clusters`` groups and profile each."""
    buffer_ids = list(buffer_ids)
    k = min(config.init_clusters, len(buffer_ids))
    points = np.array([store.get_note(i).embedding for i in buffer_ids])
    result = kmeans(points, k, seed=_kmeans_seed(config, store), n_restarts=config.kmeans_restarts)
    clusters = []
    for group in result.groups():
        members = [buffer_ids[i] for i in group]
        snippet_ids = list(reversed(members[-config.profile_snippets:]))
        profile = profile_for(store, gateway, snippet_ids)
        clusters.append(store.create_cluster(members, profile))
    return clusters


def split_cluster(store: MemoryStore, gateway: SlmGateway, cluster_id: int, config: EngineConfig) -> list[int]:
    """Bisect a cluster that holds more than ``split_threshold`` members.

    Returns the two child ids, or an empty list when no split is needed.
    """
    parent = store.get_cluster(cluster_id)
    if parent.size <= config.split_threshold:
        return []
    members = list(parent.member_ids)
    points = store.member_embeddings(cluster_id)
    result = kmeans(points, 2, seed=_kmeans_seed(config, store), n_restarts=config.kmeans_restarts)
    groups = result.groups()
    if len(groups) < 2:
        return []
    recent = list(parent.recent)
    halves = []
    for group in groups:
        ids = [members[i] for i in group]
        order = [i for i in recent if i in set(ids)]
        halves.append((ids, order))
    with store.lock:
        store.remove_cluster(cluster_id)
        children = []
        for ids, order in halves:
            snippet_ids = list(reversed(order[-config.profile_snippets:]))
            child = store.create_cluster(ids, profile_for(store, gateway, snippet_ids))
            child.recent = order
            children.append(child.cluster_id)
    return children


class Router:
    """Assigns each new note to a cluster following the configured strategy."""

    def __init__(self, store: MemoryStore, gateway: SlmGateway, config: EngineConfig):
        self.store = store
        self.gateway = gateway
        self.config = config

    @property
    def initialized(self) -> bool:
        return self.store.processed >= self.config.init_buffer_size or bool(self.store.clusters)

    def buffer(self) -> list[int]:
        return [] if self.initialized else self.store.unassigned_ids()

    def route(self, note_id: int) -> RoutingOutcome:
        store = self.store
        with store.lock:
            if not self.initialized:
                outcome = self._cold_start(note_id)
            else:
                outcome = self._route_online(note_id)
            store.processed += 1
            return outcome

    def _cold_start(self, note_id: int) -> RoutingOutcome:
        buffer = self.store.unassigned_ids()
        if len(buffer) < self.config.init_buffer_size:
            return RoutingOutcome(BUFFERED, phase="A")
        clusters = initialize_clusters(self.store, self.gateway, buffer, self.config)
        if self.config.routing_strategy == "kmeans_fixed":
            self.store.frozen_centroids = {c.cluster_id: c.centroid.copy() for c in clusters}
        note = self.store.get_note(note_id)
        cluster = self.store.get_cluster(note.cluster_id)
        return RoutingOutcome(
            ROUTED,
            cluster_id=cluster.cluster_id,
            similarity=cosine_similarity(note.embedding, cluster.centroid),
            candidates_considered=[c.cluster_id for c in clusters],
            phase="A",
            initialized=True,
        )

    def _route_online(self, note_id: int) -> RoutingOutcome:
        store, config = self.store, self.config
        note = store.get_note(note_id)
        if config.routing_strategy == "kmeans_fixed":
            frozen = {cid: v for cid, v in store.frozen_centroids.items() if cid in store.clusters}
            ranked = nearest_clusters(store, note.embedding, 1, centroids=frozen or None)
            chosen, sim = ranked[0]
            store.add_member(chosen, note_id)
            return RoutingOutcome(ROUTED, chosen, sim, [chosen])

        ranked = nearest_clusters(store, note.embedding, config.routing_candidates)
        considered = [cid for cid, _ in ranked]
        if config.routing_strategy == "cosine_greedy":
            chosen = ranked[0][0]
        else:
            candidates = [
                ClusterCandidate(
                    cluster_id=cid,
                    profile=store.clusters[cid].profile,
                    snippets=[store.get_note(i).content for i in recent_members(store.clusters[cid], CANDIDATE_SNIPPETS)],
                    similarity=sim,
                )
                for cid, sim in ranked
            ]
            chosen = self.gateway.select_cluster(note, candidates)
        sim = cosine_similarity(note.embedding, store.clusters[chosen].centroid)
        if sim < config.new_cluster_threshold:
            profile = profile_for(store, self.gateway, [note_id])
            cluster = store.create_cluster([note_id], profile)
            return RoutingOutcome(NEW_CLUSTER, cluster.cluster_id, sim, considered)
        store.add_member(chosen, note_id)
        children = split_cluster(store, self.gateway, chosen, config)
        final = store.get_note(note_id).cluster_id
        return RoutingOutcome(ROUTED, final, sim, considered, split_into=children)
