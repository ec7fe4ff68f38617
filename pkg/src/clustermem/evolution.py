"""Neighborhood selection and localized (or global) memory evolution."""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import EngineConfig
from .embedding import cosine_similarity
from .gateway import SlmGateway
from .routing import profile_for, recent_members
from .store import MemoryStore


@dataclass
class Neighborhood:
    anchor: int
    neighbor_ids: list[int]
    scope: str
    similarities: list[float] = field(default_factory=list)


@dataclass
class EvolutionReport:
    note_id: int
    cluster_id: int | None
    scope: str
    neighbor_ids: list[int] = field(default_factory=list)
    links_added: int = 0
    notes_revised: int = 0
    profile_refreshed: bool = False
    fallback_used: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__, neighbor_ids=list(self.neighbor_ids))


def local_neighbors(store: MemoryStore, note_id: int, k: int, scope: str = "local") -> Neighborhood:
    """Top-``k`` notes by cosine to the anchor, excluding the anchor itself.

    ``scope="local"`` ranks only the anchor's cluster co-members;
    ``scope="global"`` ranks the whole store. Ties go to the smaller id.
    """
    anchor = store.read_note(note_id)
    if scope == "local":
        if anchor.cluster_id is None:
            raise ValueError(f"note {note_id} has no cluster; local scope needs one")
        pool = store.get_cluster(anchor.cluster_id).member_ids
    elif scope == "global":
        pool = sorted(store.notes)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    scored = []
    for nid in pool:
        if nid == note_id:
            continue
        other = store.read_note(nid)
        scored.append((cosine_similarity(anchor.embedding, other.embedding), nid))
    scored.sort(key=lambda item: (-item[0], item[1]))
    top = scored[:k]
    return Neighborhood(note_id, [nid for _, nid in top], scope, [s for s, _ in top])


def run_evolution(store: MemoryStore, gateway: SlmGateway, note_id: int, config: EngineConfig) -> EvolutionReport:
    """Link the new note into its neighborhood, revise neighbors, refresh the profile.

    Only the new note's links change from linking; neighbor revisions touch
    context, tags and keywords, never raw content or timestamps.
    """
    scope = config.evolution_scope
    with store.lock, store.audit("evolution"):
        note = store.read_note(note_id)
        report = EvolutionReport(note_id, note.cluster_id, scope)
        hood = local_neighbors(store, note_id, config.local_neighbors, scope)
        report.neighbor_ids = list(hood.neighbor_ids)
        if not hood.neighbor_ids:
            return report
        neighbors = [store.read_note(i) for i in hood.neighbor_ids]
        plan = gateway.evolve_neighborhood(note, neighbors)
        if plan.fallback_used:
            report.fallback_used = True
            return report
        new_links = plan.links - note.links
        if new_links:
            store.update_note(note_id, links=note.links | new_links)
        report.links_added = len(new_links)
        for nid, fields in plan.revisions:
            store.update_note(nid, **fields)
        report.notes_revised = len(plan.revisions)
        if note.cluster_id is not None:
            cluster = store.get_cluster(note.cluster_id)
            snippet_ids = recent_members(cluster, config.profile_snippets)
            profile = profile_for(store, gateway, snippet_ids, reader=store.read_note)
            store.set_profile(cluster.cluster_id, profile)
            report.profile_refreshed = True
        return report
