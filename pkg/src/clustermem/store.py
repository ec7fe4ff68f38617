"""Note and cluster data model, the memory store, and snapshot persistence."""
from __future__ import annotations

import contextlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import DimensionMismatch, unit_vector

SNAPSHOT_VERSION = 1
NOTE_KEYS = ("id", "content", "cluster_id", "timestamp", "keywords", "tags", "context", "links", "embedding")


class StoreError(Exception):
    pass


class NoteNotFound(StoreError, KeyError):
    pass


class ClusterNotFound(StoreError, KeyError):
    pass


class DuplicateNoteError(StoreError):
    pass


class SnapshotError(StoreError):
    """Raised for unreadable, truncated or version-mismatched snapshots."""


@dataclass
class MemoryNote:
    content: str
    timestamp: str
    keywords: list[str] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)
    context: str = ""
    links: set[int] = field(default_factory=set)
    embedding: np.ndarray | None = None
    id: int | None = None
    cluster_id: int | None = None

    def embedding_text(self) -> str:
        """Text the embedder sees: raw content plus the contextual description."""
        if self.context:
            return f"{self.content}\n{self.context}"
        return self.content

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "content": self.content,
            "cluster_id": self.cluster_id,
            "timestamp": self.timestamp,
            "keywords": list(self.keywords),
            "tags": list(self.tags),
            "context": self.context,
            "links": sorted(self.links),
            "embedding": None if self.embedding is None else [float(x) for x in self.embedding],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MemoryNote":
        missing = [k for k in NOTE_KEYS if k not in data]
        if missing:
            raise ValueError(f"note record missing keys {missing}")
        emb = data["embedding"]
        return cls(
            id=data["id"],
            content=data["content"],
            cluster_id=data["cluster_id"],
            timestamp=data["timestamp"],
            keywords=list(data["keywords"]),
            tags=list(data["tags"]),
            context=data["context"],
            links=set(data["links"]),
            embedding=None if emb is None else unit_vector(emb),
        )


@dataclass(frozen=True)
class ClusterProfile:
    summary: str
    tags: tuple[str, str, str]

    def __post_init__(self):
        tags = tuple(self.tags)
        if len(tags) != 3 or len(set(tags)) != 3:
            raise ValueError(f"profile needs exactly three distinct tags, got {tags!r}")
        object.__setattr__(self, "tags", tags)

    def to_dict(self) -> dict:
        return {"summary": self.summary, "tags": list(self.tags)}

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterProfile":
        return cls(summary=data["summary"], tags=tuple(data["tags"]))


@dataclass
class Cluster:
    cluster_id: int
    member_ids: list[int]
    centroid: np.ndarray
    profile: ClusterProfile
    created_at: int
    # member ids ordered by last touch, most recent last
    recent: list[int] = field(default_factory=list)
    profile_seq: int = 0
    _sum: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.member_ids)

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "member_ids": list(self.member_ids),
            "centroid": [float(x) for x in self.centroid],
            "profile": self.profile.to_dict(),
            "created_at": self.created_at,
            "recent": list(self.recent),
            "profile_seq": self.profile_seq,
        }


class MemoryStore:
    """Append-and-update store of notes and the cluster partition over them.

    Cluster membership is authoritative; ``MemoryNote.cluster_id`` is a
    back-reference kept in sync by the store. All mutations go through
    :attr:`lock`, a single writer lock.
    """

    def __init__(self, dim: int, embedder=None):
        self.dim = dim
        self.embedder = embedder
        self.notes: dict[int, MemoryNote] = {}
        self.clusters: dict[int, Cluster] = {}
        self.next_note_id = 0
        self.next_cluster_id = 0
        self.processed = 0
        self.mutation_seq = 0
        # assignment centroids pinned at initialization (kmeans_fixed strategy)
        self.frozen_centroids: dict[int, np.ndarray] = {}
        self.lock = threading.RLock()
        self.access_log: list[dict] = []
        self._audit_tags: list[str] = []

    # -- access auditing -------------------------------------------------

    @contextlib.contextmanager
    def audit(self, tag: str):
        """Record every :meth:`read_note` and note write made inside the block."""
        self._audit_tags.append(tag)
        try:
            yield
        finally:
            self._audit_tags.pop()

    def _record(self, op: str, note_id: int):
        if self._audit_tags:
            self.access_log.append({"tag": self._audit_tags[-1], "op": op, "note_id": note_id})

    def drain_access_log(self) -> list[dict]:
        entries, self.access_log = self.access_log, []
        return entries

    # -- notes -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.notes)

    def get_note(self, note_id: int) -> MemoryNote:
        try:
            return self.notes[note_id]
        except KeyError:
            raise NoteNotFound(note_id) from None

    def read_note(self, note_id: int) -> MemoryNote:
        """Like :meth:`get_note` but visible to :meth:`audit`."""
        note = self.get_note(note_id)
        self._record("read", note_id)
        return note

    def _embed(self, note: MemoryNote) -> np.ndarray:
        if self.embedder is None:
            raise StoreError("store has no embedder to compute note embeddings")
        return self.embedder.embed_text(note.embedding_text())

    def put_note(self, note: MemoryNote) -> int:
        with self.lock:
            if note.id is not None:
                if note.id in self.notes:
                    raise DuplicateNoteError(f"note id {note.id} already stored")
                raise StoreError("put_note assigns ids; note.id must be unset")
            if note.embedding is None:
                note.embedding = self._embed(note)
            note.embedding = unit_vector(note.embedding, self.dim)
            self._check_links(None, note.links)
            note.id = self.next_note_id
            note.cluster_id = None
            self.next_note_id += 1
            self.notes[note.id] = note
            self.mutation_seq += 1
            return note.id

    def _check_links(self, owner: int | None, links):
        for target in links:
            if target == owner:
                raise ValueError("a note cannot link to itself")
            if target not in self.notes:
                raise ValueError(f"link target {target} does not exist")

    def update_note(self, note_id: int, **patch) -> MemoryNote:
        """Replace the given fields of one note.

        ``id``, ``timestamp``, ``cluster_id`` and ``embedding`` cannot be
        patched. Changing ``content`` or ``context`` re-embeds the note and
        refreshes its cluster's centroid.
        """
        editable = {"content", "context", "keywords", "tags", "links"}
        with self.lock:
            note = self.get_note(note_id)
            bad = set(patch) - editable
            if bad:
                raise ValueError(f"fields not patchable: {sorted(bad)}")
            if "links" in patch:
                patch["links"] = set(patch["links"])
                self._check_links(note_id, patch["links"])
            reembed = any(k in patch and patch[k] != getattr(note, k) for k in ("content", "context"))
            new_embedding = None
            if reembed:
                probe = MemoryNote(
                    content=patch.get("content", note.content),
                    timestamp=note.timestamp,
                    context=patch.get("context", note.context),
                )
                new_embedding = unit_vector(self._embed(probe), self.dim)
            for key, value in patch.items():
                setattr(note, key, list(value) if key in ("keywords", "tags") else value)
            if new_embedding is not None:
                note.embedding = new_embedding
                if note.cluster_id is not None:
                    self.recompute_centroid(note.cluster_id)
            if note.cluster_id is not None:
                self.touch(note.cluster_id, note_id)
            self.mutation_seq += 1
            self._record("write", note_id)
            return note

    def delete_note(self, note_id: int):
        with self.lock:
            note = self.get_note(note_id)
            if note.cluster_id is not None:
                cluster = self.clusters[note.cluster_id]
                cluster.member_ids.remove(note_id)
                if note_id in cluster.recent:
                    cluster.recent.remove(note_id)
                if cluster.member_ids:
                    self.recompute_centroid(cluster.cluster_id)
                else:
                    del self.clusters[cluster.cluster_id]
            del self.notes[note_id]
            for other in self.notes.values():
                other.links.discard(note_id)
            self.mutation_seq += 1

    def unassigned_ids(self) -> list[int]:
        return [i for i, n in self.notes.items() if n.cluster_id is None]

    def assigned_count(self) -> int:
        return sum(1 for n in self.notes.values() if n.cluster_id is not None)

    # -- clusters --------------------------------------------------------

    def get_cluster(self, cluster_id: int) -> Cluster:
        try:
            return self.clusters[cluster_id]
        except KeyError:
            raise ClusterNotFound(cluster_id) from None

    def create_cluster(self, member_ids, profile: ClusterProfile) -> Cluster:
        with self.lock:
            member_ids = list(member_ids)
            if not member_ids:
                raise ValueError("a cluster needs at least one member")
            for nid in member_ids:
                if self.get_note(nid).cluster_id is not None:
                    raise StoreError(f"note {nid} already belongs to a cluster")
            cluster = Cluster(
                cluster_id=self.next_cluster_id,
                member_ids=member_ids,
                centroid=np.zeros(self.dim),
                profile=profile,
                created_at=self.processed,
                recent=list(member_ids),
            )
            self.next_cluster_id += 1
            self.clusters[cluster.cluster_id] = cluster
            for nid in member_ids:
                self.notes[nid].cluster_id = cluster.cluster_id
            self.recompute_centroid(cluster.cluster_id)
            self.mutation_seq += 1
            cluster.profile_seq = self.mutation_seq
            return cluster

    def add_member(self, cluster_id: int, note_id: int):
        with self.lock:
            cluster = self.get_cluster(cluster_id)
            note = self.get_note(note_id)
            if note.cluster_id is not None:
                raise StoreError(f"note {note_id} already belongs to cluster {note.cluster_id}")
            cluster.member_ids.append(note_id)
            note.cluster_id = cluster_id
            cluster._sum = cluster._sum + note.embedding
            cluster.centroid = self._normalized_sum(cluster)
            self.touch(cluster_id, note_id)
            self.mutation_seq += 1

    def remove_cluster(self, cluster_id: int) -> Cluster:
        """Drop a cluster and clear its members' back-references."""
        with self.lock:
            cluster = self.get_cluster(cluster_id)
            for nid in cluster.member_ids:
                self.notes[nid].cluster_id = None
            del self.clusters[cluster_id]
            self.mutation_seq += 1
            return cluster

    def set_profile(self, cluster_id: int, profile: ClusterProfile):
        with self.lock:
            cluster = self.get_cluster(cluster_id)
            cluster.profile = profile
            self.mutation_seq += 1
            cluster.profile_seq = self.mutation_seq

    def touch(self, cluster_id: int, note_id: int):
        cluster = self.clusters[cluster_id]
        if note_id in cluster.recent:
            cluster.recent.remove(note_id)
        cluster.recent.append(note_id)

    def _normalized_sum(self, cluster: Cluster) -> np.ndarray:
        try:
            return unit_vector(cluster._sum)
        except ValueError:
            # members cancel out exactly; fall back to the first member
            return self.notes[cluster.member_ids[0]].embedding.copy()

    def recompute_centroid(self, cluster_id: int) -> np.ndarray:
        cluster = self.get_cluster(cluster_id)
        cluster._sum = np.sum([self.notes[i].embedding for i in cluster.member_ids], axis=0)
        cluster.centroid = self._normalized_sum(cluster)
        return cluster.centroid

    def member_embeddings(self, cluster_id: int) -> np.ndarray:
        return np.array([self.notes[i].embedding for i in self.get_cluster(cluster_id).member_ids])

    def membership(self) -> dict[int, list[int]]:
        return {cid: list(c.member_ids) for cid, c in sorted(self.clusters.items())}

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "notes": [self.notes[i].to_dict() for i in sorted(self.notes)],
            "clusters": [self.clusters[c].to_dict() for c in sorted(self.clusters)],
            "frozen_centroids": {str(c): [float(x) for x in v] for c, v in sorted(self.frozen_centroids.items())},
            "counters": {
                "next_note_id": self.next_note_id,
                "next_cluster_id": self.next_cluster_id,
                "processed": self.processed,
                "mutation_seq": self.mutation_seq,
            },
        }

    def _load_dict(self, data: dict):
        """Parse a snapshot body into fresh containers; raises on any defect."""
        notes = {}
        for raw in data["notes"]:
            note = MemoryNote.from_dict(raw)
            if note.embedding is not None and note.embedding.shape[0] != self.dim:
                raise DimensionMismatch(f"note {note.id} has dimension {note.embedding.shape[0]}")
            notes[note.id] = note
        clusters = {}
        for raw in data["clusters"]:
            cluster = Cluster(
                cluster_id=raw["cluster_id"],
                member_ids=list(raw["member_ids"]),
                centroid=np.zeros(self.dim),
                profile=ClusterProfile.from_dict(raw["profile"]),
                created_at=raw["created_at"],
                recent=list(raw.get("recent", raw["member_ids"])),
                profile_seq=raw.get("profile_seq", 0),
            )
            for nid in cluster.member_ids:
                if notes[nid].cluster_id != cluster.cluster_id:
                    raise ValueError(f"note {nid} back-reference disagrees with cluster {cluster.cluster_id}")
            clusters[cluster.cluster_id] = cluster
        for note in notes.values():
            if note.cluster_id is not None and note.id not in clusters[note.cluster_id].member_ids:
                raise ValueError(f"note {note.id} claims cluster {note.cluster_id} which does not list it")
        counters = data["counters"]
        frozen = {int(c): unit_vector(v, self.dim) for c, v in data.get("frozen_centroids", {}).items()}
        return notes, clusters, counters, frozen

    def load_dict(self, data: dict):
        try:
            notes, clusters, counters, frozen = self._load_dict(data)
            next_note_id = int(counters["next_note_id"])
            next_cluster_id = int(counters["next_cluster_id"])
            processed = int(counters["processed"])
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise SnapshotError(f"malformed snapshot: {exc!r}") from exc
        with self.lock:
            self.notes = notes
            self.clusters = clusters
            self.frozen_centroids = frozen
            self.next_note_id = next_note_id
            self.next_cluster_id = next_cluster_id
            self.processed = processed
            self.mutation_seq = int(counters.get("mutation_seq", 0))
            for cid in self.clusters:
                self.recompute_centroid(cid)

    def snapshot(self, path, config=None):
        config_echo = {"embedding_dim": self.dim} if config is None else config.to_dict()
        document = {"version": SNAPSHOT_VERSION, "config": config_echo}
        document.update(self.to_dict())
        write_json_atomic(path, document)

    def load(self, path) -> dict:
        """Replace this store's state from a snapshot; returns the document.

        On any error the store is left untouched.
        """
        document = read_snapshot(path)
        self.load_dict(document)
        return document

    @classmethod
    def restore(cls, path, embedder=None) -> "MemoryStore":
        document = read_snapshot(path)
        dim = _snapshot_dim(document)
        store = cls(dim, embedder=embedder)
        store.load_dict(document)
        return store

    def write_notes_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for nid in sorted(self.notes):
                fh.write(json.dumps(self.notes[nid].to_dict()) + "\n")


def read_notes_jsonl(path) -> list[MemoryNote]:
    notes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                notes.append(MemoryNote.from_dict(json.loads(line)))
    return notes


def write_json_atomic(path, document):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(document, sort_keys=True))
    os.replace(tmp, path)


def read_snapshot(path) -> dict:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    if not isinstance(document, dict):
        raise SnapshotError("snapshot must be a JSON object")
    if document.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {document.get('version')!r}")
    for key in ("notes", "clusters", "counters"):
        if key not in document:
            raise SnapshotError(f"snapshot missing {key!r}")
    return document


def _snapshot_dim(document: dict) -> int:
    config = document.get("config") or {}
    if "embedding_dim" in config:
        return int(config["embedding_dim"])
    for note in document["notes"]:
        if note.get("embedding") is not None:
            return len(note["embedding"])
    raise SnapshotError("snapshot does not record an embedding dimension")
