import json

import numpy as np
import pytest

from clustermem.embedding import HashingEmbedder, cosine_similarity
from clustermem.engine import cluster_stats
from clustermem.store import (
    ClusterNotFound,
    ClusterProfile,
    DuplicateNoteError,
    MemoryNote,
    MemoryStore,
    NoteNotFound,
    SnapshotError,
    StoreError,
)

PROFILE = ClusterProfile("things", ("one", "two", "three"))


@pytest.fixture
def store():
    return MemoryStore(64, embedder=HashingEmbedder(64))


def _add(store, text, **kw):
    return store.put_note(MemoryNote(content=text, timestamp="t", **kw))


def test_ids_are_sequential_and_never_reused(store):
    ids = [_add(store, f"note {i}") for i in range(6)]
    assert ids == [0, 1, 2, 3, 4, 5]
    store.delete_note(5)
    assert _add(store, "after delete") == 6


def test_put_note_rejects_preset_id(store):
    nid = _add(store, "x")
    with pytest.raises(DuplicateNoteError):
        store.put_note(MemoryNote(content="y", timestamp="t", id=nid))
    with pytest.raises(StoreError):
        store.put_note(MemoryNote(content="y", timestamp="t", id=99))


def test_embedding_uses_content_and_context(store):
    nid = _add(store, "dogs bark", context="pets at home")
    expected = HashingEmbedder(64).embed_text("dogs bark\npets at home")
    assert np.allclose(store.notes[nid].embedding, expected)


def test_update_note_reembeds_and_refreshes_centroid(store):
    a, b = _add(store, "apple pie"), _add(store, "apple tart")
    store.create_cluster([a, b], PROFILE)
    before = store.clusters[0].centroid.copy()
    store.update_note(a, context="fresh orchard fruit")
    assert not np.allclose(store.clusters[0].centroid, before)
    expected = HashingEmbedder(64).embed_text("apple pie\nfresh orchard fruit")
    assert np.allclose(store.notes[a].embedding, expected)
    assert store.clusters[0].recent[-1] == a


def test_update_note_forbids_identity_fields(store):
    nid = _add(store, "x")
    for field in ("id", "timestamp", "cluster_id", "embedding"):
        with pytest.raises(ValueError):
            store.update_note(nid, **{field: None})


def test_links_must_exist_and_not_self(store):
    a, b = _add(store, "a"), _add(store, "b")
    with pytest.raises(ValueError):
        store.update_note(a, links={a})
    with pytest.raises(ValueError):
        store.update_note(a, links={42})
    store.update_note(a, links={b})
    store.delete_note(b)
    assert store.notes[a].links == set()


def test_centroid_is_normalized_member_mean(store):
    ids = [_add(store, t) for t in ("red apple", "green apple", "apple juice")]
    cluster = store.create_cluster(ids[:2], PROFILE)
    store.add_member(cluster.cluster_id, ids[2])
    mean = np.mean([store.notes[i].embedding for i in ids], axis=0)
    assert np.allclose(cluster.centroid, mean / np.linalg.norm(mean))
    assert all(store.notes[i].cluster_id == cluster.cluster_id for i in ids)


def test_note_belongs_to_one_cluster(store):
    a = _add(store, "a")
    store.create_cluster([a], PROFILE)
    with pytest.raises(StoreError):
        store.create_cluster([a], PROFILE)


def test_deleting_last_member_drops_cluster(store):
    a = _add(store, "only")
    store.create_cluster([a], PROFILE)
    store.delete_note(a)
    assert store.clusters == {}
    with pytest.raises(NoteNotFound):
        store.get_note(a)
    with pytest.raises(ClusterNotFound):
        store.get_cluster(0)


def test_profile_needs_three_distinct_tags():
    with pytest.raises(ValueError):
        ClusterProfile("x", ("a", "a", "b"))
    with pytest.raises(ValueError):
        ClusterProfile("x", ("a", "b"))


def test_audit_records_reads_and_writes_only_inside_block(store):
    a = _add(store, "a")
    store.read_note(a)
    with store.audit("evolution"):
        store.read_note(a)
        store.update_note(a, tags=["x"])
    assert store.drain_access_log() == [
        {"tag": "evolution", "op": "read", "note_id": a},
        {"tag": "evolution", "op": "write", "note_id": a},
    ]


def _populated():
    store = MemoryStore(64, embedder=HashingEmbedder(64))
    ids = [_add(store, f"topic {i % 2} word{i}", keywords=["k"], tags=["t"]) for i in range(6)]
    store.create_cluster(ids[::2], PROFILE)
    store.create_cluster(ids[1::2], ClusterProfile("other", ("x", "y", "z")))
    store.update_note(ids[0], links={ids[2]})
    store.processed = 6
    return store


def test_snapshot_round_trip(tmp_path):
    store = _populated()
    path = tmp_path / "snap.json"
    store.snapshot(path)
    restored = MemoryStore.restore(path)
    assert restored.to_dict() == store.to_dict()
    for cid, c in store.clusters.items():
        assert np.allclose(restored.clusters[cid].centroid, c.centroid)
    assert cluster_stats(restored) == cluster_stats(store)
    # the restored store keeps allocating fresh ids
    restored.embedder = HashingEmbedder(64)
    assert _add(restored, "new one") == 6


def test_truncated_snapshot_leaves_store_untouched(tmp_path):
    store = _populated()
    path = tmp_path / "snap.json"
    store.snapshot(path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    target = _populated()
    before = target.to_dict()
    with pytest.raises(SnapshotError):
        target.load(path)
    assert target.to_dict() == before


def test_snapshot_with_inconsistent_membership_rejected(tmp_path):
    store = _populated()
    path = tmp_path / "snap.json"
    store.snapshot(path)
    doc = json.loads(path.read_text())
    doc["notes"][0]["cluster_id"] = 1
    path.write_text(json.dumps(doc))
    with pytest.raises(SnapshotError):
        MemoryStore.restore(path)


def test_snapshot_version_checked(tmp_path):
    store = _populated()
    path = tmp_path / "snap.json"
    store.snapshot(path)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(SnapshotError):
        MemoryStore.restore(path)


def test_empty_store_snapshot(tmp_path):
    path = tmp_path / "empty.json"
    MemoryStore(16).snapshot(path)
    restored = MemoryStore.restore(path)
    assert restored.dim == 16 and len(restored) == 0


def test_cluster_stats_equal_clusters():
    store = MemoryStore(32, embedder=HashingEmbedder(32))
    for c in range(3):
        ids = [_add(store, f"c{c} n{i}") for i in range(10)]
        store.create_cluster(ids, ClusterProfile(f"cluster {c}", ("a", "b", "c")))
    stats = cluster_stats(store)
    assert (stats["count"], stats["mean_size"], stats["std_size"]) == (3, 10.0, 0.0)
    assert stats["min_size"] == stats["max_size"] == 10


def test_cosine_with_centroid_in_unit_range():
    store = _populated()
    for note in store.notes.values():
        sim = cosine_similarity(note.embedding, store.clusters[note.cluster_id].centroid)
        assert -1.0 <= sim <= 1.0
