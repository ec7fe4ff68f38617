import json

import numpy as np
import pytest

from helpers import CASE_QUERY, case_study_engine, heuristic_gateway

from clustermem import EngineConfig, HashingEmbedder, MemoryEngine, ScriptedStub, SlmGateway
from clustermem.evolution import local_neighbors, run_evolution
from clustermem.retrieval import FLAT_FALLBACK, GLOBAL, TWO_STAGE, search_space_reduction
from clustermem.store import ClusterProfile, MemoryNote, MemoryStore
from clustermem.stubs import HeuristicStub
from clustermem.synthetic import SyntheticSpec, generate

PROFILE = ClusterProfile("p", ("a", "b", "c"))


def _store_with_cluster(texts):
    store = MemoryStore(64, embedder=HashingEmbedder(64))
    ids = [store.put_note(MemoryNote(content=t, timestamp=str(i), keywords=["k"])) for i, t in enumerate(texts)]
    store.create_cluster(ids, PROFILE)
    return store, ids


def test_local_neighbors_ranked_and_limited():
    store, ids = _store_with_cluster(["red apple pie", "red apple tart", "green apple", "blue sky", "red apple pie a"])
    hood = local_neighbors(store, ids[0], 2)
    assert hood.neighbor_ids == [4, 1]
    assert hood.similarities == sorted(hood.similarities, reverse=True)


def test_local_neighbors_tie_goes_to_smaller_id():
    store, ids = _store_with_cluster(["same words", "same words", "same words"])
    assert local_neighbors(store, ids[2], 2).neighbor_ids == [0, 1]


def test_local_scope_ignores_other_clusters():
    store, ids = _store_with_cluster(["apple one", "apple two"])
    other = store.put_note(MemoryNote(content="apple one", timestamp="x"))
    store.create_cluster([other], ClusterProfile("q", ("d", "e", "f")))
    assert other not in local_neighbors(store, ids[0], 5).neighbor_ids
    assert other in local_neighbors(store, ids[0], 5, scope="global").neighbor_ids


def test_evolution_links_new_note_and_revises_neighbors_only_in_metadata():
    store, ids = _store_with_cluster(["apple one", "apple two", "apple three"])
    reply = {"links": ["note_0", "note_1"],
             "revisions": [{"id": "note_1", "context": "Updated context.", "tags": ["fruit"], "keywords": ["apple"]}]}
    gateway = SlmGateway(ScriptedStub({"evolver": json.dumps(reply),
                                       "profiler": '{"summary": "Apples.", "tags": ["apple", "fruit", "food"]}'}))
    before_content = store.notes[1].content
    report = run_evolution(store, gateway, ids[2], EngineConfig(embedding_dim=64))
    assert store.notes[2].links == {0, 1}
    assert store.notes[0].links == set() and store.notes[1].links == set()
    assert store.notes[1].context == "Updated context." and store.notes[1].content == before_content
    assert report.links_added == 2 and report.notes_revised == 1 and report.profile_refreshed
    assert store.clusters[0].profile.summary == "Apples."


def test_evolution_fallback_changes_nothing():
    store, ids = _store_with_cluster(["apple one", "apple two"])
    before = store.to_dict()
    gateway = SlmGateway(ScriptedStub({"evolver": "garbage"}))
    report = run_evolution(store, gateway, ids[1], EngineConfig(embedding_dim=64))
    assert report.fallback_used and store.to_dict() == before


def test_evolution_is_idempotent_on_links():
    store, ids = _store_with_cluster(["apple one", "apple two"])
    gateway = SlmGateway(ScriptedStub([], fallback=HeuristicStub()))
    cfg = EngineConfig(embedding_dim=64)
    run_evolution(store, gateway, ids[1], cfg)
    second = run_evolution(store, gateway, ids[1], cfg)
    assert store.notes[1].links == {0} and second.links_added == 0


def test_audit_file_rows(tmp_path):
    audit = tmp_path / "audit.jsonl"
    data = generate(SyntheticSpec(topic_count=3, notes_per_topic=12))
    engine = MemoryEngine(EngineConfig.desk_defaults(), gateway=heuristic_gateway(), audit_path=audit)
    for item in data.stream:
        engine.add_memory(item.content, item.timestamp)
    rows = [json.loads(line) for line in audit.read_text().splitlines()]
    assert len(rows) == 6
    assert all(r["scope"] == "local" and r["cluster_id"] is not None for r in rows)


# -- retrieval -------------------------------------------------------------


@pytest.mark.parametrize("searched,total,expected", [(119, 680, 1 - 119 / 680), (680, 680, 0.0), (0, 5, 1.0)])
def test_search_space_reduction(searched, total, expected):
    assert search_space_reduction(searched, total) == pytest.approx(expected)


def test_search_space_reduction_errors():
    with pytest.raises(ValueError):
        search_space_reduction(1, 0)
    with pytest.raises(ValueError):
        search_space_reduction(7, 5)


def test_two_stage_searches_only_selected_clusters():
    engine = case_study_engine()
    result = engine.retrieve(CASE_QUERY)
    assert result.mode == TWO_STAGE
    members = set(engine.store.clusters[0].member_ids)
    assert set(result.note_ids) <= members and len(result.note_ids) == 10
    assert 0 in result.note_ids  # the note naming both books
    assert result.query_tags == ["books", "writing", "novels"]


def test_global_mode_ranks_whole_store():
    engine = case_study_engine()
    result = engine.retrieve(CASE_QUERY, mode=GLOBAL)
    assert result.mode == GLOBAL and result.searched_count == 680 and result.selected_cluster_ids == []
    scores = [s for _, s in result.ranked_notes]
    assert scores == sorted(scores, reverse=True)


def test_empty_selection_falls_back_to_nearest_candidate():
    engine = case_study_engine()
    engine.gateway.backend.rules.insert(0, {"role": "selector", "match": None, "response": '{"selected_clusters": []}'})
    result = engine.retrieve(CASE_QUERY)
    assert result.empty_selection_fallback
    assert result.selected_cluster_ids == result.candidate_cluster_ids[:1]


def test_flat_fallback_before_initialization():
    engine = MemoryEngine(EngineConfig.desk_defaults(), gateway=heuristic_gateway())
    for i in range(5):
        engine.add_memory(f"early note number {i}", str(i))
    result = engine.retrieve("early note")
    assert result.mode == FLAT_FALLBACK and result.searched_count == 5 and result.r_reduction == 0.0


def test_empty_store_returns_empty_result():
    engine = MemoryEngine(EngineConfig.desk_defaults(), gateway=heuristic_gateway())
    result = engine.retrieve("anything")
    assert result.ranked_notes == [] and result.total_count == 0


def test_query_tags_generated_once_per_query():
    stub = ScriptedStub([], fallback=HeuristicStub())
    engine = MemoryEngine(EngineConfig.desk_defaults(), gateway=SlmGateway(stub))
    for i in range(3):
        engine.add_memory(f"note {i} about things", str(i))
    stub.calls.clear()
    engine.retrieve("things?")
    engine.retrieve("things?", mode=GLOBAL)
    assert sum(1 for role, _ in stub.calls if role == "annotator") == 1


def test_top_k_respected():
    engine = case_study_engine()
    assert len(engine.retrieve(CASE_QUERY, k=3).ranked_notes) == 3


def test_result_serializes():
    engine = case_study_engine()
    data = json.loads(json.dumps(engine.retrieve(CASE_QUERY).to_dict()))
    assert data["selected_cluster_ids"] == [0] and data["r_reduction"] == pytest.approx(0.825, abs=5e-4)


def test_stage2_accepts_embedding_or_text():
    engine = case_study_engine()
    vec = engine.embedder.embed_text("wizard dragon")
    by_vec = engine.retriever.stage2_retrieve(vec, [0], 5)
    by_text = engine.retriever.stage2_retrieve("wizard dragon", [0], 5)
    assert by_vec == by_text
    assert np.all(np.diff([s for _, s in by_vec]) <= 0)
