import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import oracle_bleu1, oracle_f1

from clustermem.metrics import (
    answer_tokens,
    bleu1,
    count_chunks,
    evidence_match,
    evidence_prf,
    meteor,
    meteor_from_counts,
    metric_bundle,
    ndcg_at_k,
    normalize_text,
    recall_at_k,
    surface_tokens,
    token_f1,
)

words = st.lists(st.sampled_from(["harry", "potter", "the", "game", "of", "thrones", "dragon", "Book!"]), max_size=8)
phrase = words.map(" ".join)


def test_normalize_text():
    assert normalize_text("  The Cat, sat!  ") == "the cat sat"
    assert normalize_text("The cat", drop_articles=True) == "cat"


def test_partial_answer_hand_values():
    pred, gold = "Harry Potter", "Harry Potter and Game of Thrones"
    assert token_f1(pred, gold) == pytest.approx(0.5)
    assert bleu1(pred, gold) == pytest.approx(math.exp(-2))


def test_exact_answer_scores_one():
    assert token_f1("Paris", "paris.") == 1.0
    assert bleu1("the paris", "the paris") == 1.0


def test_empty_strings():
    assert token_f1("", "") == 1.0
    assert token_f1("", "x") == 0.0 and bleu1("", "x") == 0.0 and meteor("", "x") == 0.0


def test_meteor_identity_penalty():
    # one chunk of two words: 1 - 0.5 * (1/2)^3
    assert meteor("harry potter", "harry potter") == pytest.approx(0.9375)


def test_meteor_from_counts_hand_value():
    p, r = 2 / 3, 2 / 4
    fmean = 10 * p * r / (r + 9 * p)
    assert meteor_from_counts(2, 2, 3, 4) == pytest.approx(fmean * (1 - 0.5 * 1.0))


def test_chunks_counts_runs():
    assert count_chunks([(0, 0), (1, 1), (3, 2)]) == 2
    assert count_chunks([]) == 0


def test_evidence_match_both_directions():
    assert evidence_match("I read Harry Potter yesterday.", "harry potter")
    assert evidence_match("harry", "I read Harry Potter")
    assert not evidence_match("", "x")


def test_evidence_prf_hand_values():
    retrieved = ["talked about harry potter", "pizza night", "rainy day", "car repair"]
    gold = ["harry potter", "game of thrones"]
    p, r, f = evidence_prf(retrieved, gold)
    assert (p, r) == pytest.approx((0.25, 0.5)) and f == pytest.approx(1 / 3)
    assert recall_at_k(retrieved, gold, 2) == 0.5


def test_ndcg_hand_value():
    assert ndcg_at_k(["miss", "harry potter"], ["harry potter"], 2) == pytest.approx(1 / math.log2(3))
    assert ndcg_at_k(["miss"], ["harry potter"], 5) == 0.0


def test_retrieval_metrics_need_evidence():
    with pytest.raises(ValueError):
        evidence_prf(["x"], [])
    with pytest.raises(ValueError):
        recall_at_k(["x"], ["y"], 0)


def test_bundle_omits_retrieval_metrics_without_evidence():
    assert set(metric_bundle("a", "a")) == {"f1", "bleu1", "meteor"}
    full = metric_bundle("a", "a", ["a b"], ["a"])
    assert {"e_prec", "e_recall", "e_f1", "recall@5", "ndcg@10"} <= set(full)


@settings(max_examples=200, deadline=None)
@given(phrase, phrase)
def test_metrics_agree_with_oracles_and_stay_in_range(pred, gold):
    assert token_f1(pred, gold) == pytest.approx(oracle_f1(answer_tokens(pred), answer_tokens(gold)))
    assert bleu1(pred, gold) == pytest.approx(oracle_bleu1(surface_tokens(pred), surface_tokens(gold)))
    for score in (token_f1(pred, gold), bleu1(pred, gold), meteor(pred, gold)):
        assert 0.0 <= score <= 1.0


@settings(max_examples=100, deadline=None)
@given(phrase, phrase)
def test_f1_symmetric_and_self_match(a, b):
    assert token_f1(a, a) == 1.0
    assert token_f1(a, b) == pytest.approx(token_f1(b, a))
    assert normalize_text(normalize_text(a)) == normalize_text(a)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["harry potter", "miss", "other"]), min_size=1, max_size=10), st.integers(1, 10))
def test_recall_monotone_in_k(ranked, k):
    gold = ["harry potter"]
    assert recall_at_k(ranked, gold, k) <= recall_at_k(ranked, gold, k + 1)
    assert 0.0 <= ndcg_at_k(ranked, gold, k) <= 1.0 + 1e-12
