"""Answer-quality and retrieval-quality metrics.

Token F1 follows the SQuAD normalization (lowercase, strip punctuation and
the articles a/an/the). BLEU-1 and METEOR work on surface unigrams with
articles kept. METEOR uses exact-match alignment only.
"""
from __future__ import annotations

import math
import re
from collections import Counter

from .text import strip_punctuation

_ARTICLES = re.compile(r"\b(a|an|the)\b")


def normalize_text(text: str, drop_articles: bool = False) -> str:
    text = strip_punctuation(text.lower())
    if drop_articles:
        text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def answer_tokens(text: str) -> list[str]:
    return normalize_text(text, drop_articles=True).split()


def surface_tokens(text: str) -> list[str]:
    return normalize_text(text).split()


def token_f1(prediction: str, gold: str) -> float:
    pred, ref = answer_tokens(prediction), answer_tokens(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def bleu1(prediction: str, gold: str) -> float:
    """Clipped unigram precision times the brevity penalty."""
    pred, ref = surface_tokens(prediction), surface_tokens(gold)
    c, r_len = len(pred), len(ref)
    if c == 0 or r_len == 0:
        return 0.0
    clipped = sum((Counter(pred) & Counter(ref)).values())
    if clipped == 0:
        return 0.0
    p1 = clipped / c
    bp = 1.0 if c > r_len else math.exp(1 - r_len / c)
    return bp * p1


def align_unigrams(pred: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Exact-match alignment, left to right over the prediction.

    Each prediction token takes the reference position right after the
    previous match when that continues a chunk, else the first free one.
    """
    used: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for i, token in enumerate(pred):
        free = [j for j, t in enumerate(ref) if t == token and j not in used]
        if not free:
            continue
        j = free[0]
        if pairs and pairs[-1][0] == i - 1 and pairs[-1][1] + 1 in free:
            j = pairs[-1][1] + 1
        used.add(j)
        pairs.append((i, j))
    return pairs


def count_chunks(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    previous = None
    for i, j in pairs:
        if previous is None or not (i == previous[0] + 1 and j == previous[1] + 1):
            chunks += 1
        previous = (i, j)
    return chunks


def meteor_from_counts(matches: int, chunks: int, pred_len: int, ref_len: int) -> float:
    if matches == 0:
        return 0.0
    precision = matches / pred_len
    recall = matches / ref_len
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1 - penalty)


def meteor(prediction: str, gold: str) -> float:
    pred, ref = surface_tokens(prediction), surface_tokens(gold)
    if not pred or not ref:
        return 0.0
    pairs = align_unigrams(pred, ref)
    return meteor_from_counts(len(pairs), count_chunks(pairs), len(pred), len(ref))


def evidence_match(note_text: str, gold: str) -> bool:
    """Normalized substring match in either direction."""
    a, b = normalize_text(note_text), normalize_text(gold)
    if not a or not b:
        return False
    return b in a or a in b


def evidence_prf(retrieved, gold_evidence) -> tuple[float, float, float]:
    """Evidence precision, recall and F1 for retrieved note texts."""
    gold_evidence = list(gold_evidence)
    retrieved = list(retrieved)
    if not gold_evidence:
        raise ValueError("evidence recall is undefined without gold evidence")
    matched = sum(1 for text in retrieved if any(evidence_match(text, g) for g in gold_evidence))
    covered = sum(1 for g in gold_evidence if any(evidence_match(text, g) for text in retrieved))
    precision = matched / len(retrieved) if retrieved else 0.0
    recall = covered / len(gold_evidence)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def recall_at_k(ranked, gold_evidence, k: int) -> float:
    """Fraction of gold items whose first matching note ranks within ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold_evidence = list(gold_evidence)
    if not gold_evidence:
        raise ValueError("recall@k is undefined without gold evidence")
    ranked = list(ranked)
    hits = 0
    for gold in gold_evidence:
        rank = next((i + 1 for i, text in enumerate(ranked) if evidence_match(text, gold)), math.inf)
        hits += rank <= k
    return hits / len(gold_evidence)


def dcg(relevance, k: int) -> float:
    return sum(rel / math.log2(i + 1) for i, rel in enumerate(relevance[:k], start=1))


def ndcg_at_k(ranked, gold_evidence, k: int) -> float:
    """Binary-relevance nDCG; the ideal ordering puts every relevant note first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold_evidence = list(gold_evidence)
    relevance = [1 if any(evidence_match(text, g) for g in gold_evidence) else 0 for text in ranked]
    ideal = dcg(sorted(relevance, reverse=True), k)
    if ideal == 0:
        return 0.0
    return dcg(relevance, k) / ideal


def metric_bundle(prediction: str, gold_answer: str, ranked_texts=None, gold_evidence=None, ks=(5, 10)) -> dict:
    """All metrics for one record. Retrieval metrics are omitted without evidence."""
    bundle = {"f1": token_f1(prediction, gold_answer), "bleu1": bleu1(prediction, gold_answer),
              "meteor": meteor(prediction, gold_answer)}
    if gold_evidence and ranked_texts is not None:
        p, r, f = evidence_prf(ranked_texts, gold_evidence)
        bundle.update(e_prec=p, e_recall=r, e_f1=f)
        for k in ks:
            bundle[f"recall@{k}"] = recall_at_k(ranked_texts, gold_evidence, k)
            bundle[f"ndcg@{k}"] = ndcg_at_k(ranked_texts, gold_evidence, k)
    return bundle
