"""Shared fixtures and independent oracles for the test suite."""
from __future__ import annotations

import contextlib
import itertools
import json as _json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from clustermem import EngineConfig, HashingEmbedder, MemoryEngine, ScriptedStub, SlmGateway
from clustermem.store import ClusterProfile, MemoryNote, MemoryStore
from clustermem.stubs import HeuristicStub

CASE_QUERY = "Which two mystery novels does Tim particularly enjoy writing about?"
CASE_ANSWER = "Harry Potter and Game of Thrones"
CASE_CLUSTERS = [
    ("Speaker discusses how books create new worlds", ("books", "writing", "fantasy"), 119),
    ("Impact of basketball on community growth", ("basketball", "community", "growth"), 231),
    ("Experience of meeting teammates after a trip", ("teammates", "trip", "reunion"), 330),
]
_CASE_WORDS = [
    "novel chapter author fantasy library story writing wizard dragon plot reading pages".split(),
    "basketball court league dunk rebound coach stadium playoff fans jersey dribble hoop".split(),
    "teammates trip airport reunion hotel flight luggage travel dinner hugs stories bus".split(),
]


def heuristic_gateway() -> SlmGateway:
    return SlmGateway(ScriptedStub([], fallback=HeuristicStub()))


def case_study_store(dim: int = 384) -> MemoryStore:
    """Three clusters of 119, 231 and 330 notes; 680 in total."""
    embedder = HashingEmbedder(dim)
    store = MemoryStore(dim, embedder=embedder)
    rng = np.random.default_rng(7)
    for (summary, tags, size), words in zip(CASE_CLUSTERS, _CASE_WORDS):
        ids = []
        for i in range(size):
            picked = " ".join(rng.choice(words, size=5, replace=False))
            if summary.startswith("Speaker") and i == 0:
                picked = "Tim loves writing about Harry Potter and Game of Thrones novels"
            ids.append(store.put_note(MemoryNote(content=picked, timestamp=f"t{i}", keywords=picked.split()[:3])))
        store.create_cluster(ids, ClusterProfile(summary, tags))
    return store


def case_study_stub() -> ScriptedStub:
    return ScriptedStub([
        {"role": "annotator", "match": "mystery novels",
         "response": {"keywords": ["mystery", "novels", "tim"], "tags": ["books", "writing", "novels"],
                      "context": "Tim's favourite novels to write about."}},
        {"role": "selector", "match": "mystery novels", "response": {"selected_clusters": ["cluster_0"]}},
        {"role": "answerer", "match": "mystery novels", "response": CASE_ANSWER},
    ])


def case_study_engine(config: EngineConfig | None = None) -> MemoryEngine:
    store = case_study_store()
    config = config or EngineConfig()
    return MemoryEngine(config, embedder=store.embedder, gateway=SlmGateway(case_study_stub()), store=store)


# -- oracles -------------------------------------------------------------


def brute_bisection(points) -> tuple[float, tuple[int, ...]]:
    """Minimum two-group inertia by enumerating every split; returns (inertia, group of point 0)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    best = (np.inf, ())
    for r in range(0, n - 1):
        for rest in itertools.combinations(range(1, n), r):
            side = (0,) + rest
            other = [i for i in range(n) if i not in side]
            total = 0.0
            for group in (list(side), other):
                sub = points[group]
                total += float(((sub - sub.mean(axis=0)) ** 2).sum())
            if total < best[0]:
                best = (total, side)
    return best


def partition_inertia(points, groups) -> float:
    points = np.asarray(points, dtype=float)
    return float(sum(((points[g] - points[g].mean(axis=0)) ** 2).sum() for g in groups))


def oracle_f1(pred_tokens, gold_tokens) -> float:
    """Token F1 by explicit matching and removal (no multiset arithmetic)."""
    if not pred_tokens and not gold_tokens:
        return 1.0
    remaining = list(gold_tokens)
    common = 0
    for tok in pred_tokens:
        if tok in remaining:
            remaining.remove(tok)
            common += 1
    if common == 0:
        return 0.0
    p = common / len(pred_tokens)
    r = common / len(gold_tokens)
    return 2 * p * r / (p + r)


def oracle_bleu1(pred_tokens, gold_tokens) -> float:
    if not pred_tokens or not gold_tokens:
        return 0.0
    counts = Counter(gold_tokens)
    clipped = 0
    used: Counter = Counter()
    for tok in pred_tokens:
        if used[tok] < counts[tok]:
            used[tok] += 1
            clipped += 1
    c, r = len(pred_tokens), len(gold_tokens)
    bp = 1.0 if c > r else float(np.exp(1.0 - r / c))
    return bp * clipped / c


# -- local HTTP endpoint ---------------------------------------------------

@contextlib.contextmanager
def local_endpoint(respond):
    """Serve POST requests with ``respond(body, headers) -> (status, payload)``.

    Yields ``(url, requests_seen)``; each seen entry is ``(body, headers)``.
    """
    seen = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = _json.loads(self.rfile.read(length) or b"null")
            seen.append((body, dict(self.headers)))
            status, payload = respond(body, dict(self.headers))
            data = payload.encode() if isinstance(payload, str) else _json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}/v1", seen
    finally:
        server.shutdown()
        server.server_close()
