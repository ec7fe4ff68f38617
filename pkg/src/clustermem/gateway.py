"""Every interaction with the small language model.

The :class:`SlmGateway` renders role prompts, parses the replies with a
repair ladder (strict JSON, then the first balanced ``{...}`` block, then a
key regex) and falls back to a documented heuristic when nothing usable
survives. Each model invocation is appended to a :class:`DecisionLog`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from . import prompts
from .store import ClusterProfile, MemoryNote
from .text import STOPWORDS, first_sentence, frequent_terms, tokenize

log = logging.getLogger(__name__)

ROLES = ("router", "profiler", "selector", "evolver", "annotator", "answerer")
FILLER_TAGS = ("memory", "topic", "misc", "general", "notes")


class SlmError(Exception):
    pass


class SlmTransportError(SlmError):
    """The backend could not produce a reply (network, timeout, HTTP error)."""


class UnscriptedCall(SlmError):
    """The scripted stub received a call its decision table does not cover."""


class ParseFailure(ValueError):
    pass


# -- backends --------------------------------------------------------------


class ScriptedStub:
    """Deterministic stand-in that replays a decision table.

    Each rule is ``{"role": ..., "match": substring-or-None, "response": ...}``.
    The first rule whose role equals the call's role and whose ``match`` is
    contained in the prompt wins. ``response`` is the raw reply text, a
    callable ``(prompt) -> str``, or ``{"error": message}`` to simulate a
    transport failure. Calls no rule covers go to ``fallback`` (another
    backend) when one is given, otherwise raise :class:`UnscriptedCall`.
    """

    kind = "scripted_stub"

    def __init__(self, rules, fallback=None):
        self.fallback = fallback
        if isinstance(rules, dict):
            rules = [{"role": role, "match": None, "response": resp} for role, resp in rules.items()]
        self.rules = list(rules)
        for rule in self.rules:
            if rule.get("role") not in ROLES:
                raise ValueError(f"unknown role in decision table: {rule.get('role')!r}")
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_file(cls, path) -> "ScriptedStub":
        """Load a decision table.

        The file holds either a list of rules, a role-to-response mapping, or
        ``{"rules": [...], "fallback": "heuristic"}`` where the fallback names
        the built-in heuristic responder for uncovered calls.
        """
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        fallback = None
        if isinstance(data, dict) and "rules" in data:
            if data.get("fallback") == "heuristic":
                from .stubs import HeuristicStub

                fallback = HeuristicStub()
            elif data.get("fallback") is not None:
                raise ValueError(f"unknown stub fallback {data['fallback']!r}")
            data = data["rules"]
        return cls(data, fallback=fallback)

    def complete(self, role: str, prompt: str) -> str:
        self.calls.append((role, prompt))
        for rule in self.rules:
            if rule["role"] != role:
                continue
            match = rule.get("match")
            if match is not None and match not in prompt:
                continue
            response = rule["response"]
            if callable(response):
                return response(prompt)
            if isinstance(response, dict) and "error" in response:
                raise SlmTransportError(str(response["error"]))
            if not isinstance(response, str):
                return json.dumps(response)
            return response
        if self.fallback is not None:
            return self.fallback.complete(role, prompt)
        raise UnscriptedCall(f"no scripted response for role {role!r}; prompt starts {prompt[:80]!r}")


class ChatCompletionsClient:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    kind = "remote_http"

    def __init__(
        self,
        url: str,
        model: str,
        api_key_env: str = "SLM_API_KEY",
        temperature: float = 0.0,
        max_tokens: int = 512,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._session = session or requests.Session()

    def complete(self, role: str, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with self._slots:
                    response = self._session.post(self.url, json=payload, headers=headers, timeout=self.timeout)
                response.raise_for_status()
                content = response.json()["choices"][0]["message"]["content"]
                if not isinstance(content, str):
                    raise TypeError("message content is not a string")
                return content
            except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = exc
                log.warning("%s call failed (attempt %d): %s", role, attempt + 1, exc)
                if attempt < self.max_retries:
                    time.sleep(self.backoff * 2**attempt)
        raise SlmTransportError(f"chat completion failed after {self.max_retries + 1} attempts: {last_error}")


# -- decision log ----------------------------------------------------------


@dataclass
class DecisionRecord:
    role: str
    prompt_hash: str
    raw_response: str | None
    parsed: object
    fallback_used: bool
    repaired: bool = False
    error: str | None = None


@dataclass
class DecisionLog:
    records: list[DecisionRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def append(self, record: DecisionRecord):
        with self._lock:
            self.records.append(record)

    def __len__(self):
        return len(self.records)

    def count(self, role: str | None = None, fallback: bool | None = None) -> int:
        return sum(
            1
            for r in self.records
            if (role is None or r.role == role) and (fallback is None or r.fallback_used == fallback)
        )


# -- parsing ---------------------------------------------------------------


def _balanced_blocks(text: str):
    """Yield every top-level balanced ``{...}`` substring, string-aware."""
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = depth > 0
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start : i + 1]


def parse_json_object(raw: str, keys) -> tuple[dict, bool]:
    """Return the first JSON object in ``raw`` holding any of ``keys``.

    The boolean is True when the object had to be dug out of surrounding
    text. Raises ParseFailure if no such object exists.
    """
    if not isinstance(raw, str):
        raise ParseFailure("response is not text")
    try:
        obj = json.loads(raw)
        if isinstance(obj, dict) and any(k in obj for k in keys):
            return obj, False
    except (json.JSONDecodeError, RecursionError):
        pass
    for block in _balanced_blocks(raw):
        try:
            obj = json.loads(block)
        except (json.JSONDecodeError, RecursionError):
            continue
        if isinstance(obj, dict) and any(k in obj for k in keys):
            return obj, True
    raise ParseFailure("no JSON object with the expected keys")


def regex_string(raw: str, key: str) -> str:
    m = re.search(r'"%s"\s*:\s*"((?:[^"\\]|\\.)*)"' % re.escape(key), raw)
    if not m:
        raise ParseFailure(f"no string value for {key!r}")
    try:
        return json.loads(f'"{m.group(1)}"')
    except json.JSONDecodeError as exc:
        raise ParseFailure(str(exc)) from exc


def regex_list(raw: str, key: str) -> list:
    m = re.search(r'"%s"\s*:\s*(\[[^\[\]]*\])' % re.escape(key), raw)
    if not m:
        raise ParseFailure(f"no list value for {key!r}")
    try:
        value = json.loads(m.group(1))
    except json.JSONDecodeError:
        value = re.findall(r'"((?:[^"\\]|\\.)*)"', m.group(1))
    return value


def extract(raw: str, key: str, kind: type):
    """The repair ladder for one key. Returns (value, repaired)."""
    try:
        obj, repaired = parse_json_object(raw, [key])
        if key in obj and isinstance(obj[key], kind):
            return obj[key], repaired
    except ParseFailure:
        pass
    if not isinstance(raw, str):
        raise ParseFailure("response is not text")
    value = regex_list(raw, key) if kind is list else regex_string(raw, key)
    return value, True


_REF = {
    "cluster": re.compile(r"^\s*(?:cluster[_\s-]?)?(\d+)\s*$", re.IGNORECASE),
    "note": re.compile(r"^\s*(?:note[_\s-]?)?(\d+)\s*$", re.IGNORECASE),
}


def parse_ref(value, prefix: str) -> int | None:
    """Parse ``cluster_7`` / ``"7"`` / ``7`` into 7; anything else is None."""
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value if value >= 0 else None
    if isinstance(value, str):
        m = _REF[prefix].match(value)
        if m:
            return int(m.group(1))
    return None


def clean_terms(values, single_word: bool = False) -> list[str]:
    """Trimmed, lowercase, de-duplicated strings; non-strings are dropped."""
    out: list[str] = []
    for value in values:
        if not isinstance(value, str):
            continue
        term = " ".join(value.lower().split())
        if single_word:
            words = tokenize(term)
            term = words[0] if words else ""
        if term and term not in out:
            out.append(term)
    return out


def _prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def fallback_profile(snippets, pad_terms=()) -> ClusterProfile:
    summary = snippets[0].strip()[:120] if snippets else ""
    return ClusterProfile(summary=summary, tags=tuple(_pad_tags([], snippets, pad_terms)))


def _pad_tags(tags: list[str], snippets, pad_terms) -> list[str]:
    tags = list(tags[:3])
    pools = (
        clean_terms(pad_terms, single_word=True),
        frequent_terms(snippets, 10),
        list(FILLER_TAGS),
    )
    for pool in pools:
        for term in pool:
            if len(tags) == 3:
                return tags
            if term not in tags and term not in STOPWORDS:
                tags.append(term)
    return tags


@dataclass
class ClusterCandidate:
    cluster_id: int
    profile: ClusterProfile
    snippets: list[str]
    similarity: float


@dataclass
class Annotation:
    keywords: list[str]
    tags: list[str]
    context: str


@dataclass
class EvolutionPlan:
    links: set[int] = field(default_factory=set)
    revisions: list[tuple[int, dict]] = field(default_factory=list)
    fallback_used: bool = False
    called: bool = False


class SlmGateway:
    """Role-specific calls to one backbone model with fallbacks."""

    def __init__(self, backend, decision_log: DecisionLog | None = None):
        self.backend = backend
        self.log = decision_log if decision_log is not None else DecisionLog()

    def _call(self, role: str, prompt: str) -> tuple[str | None, str | None]:
        try:
            return self.backend.complete(role, prompt), None
        except SlmTransportError as exc:
            return None, str(exc)

    def _record(self, role, prompt, raw, parsed, fallback, repaired=False, error=None):
        self.log.append(DecisionRecord(role, _prompt_hash(prompt), raw, parsed, fallback, repaired, error))

    # -- annotator --------------------------------------------------------

    def annotate_note(self, content: str) -> Annotation:
        if not content or not content.strip():
            raise ValueError("cannot annotate empty content")
        prompt = prompts.ANNOTATOR.format(content=content)
        raw, error = self._call("annotator", prompt)
        try:
            if raw is None:
                raise ParseFailure(error)
            keywords, rep1 = extract(raw, "keywords", list)
            keywords = clean_terms(keywords)
            if not keywords:
                raise ParseFailure("empty keywords")
            try:
                tags, rep2 = extract(raw, "tags", list)
                tags = clean_terms(tags)
            except ParseFailure:
                tags, rep2 = [], True
            if not tags:
                tags = keywords[:3]
            context, rep3 = extract(raw, "context", str)
            context = first_sentence(context)
            if not context:
                raise ParseFailure("empty context")
            result = Annotation(keywords, tags, context)
            self._record("annotator", prompt, raw, result, False, rep1 or rep2 or rep3)
        except ParseFailure:
            result = Annotation(frequent_terms([content], 5), [], first_sentence(content))
            if not result.keywords:
                result.keywords = clean_terms(tokenize(content)[:5]) or [content.strip().lower()[:32]]
            self._record("annotator", prompt, raw, result, True, error=error)
        return result

    # -- router -----------------------------------------------------------

    def select_cluster(self, note: MemoryNote, candidates: list[ClusterCandidate]) -> int:
        if not candidates:
            raise ValueError("select_cluster needs at least one candidate")
        if len(candidates) == 1:
            return candidates[0].cluster_id
        valid = {c.cluster_id for c in candidates}
        prompt = prompts.ROUTER.format(
            content=note.content,
            context=note.context,
            tags=", ".join(note.tags),
            candidates_text="\n".join(
                prompts.cluster_block(c.cluster_id, c.profile.summary, c.profile.tags, c.snippets)
                for c in candidates
            ),
        )
        raw, error = self._call("router", prompt)
        try:
            if raw is None:
                raise ParseFailure(error)
            value, repaired = extract(raw, "choice", (str, int))
            choice = parse_ref(value, "cluster")
            if choice not in valid:
                raise ParseFailure(f"choice {value!r} is not a candidate")
            self._record("router", prompt, raw, choice, False, repaired)
            return choice
        except ParseFailure:
            best = max(candidates, key=lambda c: (c.similarity, -c.cluster_id))
            self._record("router", prompt, raw, best.cluster_id, True, error=error)
            return best.cluster_id

    # -- profiler ---------------------------------------------------------

    def generate_profile(self, snippets, pad_terms=()) -> ClusterProfile:
        snippets = [s for s in snippets if s and s.strip()]
        if not snippets:
            raise ValueError("generate_profile needs at least one snippet")
        prompt = prompts.PROFILER.format(samples_text="\n".join(f"- {s}" for s in snippets))
        raw, error = self._call("profiler", prompt)
        try:
            if raw is None:
                raise ParseFailure(error)
            summary, rep1 = extract(raw, "summary", str)
            summary = first_sentence(summary)
            if not summary:
                raise ParseFailure("empty summary")
            try:
                tags, rep2 = extract(raw, "tags", list)
                tags = clean_terms(tags, single_word=True)
            except ParseFailure:
                tags, rep2 = [], True
            repaired = rep1 or rep2 or len(tags) != 3
            profile = ClusterProfile(summary=summary, tags=tuple(_pad_tags(tags, snippets, pad_terms)))
            self._record("profiler", prompt, raw, profile.to_dict(), False, repaired)
            return profile
        except ParseFailure:
            profile = fallback_profile(snippets, pad_terms)
            self._record("profiler", prompt, raw, profile.to_dict(), True, error=error)
            return profile

    # -- retrieval selector -----------------------------------------------

    def select_retrieval_clusters(self, query: str, query_tags, candidates: list[ClusterCandidate], top_n: int) -> list[int]:
        if not candidates:
            return []
        order = [c.cluster_id for c in candidates]
        prompt = prompts.SELECTOR.format(
            top_n=top_n,
            query=query,
            query_tags=", ".join(query_tags),
            candidate_clusters_text="\n".join(
                prompts.cluster_block(c.cluster_id, c.profile.summary, c.profile.tags, c.snippets)
                for c in candidates
            ),
        )
        raw, error = self._call("selector", prompt)
        try:
            if raw is None:
                raise ParseFailure(error)
            values, repaired = extract(raw, "selected_clusters", list)
            selected: list[int] = []
            for value in values:
                ref = parse_ref(value, "cluster")
                if ref in order and ref not in selected:
                    selected.append(ref)
            if values and not selected:
                raise ParseFailure("no selected id is a candidate")
            selected = selected[:top_n]
            self._record("selector", prompt, raw, selected, False, repaired or len(selected) != len(values))
            return selected
        except ParseFailure:
            self._record("selector", prompt, raw, order, True, error=error)
            return order

    # -- evolver ----------------------------------------------------------

    def evolve_neighborhood(self, new_note: MemoryNote, neighbors: list[MemoryNote]) -> EvolutionPlan:
        if not neighbors:
            return EvolutionPlan()
        valid = {n.id for n in neighbors}
        prompt = prompts.EVOLVER.format(
            new_note_text=prompts.note_block(new_note),
            neighbors_text="\n".join(prompts.note_block(n) for n in neighbors),
        )
        raw, error = self._call("evolver", prompt)
        try:
            if raw is None:
                raise ParseFailure(error)
            plan, repaired = self._parse_evolution(raw, valid)
            plan.called = True
            self._record("evolver", prompt, raw, _plan_summary(plan), False, repaired)
            return plan
        except ParseFailure:
            self._record("evolver", prompt, raw, None, True, error=error)
            return EvolutionPlan(fallback_used=True, called=True)

    def _parse_evolution(self, raw: str, valid: set[int]) -> tuple[EvolutionPlan, bool]:
        try:
            obj, repaired = parse_json_object(raw, ["links", "revisions"])
        except ParseFailure:
            links_raw = regex_list(raw, "links")
            obj, repaired = {"links": links_raw}, True
        links_raw = obj.get("links", [])
        revisions_raw = obj.get("revisions", [])
        if not isinstance(links_raw, list) or not isinstance(revisions_raw, list):
            raise ParseFailure("links and revisions must be lists")
        plan = EvolutionPlan()
        for value in links_raw:
            ref = parse_ref(value, "note")
            if ref in valid:
                plan.links.add(ref)
        seen = set()
        for item in revisions_raw:
            if not isinstance(item, dict):
                continue
            ref = parse_ref(item.get("id"), "note")
            if ref not in valid or ref in seen:
                continue
            fields = {}
            if isinstance(item.get("context"), str) and item["context"].strip():
                fields["context"] = first_sentence(item["context"])
            for key in ("tags", "keywords"):
                if isinstance(item.get(key), list):
                    terms = clean_terms(item[key])
                    if terms:
                        fields[key] = terms
            if fields:
                seen.add(ref)
                plan.revisions.append((ref, fields))
        offered = len(links_raw) + len(revisions_raw)
        if offered and not plan.links and not plan.revisions:
            raise ParseFailure("nothing in the evolution reply refers to a neighbor")
        dropped = offered != len(plan.links) + len(plan.revisions)
        return plan, repaired or dropped

    # -- answerer ---------------------------------------------------------

    def answer_query(self, question: str, notes) -> str:
        memories = "\n".join(f"[{i + 1}] ({n.timestamp}) {n.content}" for i, n in enumerate(notes)) or "(none)"
        prompt = prompts.ANSWERER.format(memories_text=memories, question=question)
        try:
            raw = self.backend.complete("answerer", prompt)
        except SlmTransportError as exc:
            self._record("answerer", prompt, None, None, False, error=str(exc))
            raise
        answer = raw.strip() if isinstance(raw, str) else ""
        self._record("answerer", prompt, raw, answer, False)
        return answer


def _plan_summary(plan: EvolutionPlan) -> dict:
    return {"links": sorted(plan.links), "revisions": [[i, f] for i, f in plan.revisions]}
