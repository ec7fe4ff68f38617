"""A rule-based stand-in for the model that reads its own prompts.

Useful when a decision table would be impractical (long synthetic streams):
every reply is a pure function of the prompt text, so runs stay replayable.
"""
from __future__ import annotations

import json
import re

from .text import first_sentence, frequent_terms, tokenize

_CLUSTER = re.compile(r"^- cluster_(\d+)$", re.MULTILINE)
_NOTE = re.compile(r"^- note_(\d+):", re.MULTILINE)


def _field(prompt: str, label: str) -> str:
    m = re.search(rf"^{label}: (.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else ""


class HeuristicStub:
    kind = "scripted_stub"

    def __init__(self):
        self.calls: list[tuple[str, str]] = []

    def complete(self, role: str, prompt: str) -> str:
        self.calls.append((role, prompt))
        return getattr(self, f"_{role}")(prompt)

    def _annotator(self, prompt):
        content = _field(prompt, "Memory")
        keywords = frequent_terms([content], 5) or tokenize(content)[:5] or ["memory"]
        return json.dumps({
            "keywords": keywords,
            "tags": keywords[:3],
            "context": " ".join(keywords[:3]),
        })

    def _router(self, prompt):
        # candidates are listed by descending similarity
        ids = _CLUSTER.findall(prompt)
        return json.dumps({"choice": f"cluster_{ids[0]}" if ids else ""})

    def _selector(self, prompt):
        ids = _CLUSTER.findall(prompt)
        return json.dumps({"selected_clusters": [f"cluster_{ids[0]}"] if ids else []})

    def _profiler(self, prompt):
        samples = [line[2:] for line in prompt.splitlines() if line.startswith("- ")]
        terms = frequent_terms(samples, 3)
        while len(terms) < 3:
            terms.append(("alpha", "beta", "gamma")[len(terms)])
        return json.dumps({"summary": f"Memories about {terms[0]} and {terms[1]}.", "tags": terms})

    def _evolver(self, prompt):
        _, _, neighbor_part = prompt.partition("Related memories")
        ids = _NOTE.findall(neighbor_part)
        return json.dumps({"links": [f"note_{i}" for i in ids], "revisions": []})

    def _answerer(self, prompt):
        question = _field(prompt, "Question")
        m = re.search(r"^\[1\] \([^)]*\) (.*)$", prompt, re.MULTILINE)
        if not m:
            return "unknown"
        asked = set(tokenize(question))
        words = [w for w in tokenize(m.group(1)) if w not in asked]
        return " ".join(words[:2]) or first_sentence(m.group(1))
