"""On-disk QA dataset format.

A dataset is JSON Lines. Two kinds of line are recognised:

* a shared stream: ``{"stream_id": "s1", "memory_stream": [{"content", "timestamp"}, ...]}``
* a QA record: ``{"question", "gold_answer", "gold_evidence": [...]}`` plus either
  ``"stream_id"`` (session style, refers to a shared stream) or an inline
  ``"memory_stream"`` (passage style, the record owns its stream).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass
class MemoryItem:
    content: str
    timestamp: str

    def to_dict(self) -> dict:
        return {"content": self.content, "timestamp": self.timestamp}


@dataclass
class QaRecord:
    question: str
    gold_answer: str
    gold_evidence: list[str] = field(default_factory=list)
    stream_id: str | None = None
    memory_stream: list[MemoryItem] | None = None

    def to_dict(self) -> dict:
        data = {"question": self.question, "gold_answer": self.gold_answer, "gold_evidence": list(self.gold_evidence)}
        if self.stream_id is not None:
            data["stream_id"] = self.stream_id
        if self.memory_stream is not None:
            data["memory_stream"] = [m.to_dict() for m in self.memory_stream]
        return data


@dataclass
class QaDataset:
    records: list[QaRecord] = field(default_factory=list)
    streams: dict[str, list[MemoryItem]] = field(default_factory=dict)
    skipped: int = 0

    def stream_for(self, index: int) -> tuple[str, list[MemoryItem]]:
        """Key and items of the stream record ``index`` is answered against."""
        record = self.records[index]
        if record.memory_stream is not None:
            return f"record:{index}", record.memory_stream
        if record.stream_id in self.streams:
            return f"stream:{record.stream_id}", self.streams[record.stream_id]
        return "none", []

    def all_items(self) -> list[MemoryItem]:
        """Every memory in file order: shared streams, then per-record streams."""
        items = [m for stream in self.streams.values() for m in stream]
        for record in self.records:
            if record.memory_stream is not None:
                items.extend(record.memory_stream)
        return items

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for sid, stream in self.streams.items():
                fh.write(json.dumps({"stream_id": sid, "memory_stream": [m.to_dict() for m in stream]}) + "\n")
            for record in self.records:
                fh.write(json.dumps(record.to_dict()) + "\n")


def _items(raw) -> list[MemoryItem]:
    if not isinstance(raw, list):
        raise DatasetError("memory_stream must be a list")
    items = []
    for entry in raw:
        if not isinstance(entry, dict) or not isinstance(entry.get("content"), str) or not entry["content"].strip():
            raise DatasetError(f"bad memory item {entry!r}")
        items.append(MemoryItem(entry["content"], str(entry.get("timestamp", ""))))
    return items


def parse_line(obj) -> QaRecord | tuple[str, list[MemoryItem]]:
    if not isinstance(obj, dict):
        raise DatasetError("each line must be a JSON object")
    if "question" not in obj:
        if "stream_id" in obj and "memory_stream" in obj:
            return str(obj["stream_id"]), _items(obj["memory_stream"])
        raise DatasetError("line is neither a QA record nor a stream")
    question, answer = obj.get("question"), obj.get("gold_answer")
    if not isinstance(question, str) or not question.strip():
        raise DatasetError("record needs a non-empty question")
    if not isinstance(answer, str) or not answer.strip():
        raise DatasetError("record needs a non-empty gold_answer")
    evidence = obj.get("gold_evidence", [])
    if not isinstance(evidence, list) or not all(isinstance(e, str) for e in evidence):
        raise DatasetError("gold_evidence must be a list of strings")
    stream = _items(obj["memory_stream"]) if obj.get("memory_stream") is not None else None
    stream_id = obj.get("stream_id")
    if stream is None and stream_id is None:
        raise DatasetError("record needs a stream_id or an inline memory_stream")
    return QaRecord(question, answer, list(evidence), None if stream_id is None else str(stream_id), stream)


def load_dataset(path, strict: bool = False) -> QaDataset:
    """Read a dataset file; malformed lines are skipped (or raise when strict)."""
    dataset = QaDataset()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            parsed = parse_line(json.loads(line))
        except (json.JSONDecodeError, DatasetError) as exc:
            if strict:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
            log.warning("%s:%d: skipping malformed line (%s)", path, lineno, exc)
            dataset.skipped += 1
            continue
        if isinstance(parsed, QaRecord):
            dataset.records.append(parsed)
        else:
            sid, items = parsed
            dataset.streams[sid] = items
    # stream lines may follow the records that use them, so resolve at the end
    kept = []
    for record in dataset.records:
        if record.memory_stream is None and record.stream_id not in dataset.streams:
            msg = f"{path}: record {record.question!r} refers to unknown stream {record.stream_id!r}"
            if strict:
                raise DatasetError(msg)
            log.warning("%s; skipping", msg)
            dataset.skipped += 1
            continue
        kept.append(record)
    dataset.records = kept
    return dataset
