"""Durable measurement store and model registry.

Measurements live in an append-only JSONL log, one object per line,
fsynced per append so an acknowledged write survives a crash. Recovery
tolerates a torn tail: on open, the log is scanned and truncated back
to the last complete line. There is a single appender (the service
process); readers go through the in-memory index built at open.

Models are immutable once trained, so they get one JSON file each,
written to a temp name and renamed into place.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

from ..records import content_hash


class StoreError(RuntimeError):
    pass


class DuplicateRecordError(StoreError):
    """Same record_id submitted with different content."""

    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"record {record_id!r} already stored with different content")


@dataclass(frozen=True)
class StoredRecord:
    record_id: str
    received_at: datetime
    content_hash: str
    document: dict[str, Any]

    @property
    def label(self) -> str | None:
        return self.document.get("label")

    @property
    def device_id(self) -> str:
        return str(self.document.get("device_id", ""))


class RecordStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.path = self.root / "records.jsonl"
        self._lock = threading.Lock()
        self._index: dict[str, StoredRecord] = {}
        self._order: list[str] = []
        self._recover()
        self._file = open(self.path, "a", encoding="utf-8")

    def _recover(self) -> None:
        """Replay the log, truncating any torn tail from a crash."""
        if not self.path.exists():
            self.path.touch()
            return
        good_end = 0
        with open(self.path, "rb") as f:
            while True:
                line = f.readline()
                if not line:
                    break
                if not line.endswith(b"\n"):
                    break  # torn write, drop it
                try:
                    entry = json.loads(line)
                    stored = StoredRecord(
                        record_id=str(entry["record_id"]),
                        received_at=datetime.fromisoformat(entry["received_at"]),
                        content_hash=str(entry["content_hash"]),
                        document=entry["record"],
                    )
                except (ValueError, KeyError, TypeError):
                    break  # corrupt line: keep everything before it
                if stored.record_id not in self._index:
                    self._order.append(stored.record_id)
                self._index[stored.record_id] = stored
                good_end = f.tell()
        actual = self.path.stat().st_size
        if actual != good_end:
            with open(self.path, "r+b") as f:
                f.truncate(good_end)

    def append(self, document: dict[str, Any]) -> tuple[StoredRecord, bool]:
        """Store a validated record document.

        Returns (stored, created). A resubmission with identical content
        is acknowledged without a second write; the same id with
        different content raises DuplicateRecordError.
        """
        record_id = str(document["record_id"])
        digest = content_hash(document)
        with self._lock:
            existing = self._index.get(record_id)
            if existing is not None:
                if existing.content_hash == digest:
                    return existing, False
                raise DuplicateRecordError(record_id)
            stored = StoredRecord(
                record_id=record_id,
                received_at=datetime.now(timezone.utc),
                content_hash=digest,
                document=document,
            )
            line = json.dumps(
                {
                    "record_id": stored.record_id,
                    "received_at": stored.received_at.isoformat(),
                    "content_hash": digest,
                    "record": document,
                },
                separators=(",", ":"),
            )
            self._file.write(line + "\n")
            self._file.flush()
            os.fsync(self._file.fileno())
            self._index[record_id] = stored
            self._order.append(record_id)
            return stored, True

    def get(self, record_id: str) -> StoredRecord | None:
        with self._lock:
            return self._index.get(record_id)

    def __len__(self) -> int:
        with self._lock:
            return len(self._order)

    def records(
        self,
        *,
        label: str | None = None,
        device: str | None = None,
        since: datetime | None = None,
    ) -> list[StoredRecord]:
        """Records in receipt order, optionally filtered."""
        with self._lock:
            rows = [self._index[rid] for rid in self._order]
        if label is not None:
            rows = [r for r in rows if r.label == label]
        if device is not None:
            rows = [r for r in rows if r.device_id == device]
        if since is not None:
            rows = [r for r in rows if r.received_at >= since]
        return rows

    def close(self) -> None:
        with self._lock:
            self._file.close()


@dataclass
class ModelEntry:
    model_id: str
    status: str  # "training" | "ready" | "failed"
    descriptor: dict[str, Any] = field(default_factory=dict)
    document: dict[str, Any] | None = None
    error: str | None = None


class ModelRegistry:
    """Model descriptors plus serialized forests, one file per model."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._entries: dict[str, ModelEntry] = {}
        for path in sorted(self.root.glob("*.json")):
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
                entry = ModelEntry(
                    model_id=str(payload["model_id"]),
                    status="ready",
                    descriptor=payload["descriptor"],
                    document=payload["model"],
                )
            except (ValueError, KeyError, TypeError):
                continue  # an interrupted write never got renamed; ignore strays
            self._entries[entry.model_id] = entry

    def begin(self, model_id: str, descriptor: dict[str, Any]) -> ModelEntry:
        with self._lock:
            existing = self._entries.get(model_id)
            if existing is not None:
                return existing
            entry = ModelEntry(model_id=model_id, status="training", descriptor=descriptor)
            self._entries[model_id] = entry
            return entry

    def finish(
        self, model_id: str, descriptor: dict[str, Any], document: dict[str, Any]
    ) -> None:
        payload = json.dumps(
            {"model_id": model_id, "descriptor": descriptor, "model": document},
            separators=(",", ":"),
        )
        tmp = self.root / f".{model_id}.tmp"
        final = self.root / f"{model_id}.json"
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, final)
        with self._lock:
            entry = self._entries[model_id]
            entry.status = "ready"
            entry.descriptor = descriptor
            entry.document = document

    def fail(self, model_id: str, error: str) -> None:
        with self._lock:
            entry = self._entries.get(model_id)
            if entry is not None:
                entry.status = "failed"
                entry.error = error

    def get(self, model_id: str) -> ModelEntry | None:
        with self._lock:
            return self._entries.get(model_id)

    def entries(self) -> Iterator[ModelEntry]:
        with self._lock:
            items = list(self._entries.values())
        return iter(items)
