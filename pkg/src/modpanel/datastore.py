"""Dataset ingestion, stratified splits, append-only trace persistence, and
the moderator review queue.

Storage is line-delimited JSON logs plus in-memory indexes rebuilt at
startup. Appends to each log are funneled through one lock (single writer);
reads go to the in-memory index. Queue resolutions are append-only audit
events beside the traces, never mutations of them.
"""

from __future__ import annotations

import errno
import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .core import EngineError, ModerationItem, validate_item
from .explanation import (
    DecisionTrace,
    derive_recommendation,
    trace_from_dict,
    trace_to_dict,
)

logger = logging.getLogger(__name__)


class FileUnreadable(EngineError):
    code = "file_unreadable"


class NotFound(EngineError):
    code = "not_found"


class StorageFull(EngineError):
    code = "storage_full"


class AlreadyResolved(EngineError):
    code = "already_resolved"


class EmptyStratum(EngineError):
    code = "empty_stratum"


@dataclass(frozen=True)
class IngestResult:
    """Validated items plus a per-line rejection report; rejects never
    abort the run."""

    items: tuple[ModerationItem, ...]
    accepted: int
    rejected: tuple[tuple[int, str, str], ...]  # (line number, code, message)
    source: str


def ingest(path: str | Path) -> IngestResult:
    """Read one line-delimited JSON dataset file, validating every record."""
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    items: list[ModerationItem] = []
    rejected: list[tuple[int, str, str]] = []
    for lineno, line in enumerate(raw_lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise EngineError("record is not a JSON object")
            items.append(validate_item(record))
        except EngineError as exc:
            rejected.append((lineno, exc.code, str(exc)))
        except json.JSONDecodeError as exc:
            rejected.append((lineno, "malformed_json", str(exc)))
    if not items:
        logger.warning("ingested empty dataset from %s", path)
    return IngestResult(
        items=tuple(items),
        accepted=len(items),
        rejected=tuple(rejected),
        source=str(path),
    )


def stratified_split(
    items: Sequence[ModerationItem],
    ratio: float,
    strata_key: str,
    seed: int,
) -> tuple[list[ModerationItem], list[ModerationItem]]:
    """Split into (train, test) with per-stratum proportions within one item
    of the global ratio. Disjoint, exhaustive, deterministic per seed."""
    if not 0 < ratio < 1:
        raise EngineError("split ratio must lie in (0, 1)", field="ratio")
    if strata_key not in ("subreddit", "norm_violation"):
        raise EngineError(f"unknown strata key {strata_key!r}", field="strata_key")
    strata: dict[str, list[ModerationItem]] = {}
    for item in items:
        value = getattr(item, strata_key)
        if value is None:
            raise EmptyStratum(f"item {item.item_id} has no {strata_key}")
        strata.setdefault(value, []).append(item)
    if not strata:
        raise EmptyStratum("dataset has no items to split")
    train: list[ModerationItem] = []
    test: list[ModerationItem] = []
    for name in sorted(strata):
        members = sorted(strata[name], key=lambda i: i.item_id)
        # Per-stratum RNG keyed on (seed, stratum) so adding a stratum never
        # reshuffles the others.
        rng = random.Random(f"{seed}:{name}")
        rng.shuffle(members)
        n_train = round(len(members) * ratio)
        train.extend(members[:n_train])
        test.extend(members[n_train:])
    return train, test


def _append_line(path: Path, payload: str) -> None:
    try:
        with path.open("a", encoding="utf-8") as handle:
            handle.write(payload + "\n")
            handle.flush()
    except OSError as exc:
        if exc.errno in (errno.ENOSPC, errno.EDQUOT):
            raise StorageFull(f"cannot append to {path}: {exc}") from exc
        raise


class TraceStore:
    """Append-only trace log: one serialized trace per line, indexed in
    memory by id. The file is never rewritten; every operation appends."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._traces: dict[str, DecisionTrace] = {}
        self._recommendations: dict[str, str] = {}
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with self.path.open("r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                envelope = json.loads(line)
                trace = trace_from_dict(envelope["trace"])
                self._traces[trace.trace_id.value] = trace
                self._recommendations[trace.trace_id.value] = envelope["recommendation"]

    def append(self, trace: DecisionTrace) -> None:
        recommendation, _ = derive_recommendation(trace)
        envelope = {"trace": trace_to_dict(trace), "recommendation": recommendation.value}
        with self._lock:
            _append_line(self.path, json.dumps(envelope, ensure_ascii=False))
            self._traces[trace.trace_id.value] = trace
            self._recommendations[trace.trace_id.value] = recommendation.value

    def get(self, trace_id: str) -> DecisionTrace:
        try:
            return self._traces[trace_id]
        except KeyError:
            raise NotFound(f"no trace {trace_id!r}") from None

    def recommendation(self, trace_id: str) -> str:
        try:
            return self._recommendations[trace_id]
        except KeyError:
            raise NotFound(f"no trace {trace_id!r}") from None

    def __len__(self) -> int:
        return len(self._traces)

    def list(
        self,
        subreddit: str | None = None,
        decision: bool | None = None,
        recommendation: str | None = None,
        since: float | None = None,
        until: float | None = None,
    ) -> list[DecisionTrace]:
        out = []
        for tid, trace in self._traces.items():
            if subreddit is not None and trace.item.subreddit != subreddit:
                continue
            if decision is not None and trace.decision.decision != decision:
                continue
            if recommendation is not None and self._recommendations[tid] != recommendation:
                continue
            if since is not None and trace.created_at < since:
                continue
            if until is not None and trace.created_at > until:
                continue
            out.append(trace)
        return sorted(out, key=lambda t: (t.created_at, t.trace_id.value))


class QueueStatus(str, Enum):
    PENDING = "pending"
    RESOLVED_KEEP = "resolved_keep"
    RESOLVED_REMOVE = "resolved_remove"


@dataclass(frozen=True)
class QueueEntry:
    trace_id: str
    status: QueueStatus
    enqueued_at: float
    resolver: str | None = None
    note: str | None = None
    resolved_at: float | None = None


class ReviewQueue:
    """Human review worklist backed by an append-only event log. Replaying
    the log reconstructs the current state exactly."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._entries: dict[str, QueueEntry] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        trace_id = event["trace_id"]
        if kind == "enqueued":
            if trace_id not in self._entries:
                self._entries[trace_id] = QueueEntry(
                    trace_id=trace_id,
                    status=QueueStatus.PENDING,
                    enqueued_at=event["ts"],
                )
        elif kind == "resolved":
            entry = self._entries[trace_id]
            status = (
                QueueStatus.RESOLVED_KEEP
                if event["action"] == "keep"
                else QueueStatus.RESOLVED_REMOVE
            )
            self._entries[trace_id] = QueueEntry(
                trace_id=trace_id,
                status=status,
                enqueued_at=entry.enqueued_at,
                resolver=event["resolver"],
                note=event.get("note"),
                resolved_at=event["ts"],
            )

    def enqueue(self, trace_id: str, ts: float | None = None) -> QueueEntry:
        """Add a pending entry; enqueuing an already-known trace is a no-op,
        keeping exactly one entry per trace."""
        with self._lock:
            existing = self._entries.get(trace_id)
            if existing is not None:
                return existing
            event = {"event": "enqueued", "trace_id": trace_id, "ts": ts or time.time()}
            _append_line(self.path, json.dumps(event))
            self._apply(event)
            return self._entries[trace_id]

    def resolve(
        self,
        trace_id: str,
        action: str,
        resolver: str,
        note: str | None = None,
        ts: float | None = None,
    ) -> QueueEntry:
        if action not in ("keep", "remove"):
            raise EngineError(f"unknown resolve action {action!r}", field="action")
        with self._lock:
            entry = self._entries.get(trace_id)
            if entry is None:
                raise NotFound(f"no queue entry for trace {trace_id!r}")
            if entry.status is not QueueStatus.PENDING:
                raise AlreadyResolved(f"trace {trace_id!r} was already resolved")
            event = {
                "event": "resolved",
                "trace_id": trace_id,
                "action": action,
                "resolver": resolver,
                "note": note,
                "ts": ts or time.time(),
            }
            _append_line(self.path, json.dumps(event))
            self._apply(event)
            return self._entries[trace_id]

    def get(self, trace_id: str) -> QueueEntry:
        try:
            return self._entries[trace_id]
        except KeyError:
            raise NotFound(f"no queue entry for trace {trace_id!r}") from None

    def entries(self, status: QueueStatus | None = None) -> list[QueueEntry]:
        out = [
            e for e in self._entries.values()
            if status is None or e.status is status
        ]
        return sorted(out, key=lambda e: (e.enqueued_at, e.trace_id))
