"""Append-only session transcript, checkpoints, and metrics.

One JSON object per line, sequence numbers dense from 1. The transcript is
the evidence base for everything after the run: metrics are computed from
events alone, and the final tree state must be re-derivable by folding the
state-bearing events (see replay_state).

Recovery rule for torn files: the longest prefix of lines that parse and
keep the sequence dense wins; the rest is discarded.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .errors import (
    EmptyInput,
    GraphHashMismatch,
    OutOfOrderCheckpoint,
    SequenceGap,
    SessionStillLive,
    StorageFailure,
)
from .graph import AttackGraph, Finding, SttState, TaskStatus

EVENT_KINDS = (
    "PromptSent",
    "ResponseReceived",
    "ToolOutputSubmitted",
    "StatusChanged",
    "SelectionCommitted",
    "InvalidCommandRecorded",
    "CheckpointMarked",
    "SessionTerminated",
)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class TranscriptEvent:
    sequence: int
    kind: str
    payload: dict
    at: str

    def to_dict(self) -> dict:
        return {"seq": self.sequence, "kind": self.kind, "payload": self.payload, "at": self.at}

    @classmethod
    def from_dict(cls, raw: dict) -> TranscriptEvent:
        return cls(int(raw["seq"]), raw["kind"], raw["payload"], raw["at"])


@dataclass
class Checkpoint:
    label: str
    index: int
    marked_at_event: int


class SessionLog:
    """Event log for one session, optionally persisted to a JSONL file."""

    def __init__(self, path: str | Path | None = None, now: Callable[[], str] = utc_now):
        self.path = Path(path) if path is not None else None
        self.now = now
        self.events: list[TranscriptEvent] = []
        self.checkpoints: list[Checkpoint] = []
        # called after each event lands; an observer may append in turn
        self.observers: list[Callable[[TranscriptEvent], None]] = []
        self._handle = None
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._handle = open(self.path, "a", encoding="utf-8")
            except OSError as err:
                raise StorageFailure(f"cannot open transcript {self.path}: {err}") from err

    # appending

    def append_event(self, event: TranscriptEvent) -> TranscriptEvent:
        expected = self.events[-1].sequence + 1 if self.events else 1
        if event.sequence != expected:
            raise SequenceGap(f"expected sequence {expected}, got {event.sequence}")
        if event.kind not in EVENT_KINDS:
            raise StorageFailure(f"unknown event kind: {event.kind}")
        if self._handle is not None:
            try:
                self._handle.write(json.dumps(event.to_dict()) + "\n")
                self._handle.flush()
                os.fsync(self._handle.fileno())
            except OSError as err:
                raise StorageFailure(f"cannot append to {self.path}: {err}") from err
        self.events.append(event)
        if event.kind == "CheckpointMarked":
            self.checkpoints.append(
                Checkpoint(
                    label=event.payload["label"],
                    index=event.payload["index"],
                    marked_at_event=event.sequence,
                )
            )
        for observer in list(self.observers):
            observer(event)
        return event

    def append(self, kind: str, payload: dict) -> TranscriptEvent:
        sequence = self.events[-1].sequence + 1 if self.events else 1
        return self.append_event(TranscriptEvent(sequence, kind, payload, self.now()))

    def mark_checkpoint(self, label: str, index: int) -> TranscriptEvent:
        if self.checkpoints and index <= self.checkpoints[-1].index:
            raise OutOfOrderCheckpoint(
                f"checkpoint index {index} is not above {self.checkpoints[-1].index}"
            )
        return self.append("CheckpointMarked", {"label": label, "index": index})

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    # queries

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)

    def terminated(self) -> bool:
        return any(e.kind == "SessionTerminated" for e in self.events)

    def termination_outcome(self) -> str | None:
        for event in reversed(self.events):
            if event.kind == "SessionTerminated":
                return event.payload.get("outcome")
        return None

    # recovery

    @classmethod
    def open_existing(cls, path: str | Path, now: Callable[[], str] = utc_now) -> SessionLog:
        """Load a transcript, keeping the longest valid prefix of the file.

        A torn tail (partial write, truncated line, sequence break) is cut
        off, on disk too, so the log can be appended to again.
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as err:
            raise StorageFailure(f"cannot read transcript {path}: {err}") from err

        events: list[TranscriptEvent] = []
        good_bytes = 0
        offset = 0
        while offset < len(data):
            newline = data.find(b"\n", offset)
            if newline == -1:
                break  # no terminator: torn tail
            line = data[offset : newline + 1]
            event = cls._parse_line(line, expected=len(events) + 1)
            if event is None:
                break
            events.append(event)
            good_bytes = newline + 1
            offset = newline + 1

        if good_bytes < len(data):
            try:
                with open(path, "r+b") as handle:
                    handle.truncate(good_bytes)
            except OSError as err:
                raise StorageFailure(f"cannot repair transcript {path}: {err}") from err

        log = cls(path, now=now)
        log.events = events
        log.checkpoints = [
            Checkpoint(e.payload["label"], e.payload["index"], e.sequence)
            for e in events
            if e.kind == "CheckpointMarked"
        ]
        return log

    @staticmethod
    def _parse_line(line: bytes, expected: int) -> TranscriptEvent | None:
        try:
            raw = json.loads(line.decode("utf-8"))
            event = TranscriptEvent.from_dict(raw)
        except (ValueError, KeyError, TypeError):
            return None
        if event.sequence != expected or event.kind not in EVENT_KINDS:
            return None
        return event


# metrics

@dataclass
class SessionMetrics:
    name: str
    mode: str
    subtasks_completed: int
    subtasks_total: int
    queries_total: int
    queries_to_deepest_subtask: int
    outcome: str | None = None

    @property
    def avg_queries_per_completed_subtask(self) -> float | None:
        if self.subtasks_completed == 0:
            return None
        return self.queries_to_deepest_subtask / self.subtasks_completed

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "subtasks_completed": self.subtasks_completed,
            "subtasks_total": self.subtasks_total,
            "queries_total": self.queries_total,
            "queries_to_deepest_subtask": self.queries_to_deepest_subtask,
            "avg_queries_per_completed_subtask": self.avg_queries_per_completed_subtask,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> SessionMetrics:
        return cls(
            name=raw["name"],
            mode=raw["mode"],
            subtasks_completed=int(raw["subtasks_completed"]),
            subtasks_total=int(raw["subtasks_total"]),
            queries_total=int(raw["queries_total"]),
            queries_to_deepest_subtask=int(raw["queries_to_deepest_subtask"]),
            outcome=raw.get("outcome"),
        )


def compute_metrics(log: SessionLog, subtasks_total: int, name: str = "", mode: str = "") -> SessionMetrics:
    """Both benchmark numbers from the transcript alone.

    Queries are PromptSent events. The query count toward the average is
    truncated at the last checkpoint: prompts after the deepest completed
    subtask do not count against it.
    """
    if not log.terminated():
        raise SessionStillLive("metrics are only computed for terminated sessions")
    queries_total = log.count("PromptSent")
    if log.checkpoints:
        cutoff = log.checkpoints[-1].marked_at_event
        queries_to_deepest = sum(
            1 for e in log.events if e.kind == "PromptSent" and e.sequence <= cutoff
        )
    else:
        queries_to_deepest = 0
    return SessionMetrics(
        name=name,
        mode=mode,
        subtasks_completed=len(log.checkpoints),
        subtasks_total=subtasks_total,
        queries_total=queries_total,
        queries_to_deepest_subtask=queries_to_deepest,
        outcome=log.termination_outcome(),
    )


@dataclass
class AggregateReport:
    rows: list[SessionMetrics]
    subtasks_completed: int = 0
    subtasks_total: int = 0
    queries_total: int = 0
    queries_to_deepest_subtask: int = 0

    @property
    def avg_queries_per_completed_subtask(self) -> float | None:
        if self.subtasks_completed == 0:
            return None
        return self.queries_to_deepest_subtask / self.subtasks_completed


def aggregate(rows: list[SessionMetrics]) -> AggregateReport:
    """Sum-based totals; the average divides summed queries by summed subtasks."""
    if not rows:
        raise EmptyInput("no session metrics to aggregate")
    report = AggregateReport(rows=list(rows))
    for row in rows:
        report.subtasks_completed += row.subtasks_completed
        report.subtasks_total += row.subtasks_total
        report.queries_total += row.queries_total
        report.queries_to_deepest_subtask += row.queries_to_deepest_subtask
    return report


# session state file

def save_state(path: str | Path, state: SttState, header: dict) -> None:
    doc = {
        "graph_hash": state.graph.content_hash,
        **header,
        "stt": state.to_dict(),
    }
    try:
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as err:
        raise StorageFailure(f"cannot write state file {path}: {err}") from err


def load_state(path: str | Path, graph: AttackGraph) -> tuple[SttState, dict]:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise StorageFailure(f"cannot read state file {path}: {err}") from err
    if doc.get("graph_hash") != graph.content_hash:
        raise GraphHashMismatch(
            f"state file {path} was recorded against a different graph"
        )
    state = SttState.from_dict(graph, doc["stt"])
    header = {k: v for k, v in doc.items() if k not in ("stt",)}
    return state, header


# replay fold

def replay_state(graph: AttackGraph, events: list[TranscriptEvent]) -> SttState:
    """Rebuild the tree state from transcript events alone.

    Consumes StatusChanged, SelectionCommitted, InvalidCommandRecorded, and
    the parsed findings carried on summarization ResponseReceived events.
    A StatusChanged that matches the current status is a no-op echo of a
    structural operation (selection commit, backtrack) and is skipped.
    """
    state = SttState(graph)
    for event in events:
        kind = event.kind
        payload = event.payload
        if kind == "SelectionCommitted":
            state.commit_selection(payload["chosen"])
        elif kind == "StatusChanged":
            task = payload["task"]
            to = TaskStatus(payload["to"])
            if state.task_states[task].status is to:
                continue
            if to is TaskStatus.FAILED and state.in_progress_task() == task:
                state.fail_and_backtrack()
            else:
                state.set_status(task, to)
        elif kind == "InvalidCommandRecorded":
            state.task_states[payload["task"]].invalid_command_count = payload["count"]
        elif kind == "ResponseReceived":
            parsed = payload.get("parsed") or {}
            for text in parsed.get("key_findings", []):
                focus = state.in_progress_task()
                if focus is not None:
                    state.add_finding(
                        focus,
                        Finding(text=text, source_event=event.sequence, recorded_at=event.at),
                    )
    return state
