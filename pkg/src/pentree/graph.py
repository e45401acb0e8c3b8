"""Attack task graph and per-session run state.

The graph is an immutable catalogue of pentest techniques with "next task"
edges. A session layers mutable state on top: one status per task, findings,
and a selection stack recording which task was chosen at each completed
anchor. All task selection, both by the LLM and by the operator, is
constrained to the candidate sets computed here.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    IllegalTransition,
    NoAnchor,
    NotACandidate,
    NothingInProgress,
    ParseError,
    SecondInProgress,
    TaskNotStarted,
    UnknownTask,
    ValidationError,
)


class TaskStatus(str, Enum):
    TODO = "to-do"
    IN_PROGRESS = "in-progress"
    COMPLETED = "completed"
    FAILED = "failed"

    @property
    def is_terminal(self) -> bool:
        return self in (TaskStatus.COMPLETED, TaskStatus.FAILED)


# The only legal moves. Terminal statuses never change again.
LEGAL_TRANSITIONS: set[tuple[TaskStatus, TaskStatus]] = {
    (TaskStatus.TODO, TaskStatus.IN_PROGRESS),
    (TaskStatus.IN_PROGRESS, TaskStatus.COMPLETED),
    (TaskStatus.IN_PROGRESS, TaskStatus.FAILED),
}

SCHEMA_VERSION = 1

_TASK_FIELDS = {"id", "name", "tactic", "description", "next"}
_DOC_FIELDS = {"schema_version", "initial_task", "tasks"}


@dataclass(frozen=True)
class GraphTask:
    id: str
    name: str
    tactic: str
    description: str
    next: tuple[str, ...] = ()


@dataclass(frozen=True)
class AttackGraph:
    """Validated, immutable task graph.

    content_hash identifies the exact document the graph was loaded from;
    session state files carry it so a snapshot is never re-applied to a
    different graph.
    """

    schema_version: int
    initial_task: str
    tasks: dict[str, GraphTask]
    order: tuple[str, ...]
    warnings: tuple[str, ...]
    content_hash: str

    def __len__(self) -> int:
        return len(self.tasks)


def _validate_document(doc: object) -> tuple[list[str], dict[str, GraphTask], str, tuple[str, ...]]:
    problems: list[str] = []
    if not isinstance(doc, dict):
        return ["document root must be an object"], {}, "", ()

    unknown = set(doc) - _DOC_FIELDS
    if unknown:
        problems.append(f"unknown fields: {', '.join(sorted(unknown))}")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(f"unsupported schema_version: {version!r}")
    raw_tasks = doc.get("tasks")
    if not isinstance(raw_tasks, list):
        problems.append("tasks must be a list")
        raw_tasks = []

    tasks: dict[str, GraphTask] = {}
    order: list[str] = []
    for i, raw in enumerate(raw_tasks):
        if not isinstance(raw, dict):
            problems.append(f"task #{i} must be an object")
            continue
        extra = set(raw) - _TASK_FIELDS
        if extra:
            problems.append(f"task #{i}: unknown fields: {', '.join(sorted(extra))}")
        task_id = raw.get("id")
        if not isinstance(task_id, str) or not task_id:
            problems.append(f"task #{i}: missing id")
            continue
        if task_id in tasks:
            problems.append(f"duplicate task id: {task_id}")
            continue
        name = raw.get("name") or task_id
        tactic = raw.get("tactic") or ""
        description = raw.get("description")
        if not isinstance(description, str) or not description.strip():
            problems.append(f"task {task_id}: description must be non-empty")
            description = ""
        nxt = raw.get("next", [])
        if not isinstance(nxt, list) or not all(isinstance(n, str) for n in nxt):
            problems.append(f"task {task_id}: next must be a list of task ids")
            nxt = []
        tasks[task_id] = GraphTask(task_id, str(name), str(tactic), description, tuple(nxt))
        order.append(task_id)

    # edges resolve, no self loops
    for task in tasks.values():
        for target in task.next:
            if target == task.id:
                problems.append(f"self loop: {task.id} -> {task.id}")
            elif target not in tasks:
                problems.append(f"dangling edge: {task.id} -> {target}")

    initial = doc.get("initial_task")
    if not isinstance(initial, str) or initial not in tasks:
        problems.append(f"initial_task not found: {initial!r}")
        initial = ""

    warnings: list[str] = []
    if initial and not problems:
        reached = {initial}
        frontier = [initial]
        while frontier:
            current = frontier.pop()
            for target in tasks[current].next:
                if target not in reached:
                    reached.add(target)
                    frontier.append(target)
        for task_id in order:
            if task_id not in reached:
                warnings.append(f"unreachable from initial task: {task_id}")

    return problems, tasks, initial, tuple(warnings)


def load_graph(document: str | bytes) -> AttackGraph:
    """Parse and validate a graph document.

    Raises ParseError for malformed JSON and ValidationError listing every
    schema problem found. Unreachable tasks are warnings, not errors.
    """
    if isinstance(document, str):
        document = document.encode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as err:
        raise ParseError(f"not valid JSON: {err}") from err
    problems, tasks, initial, warnings = _validate_document(doc)
    if problems:
        raise ValidationError(problems)
    digest = hashlib.sha256(document).hexdigest()
    return AttackGraph(
        schema_version=SCHEMA_VERSION,
        initial_task=initial,
        tasks=tasks,
        order=tuple(tasks),
        warnings=warnings,
        content_hash=digest,
    )


def load_graph_file(path: str | Path) -> AttackGraph:
    return load_graph(Path(path).read_bytes())


def sample_graph_path() -> Path:
    """Path of the bundled 30-technique sample graph."""
    return Path(__file__).parent / "data" / "attack_graph_sample.json"


@dataclass
class Finding:
    text: str
    source_event: int
    recorded_at: str

    def to_dict(self) -> dict:
        return {"text": self.text, "source_event": self.source_event, "recorded_at": self.recorded_at}

    @classmethod
    def from_dict(cls, raw: dict) -> Finding:
        return cls(raw["text"], int(raw["source_event"]), raw["recorded_at"])


@dataclass
class TaskRunState:
    status: TaskStatus = TaskStatus.TODO
    findings: list[Finding] = field(default_factory=list)
    invalid_command_count: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "findings": [f.to_dict() for f in self.findings],
            "invalid_command_count": self.invalid_command_count,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> TaskRunState:
        return cls(
            status=TaskStatus(raw["status"]),
            findings=[Finding.from_dict(f) for f in raw.get("findings", [])],
            invalid_command_count=int(raw.get("invalid_command_count", 0)),
        )


@dataclass
class SelectionFrame:
    """One level of the selection stack.

    anchor is the completed task whose next edges we selected from, excluded
    holds the tasks ruled out at this level (in the order they were ruled
    out), chosen is the committed pick. chosen is cleared while the level is
    being re-selected after a failure.
    """

    anchor: str
    excluded: list[str] = field(default_factory=list)
    chosen: str | None = None

    def to_dict(self) -> dict:
        return {"anchor": self.anchor, "excluded": list(self.excluded), "chosen": self.chosen}

    @classmethod
    def from_dict(cls, raw: dict) -> SelectionFrame:
        return cls(raw["anchor"], list(raw.get("excluded", [])), raw.get("chosen"))


class BacktrackResult(str, Enum):
    NEW_CANDIDATES = "new-candidates"
    POPPED_FRAME = "popped-frame"
    SESSION_EXHAUSTED = "session-exhausted"


@dataclass
class BacktrackOutcome:
    result: BacktrackResult
    anchor: str | None
    candidates: list[str]


class SttState:
    """Mutable per-session state over an immutable graph.

    Invariants maintained here: at most one task in-progress, terminal
    statuses never change, the in-progress task always equals the top
    frame's chosen (or the initial task when the stack is empty), and every
    selection is drawn from the current candidate set.
    """

    def __init__(self, graph: AttackGraph):
        self.graph = graph
        self.task_states: dict[str, TaskRunState] = {t: TaskRunState() for t in graph.order}
        self.selection_stack: list[SelectionFrame] = []

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SttState):
            return NotImplemented
        return (
            self.graph.content_hash == other.graph.content_hash
            and self.task_states == other.task_states
            and self.selection_stack == other.selection_stack
        )

    def _state(self, task: str) -> TaskRunState:
        try:
            return self.task_states[task]
        except KeyError:
            raise UnknownTask(f"no such task: {task}") from None

    def in_progress_task(self) -> str | None:
        for task_id, state in self.task_states.items():
            if state.status is TaskStatus.IN_PROGRESS:
                return task_id
        return None

    def status_of(self, task: str) -> TaskStatus:
        return self._state(task).status

    def set_status(self, task: str, to: TaskStatus) -> None:
        state = self._state(task)
        if (state.status, to) not in LEGAL_TRANSITIONS:
            raise IllegalTransition(f"{task}: {state.status.value} -> {to.value}")
        if to is TaskStatus.IN_PROGRESS:
            current = self.in_progress_task()
            if current is not None:
                raise SecondInProgress(f"{current} is already in-progress")
            if not self._may_enter_in_progress(task):
                raise IllegalTransition(
                    f"{task}: in-progress must be entered through a selection commit"
                )
        state.status = to

    def _may_enter_in_progress(self, task: str) -> bool:
        # Keeps the stack invariant: only the initial task (empty stack) or
        # the top frame's chosen task may become the focus.
        if not self.selection_stack:
            return task == self.graph.initial_task
        return self.selection_stack[-1].chosen == task

    def add_finding(self, task: str, finding: Finding) -> None:
        state = self._state(task)
        if state.status is TaskStatus.TODO:
            raise TaskNotStarted(f"{task} has not been started")
        state.findings.append(finding)

    def record_invalid_command(self, task: str | None = None) -> int:
        if task is None:
            task = self.in_progress_task()
        if task is None:
            raise NothingInProgress("no task is in-progress")
        state = self._state(task)
        state.invalid_command_count += 1
        return state.invalid_command_count

    def _selectable(self, anchor: str, excluded: list[str]) -> list[str]:
        # Edge order is preserved; anything already terminal anywhere in the
        # session is out, as is anything ruled out at this level.
        out = []
        for target in self.graph.tasks[anchor].next:
            if target in excluded:
                continue
            if self.task_states[target].status is not TaskStatus.TODO:
                continue
            out.append(target)
        return out

    def _current_anchor(self) -> tuple[str, list[str]]:
        if self.in_progress_task() is not None:
            raise NoAnchor("a task is still in-progress")
        if self.selection_stack:
            top = self.selection_stack[-1]
            if top.chosen is not None:
                if self.task_states[top.chosen].status is TaskStatus.COMPLETED:
                    return top.chosen, []
                raise NoAnchor(f"{top.chosen} is not completed")
            return top.anchor, top.excluded
        if self.task_states[self.graph.initial_task].status is TaskStatus.COMPLETED:
            return self.graph.initial_task, []
        raise NoAnchor("the initial task is not completed")

    def candidate_next_tasks(self) -> list[str]:
        """Selectable next tasks at the current anchor, in edge order."""
        anchor, excluded = self._current_anchor()
        return self._selectable(anchor, excluded)

    def current_anchor(self) -> str:
        return self._current_anchor()[0]

    def commit_selection(self, chosen: str) -> str:
        """Make chosen the new focus. Returns the anchor it was chosen from."""
        anchor, _ = self._current_anchor()
        if chosen not in self.candidate_next_tasks():
            raise NotACandidate(f"{chosen} is not a candidate at {anchor}")
        top = self.selection_stack[-1] if self.selection_stack else None
        if top is not None and top.chosen is None:
            top.chosen = chosen
        else:
            self.selection_stack.append(SelectionFrame(anchor=anchor, chosen=chosen))
        self.set_status(chosen, TaskStatus.IN_PROGRESS)
        self.task_states[chosen].invalid_command_count = 0
        return anchor

    def fail_and_backtrack(self) -> BacktrackOutcome:
        """Fail the in-progress task and find the next place to select from.

        Re-selects at the failed task's own anchor first. When an anchor has
        no selectable tasks left the stack pops, ruling out the choice that
        led there at the level above, until candidates appear or the whole
        tree is exhausted.
        """
        task = self.in_progress_task()
        if task is None:
            raise NothingInProgress("no task is in-progress")
        state = self._state(task)
        state.status = TaskStatus.FAILED

        if not self.selection_stack:
            # the initial task itself failed; there is nowhere to go back to
            return BacktrackOutcome(BacktrackResult.SESSION_EXHAUSTED, None, [])

        top = self.selection_stack[-1]
        top.excluded.append(task)
        top.chosen = None

        popped = False
        while True:
            candidates = self._selectable(top.anchor, top.excluded)
            if candidates:
                result = BacktrackResult.POPPED_FRAME if popped else BacktrackResult.NEW_CANDIDATES
                return BacktrackOutcome(result, top.anchor, candidates)
            self.selection_stack.pop()
            popped = True
            if not self.selection_stack:
                candidates = self._selectable(self.graph.initial_task, [])
                if candidates:
                    return BacktrackOutcome(
                        BacktrackResult.POPPED_FRAME, self.graph.initial_task, candidates
                    )
                return BacktrackOutcome(BacktrackResult.SESSION_EXHAUSTED, None, [])
            top = self.selection_stack[-1]
            if top.chosen is not None:
                top.excluded.append(top.chosen)
                top.chosen = None

    def snapshot(self) -> str:
        """Deterministic text rendering of the tree along the selection path.

        Layered numbering, one line per task with its status, findings as
        bullets one indent deeper. At each level the tried-and-failed
        siblings are shown next to the chosen task, in edge order.
        """
        lines: list[str] = []

        def emit(task_id: str, number: str, depth: int) -> None:
            state = self.task_states[task_id]
            name = self.graph.tasks[task_id].name
            lines.append(f"{'    ' * depth}{number}. {name} - ({state.status.value})")
            for finding in state.findings:
                lines.append(f"{'    ' * (depth + 1)}- {finding.text}")

        emit(self.graph.initial_task, "1", 0)
        prefix = "1"
        depth = 1
        for frame in self.selection_stack:
            shown = [
                t
                for t in self.graph.tasks[frame.anchor].next
                if t in frame.excluded or t == frame.chosen
            ]
            chosen_number = None
            for position, task_id in enumerate(shown, start=1):
                number = f"{prefix}.{position}"
                emit(task_id, number, depth)
                if task_id == frame.chosen:
                    chosen_number = number
            if chosen_number is None:
                break
            prefix = chosen_number
            depth += 1
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "task_states": {t: s.to_dict() for t, s in self.task_states.items()},
            "selection_stack": [f.to_dict() for f in self.selection_stack],
        }

    @classmethod
    def from_dict(cls, graph: AttackGraph, raw: dict) -> SttState:
        state = cls(graph)
        for task_id, task_raw in raw.get("task_states", {}).items():
            if task_id not in state.task_states:
                raise UnknownTask(f"state references unknown task: {task_id}")
            state.task_states[task_id] = TaskRunState.from_dict(task_raw)
        state.selection_stack = [SelectionFrame.from_dict(f) for f in raw.get("selection_stack", [])]
        return state


def new_session_state(graph: AttackGraph) -> SttState:
    return SttState(graph)
