"""Session object, phase machine, and response parsing.

This module is pure bookkeeping: it owns the legal phase edges, the parsers
that turn model text into structure, and the prompt builders. Driving a
provider, logging transcript events, and operator interaction all live in
runner.py on top of this.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .errors import IllegalTransition, InvalidTarget, WrongMode, WrongPhase
from .graph import AttackGraph, SttState
from .prompts import (
    PLACEHOLDER_FINDINGS,
    PLACEHOLDER_FIRST_TASK,
    PLACEHOLDER_NEXT_TASKS,
    PLACEHOLDER_TARGET,
    PLACEHOLDER_TASK_INFO,
    PromptEnvelope,
    TemplateId,
    format_candidates,
    format_findings,
    format_task_info,
    render,
)


class Phase(str, Enum):
    INITIALIZATION = "initialization"
    AWAITING_TOOL_OUTPUT = "awaiting-tool-output"
    SUMMARIZATION = "summarization"
    STATUS_UPDATE = "status-update"
    SELECTION = "selection"
    COMMAND_GENERATION = "command-generation"
    TERMINATED = "terminated"


class Outcome(str, Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    EXHAUSTED = "exhausted"
    ABORTED = "aborted"


class PipelineMode(str, Enum):
    GUIDED = "guided"
    BASELINE = "baseline"


class ToolClassification(str, Enum):
    OUTPUT = "output"
    INVALID = "invalid"
    SUCCESS = "success"


# The baseline reuses the summarization phase for its free-form reasoning
# turn, which is why SUMMARIZATION has a direct edge to COMMAND_GENERATION.
PHASE_EDGES = frozenset({
    (Phase.INITIALIZATION, Phase.COMMAND_GENERATION),
    (Phase.COMMAND_GENERATION, Phase.AWAITING_TOOL_OUTPUT),
    (Phase.AWAITING_TOOL_OUTPUT, Phase.SUMMARIZATION),
    (Phase.AWAITING_TOOL_OUTPUT, Phase.COMMAND_GENERATION),
    (Phase.AWAITING_TOOL_OUTPUT, Phase.SELECTION),
    (Phase.AWAITING_TOOL_OUTPUT, Phase.STATUS_UPDATE),
    (Phase.SUMMARIZATION, Phase.STATUS_UPDATE),
    (Phase.SUMMARIZATION, Phase.COMMAND_GENERATION),
    (Phase.STATUS_UPDATE, Phase.SELECTION),
    (Phase.STATUS_UPDATE, Phase.COMMAND_GENERATION),
    (Phase.SELECTION, Phase.COMMAND_GENERATION),
})


@dataclass
class SessionConfig:
    max_invalid_commands: int = 5
    repetition_window: int = 3
    auto_select_single: bool = False
    history_turn_budget: int | None = None


class RepetitionWindow:
    """Abort guard: K identical responses in a row means the model is stuck.

    Comparison is on normalized text (whitespace collapsed, case folded) so
    trivial formatting wobble still counts as identical.
    """

    def __init__(self, size: int):
        if size < 2:
            raise ValueError("repetition window must be at least 2")
        self.size = size
        self._window: deque[str] = deque(maxlen=size)

    @staticmethod
    def normalize(text: str) -> str:
        return " ".join(text.split()).lower()

    def observe(self, text: str) -> bool:
        """Record a response; True when the window just filled with copies."""
        self._window.append(self.normalize(text))
        return len(self._window) == self.size and len(set(self._window)) == 1

    def reset(self) -> None:
        self._window.clear()


@dataclass
class SummaryOutcome:
    key_findings: list[str]
    recommendation: str  # "Proceed" or "Continue"
    raw_response: str

    def to_payload(self) -> dict:
        return {"key_findings": self.key_findings, "recommendation": self.recommendation}


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")
_FINDINGS_HEAD = re.compile(r"finding", re.IGNORECASE)
_NEXT_HEAD = re.compile(r"next step|recommend", re.IGNORECASE)
_PROCEED = re.compile(
    r"\bproceed\b|\bmove (?:on|to the next)\b|task (?:is|as) complete", re.IGNORECASE
)
_NEGATED_PROCEED = re.compile(
    r"\b(?:not|never|don't|do not|cannot|can't)\b[^.\n]*\bproceed\b", re.IGNORECASE
)


def parse_summary(text: str) -> SummaryOutcome:
    """Extract findings bullets and the proceed/continue recommendation.

    Never raises; unparseable text yields no findings and Continue, which
    keeps the session on the current task rather than advancing on garbage.
    """
    lines = text.splitlines()
    head = None
    for i, line in enumerate(lines):
        if _FINDINGS_HEAD.search(line):
            head = i
            break
    findings: list[str] = []
    scan = lines[head + 1 :] if head is not None else lines
    for line in scan:
        if _NEXT_HEAD.search(line):
            break
        match = _BULLET.match(line)
        if match:
            findings.append(match.group(1))

    recommendation = "Continue"
    for i, line in enumerate(lines):
        if _NEXT_HEAD.search(line):
            tail = "\n".join(lines[i:])
            if _PROCEED.search(tail) and not _NEGATED_PROCEED.search(tail):
                recommendation = "Proceed"
            break
    return SummaryOutcome(findings, recommendation, text)


def parse_selection(text: str, candidates: list[tuple[str, str]]) -> str | None:
    """Match a selection response against (id, name) candidates.

    Ids are checked before names, both case-insensitively, in candidate
    order, so a response quoting several candidates resolves to the first
    listed one. None when nothing matches.
    """
    low = text.lower()
    for task_id, _name in candidates:
        if task_id.lower() in low:
            return task_id
    for task_id, name in candidates:
        if name and name.lower() in low:
            return task_id
    return None


class BaselinePtt:
    """The baseline's plan text, held as an opaque blob.

    The engine never parses or inspects it; the only legitimate reader is
    the reasoning prompt builder, which feeds it back to the model whole.
    Reads are counted so tests can prove nothing else peeks.
    """

    def __init__(self, initial_text: str):
        self._text = initial_text
        self.revision = 1
        self.reads = 0

    @property
    def text(self) -> str:
        self.reads += 1
        return self._text

    def revise(self, new_text: str) -> None:
        self._text = new_text
        self.revision += 1


@dataclass
class Session:
    mode: PipelineMode
    target: str
    config: SessionConfig
    stt: SttState | None = None
    ptt: BaselinePtt | None = None
    phase: Phase = Phase.INITIALIZATION
    outcome: Outcome | None = None
    termination_reason: str | None = None
    window: RepetitionWindow = None  # type: ignore[assignment]
    current_command: str | None = None
    last_summary: SummaryOutcome | None = None
    proposed_selection: str | None = None

    def __post_init__(self):
        if self.window is None:
            self.window = RepetitionWindow(self.config.repetition_window)

    def enter(self, phase: Phase) -> None:
        if self.phase is Phase.TERMINATED:
            raise IllegalTransition("session already terminated")
        if phase is Phase.TERMINATED:
            raise IllegalTransition("use terminate() to end a session")
        if (self.phase, phase) not in PHASE_EDGES:
            raise IllegalTransition(f"no edge {self.phase.value} -> {phase.value}")
        self.phase = phase

    def terminate(self, outcome: Outcome, reason: str) -> None:
        if self.phase is Phase.TERMINATED:
            raise IllegalTransition("session already terminated")
        self.phase = Phase.TERMINATED
        self.outcome = outcome
        self.termination_reason = reason

    def require_phase(self, *phases: Phase) -> None:
        if self.phase not in phases:
            wanted = " or ".join(p.value for p in phases)
            raise WrongPhase(f"session is in {self.phase.value}, needs {wanted}")

    def require_mode(self, mode: PipelineMode) -> None:
        if self.mode is not mode:
            raise WrongMode(f"session mode is {self.mode.value}, needs {mode.value}")


def new_session(
    mode: PipelineMode,
    target: str,
    config: SessionConfig | None = None,
    graph: AttackGraph | None = None,
) -> Session:
    if not target or not target.strip():
        raise InvalidTarget("target must be a non-empty string")
    config = config or SessionConfig()
    session = Session(mode=mode, target=target.strip(), config=config)
    if mode is PipelineMode.GUIDED:
        if graph is None:
            raise InvalidTarget("guided mode needs a task graph")
        session.stt = SttState(graph)
    return session


# prompt builders

def build_initial_prompt(session: Session) -> PromptEnvelope:
    session.require_mode(PipelineMode.GUIDED)
    graph = session.stt.graph
    first = graph.tasks[graph.initial_task]
    return render(
        TemplateId.INITIAL,
        {
            PLACEHOLDER_TARGET: session.target,
            PLACEHOLDER_FIRST_TASK: format_task_info(first.name, first.description),
        },
    )


def build_summarization_prompt(tool_output: str) -> PromptEnvelope:
    return render(TemplateId.OUTPUT_SUMMARIZATION, {}, appended=(tool_output,))


def build_selection_prompt(session: Session, appended: tuple[str, ...] = ()) -> PromptEnvelope:
    session.require_mode(PipelineMode.GUIDED)
    stt = session.stt
    anchor = stt.current_anchor()
    findings = [f.text for f in stt.task_states[anchor].findings]
    graph = stt.graph
    candidates = [
        (tid, graph.tasks[tid].name, graph.tasks[tid].description)
        for tid in stt.candidate_next_tasks()
    ]
    return render(
        TemplateId.TASK_SELECTION,
        {
            PLACEHOLDER_FINDINGS: format_findings(findings),
            PLACEHOLDER_NEXT_TASKS: format_candidates(candidates),
        },
        appended=appended,
    )


def build_command_prompt(task_info: str) -> PromptEnvelope:
    return render(TemplateId.COMMAND_GENERATION, {PLACEHOLDER_TASK_INFO: task_info})


def build_baseline_initial_prompt(session: Session) -> PromptEnvelope:
    session.require_mode(PipelineMode.BASELINE)
    return render(TemplateId.BASELINE_INITIAL, {PLACEHOLDER_TARGET: session.target})


def build_baseline_reasoning_prompt(session: Session, tool_output: str) -> PromptEnvelope:
    session.require_mode(PipelineMode.BASELINE)
    return render(
        TemplateId.BASELINE_REASONING, {}, appended=(session.ptt.text, tool_output)
    )


def selection_candidates(session: Session) -> list[tuple[str, str]]:
    """(id, name) pairs for the current anchor, in edge order."""
    stt = session.stt
    return [(tid, stt.graph.tasks[tid].name) for tid in stt.candidate_next_tasks()]
