"""Request and response bodies for the HTTP surface."""
from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ConfigBody(BaseModel):
    max_invalid_commands: int = Field(default=5, ge=1)
    repetition_window: int = Field(default=3, ge=2)
    auto_select_single: bool = False
    history_turn_budget: int | None = Field(default=None, ge=1)


class CreateSessionBody(BaseModel):
    target: str
    mode: Literal["guided", "baseline"] = "guided"
    name: str = ""
    auto_apply: bool = False
    config: ConfigBody | None = None


class ToolOutputBody(BaseModel):
    classification: Literal["output", "invalid", "success"]
    text: str


class StatusBody(BaseModel):
    task: str
    to: Literal["completed", "failed"]


class SelectionBody(BaseModel):
    task: str


class AbortBody(BaseModel):
    reason: str = "operator abort"


class CheckpointBody(BaseModel):
    label: str


class TaskView(BaseModel):
    name: str
    status: str
    findings: list[str]
    invalid_commands: int


class CandidateView(BaseModel):
    id: str
    name: str
    description: str


class CheckpointView(BaseModel):
    label: str
    index: int


class ConfigView(BaseModel):
    max_invalid_commands: int
    repetition_window: int
    auto_select_single: bool


class SessionView(BaseModel):
    id: str
    name: str
    mode: str
    target: str
    phase: str
    outcome: str | None
    termination_reason: str | None
    current_command: str | None
    proposed_selection: str | None
    recommendation: str | None
    queries_sent: int
    events: int
    pending_resume: bool
    checkpoints: list[CheckpointView]
    config: ConfigView
    # guided sessions only
    tasks: dict[str, TaskView] | None = None
    selection_path: list[str] | None = None
    candidates: list[CandidateView] | None = None
    tree: str | None = None
    # baseline sessions only
    plan_revision: int | None = None


class SessionSummary(BaseModel):
    id: str
    name: str
    mode: str
    target: str
    phase: str
    outcome: str | None


class GraphTaskView(BaseModel):
    id: str
    name: str
    tactic: str
    description: str
    next: list[str]


class GraphView(BaseModel):
    initial_task: str
    content_hash: str
    tasks: list[GraphTaskView]


class MetricsView(BaseModel):
    name: str
    mode: str
    subtasks_completed: int
    subtasks_total: int
    queries_total: int
    queries_to_deepest_subtask: int
    avg_queries_per_completed_subtask: float | None
    outcome: str | None


class ErrorBody(BaseModel):
    error: str
    message: str
