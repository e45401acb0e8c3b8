"""Drives one session end to end: prompts out, responses in, events logged.

The runner owns the side effects. It asks the provider through the gateway,
appends transcript events, mutates the task tree, and walks the phase
machine. Every mutation that matters for replay goes through the log first
so a transcript fold reproduces the final tree exactly.

Operator entry points (submit_tool_output, apply_status, apply_selection,
continue_current, abort) are safe to call from a service handler: they
validate phase and mode before touching anything.
"""
from __future__ import annotations

from typing import Callable

from .errors import (
    GatewayError,
    IllegalTransition,
    ProviderUnavailable,
    WrongPhase,
)
from .gateway import ChatTurn, LlmGateway, Provider
from .graph import AttackGraph, BacktrackResult, Finding, TaskStatus
from .pipeline import (
    BaselinePtt,
    Outcome,
    Phase,
    PipelineMode,
    SessionConfig,
    SummaryOutcome,
    ToolClassification,
    build_baseline_initial_prompt,
    build_baseline_reasoning_prompt,
    build_command_prompt,
    build_initial_prompt,
    build_selection_prompt,
    build_summarization_prompt,
    new_session,
    parse_selection,
    parse_summary,
    selection_candidates,
)
from .prompts import SELECTION_RETRY_INSTRUCTION, format_task_info
from .store import SessionLog, SessionMetrics, compute_metrics, utc_now


class _Halt(Exception):
    """Internal unwinder: the session terminated mid-chain, stop driving."""


SELECTION_ATTEMPTS = 3  # one straight ask plus two retries before forcing


class SessionRunner:
    def __init__(
        self,
        mode: PipelineMode,
        target: str,
        provider: Provider,
        graph: AttackGraph | None = None,
        config: SessionConfig | None = None,
        log: SessionLog | None = None,
        auto_apply: bool = False,
        halt_on_provider_error: bool = True,
        now: Callable[[], str] = utc_now,
        name: str = "",
    ):
        self.config = config or SessionConfig()
        self.session = new_session(mode, target, self.config, graph)
        self.gateway = LlmGateway(provider, history_turn_budget=self.config.history_turn_budget)
        self.log = log if log is not None else SessionLog(None, now=now)
        self.auto_apply = auto_apply
        self.halt_on_provider_error = halt_on_provider_error
        self.name = name
        self.history: list[ChatTurn] = []
        self._pending: tuple[Callable, tuple] | None = None
        self._baseline_subtask_text: str | None = None

    # plumbing

    def _ask(self, envelope, parse=None):
        """One model round trip with full transcript bookkeeping.

        A failed call leaves the PromptSent event in place with no matching
        ResponseReceived: the query was issued and counts as such.
        """
        self.log.append(
            "PromptSent",
            {
                "template": envelope.template_id.value,
                "text": envelope.rendered_text,
                "query": self.gateway.next_sequence,
            },
        )
        text, record = self.gateway.ask(envelope, self.history)
        payload = {
            "template": envelope.template_id.value,
            "text": text,
            "query": record.sequence,
        }
        parsed = None
        if parse is not None:
            parsed = parse(text)
            payload["parsed"] = parsed.to_payload()
        event = self.log.append("ResponseReceived", payload)
        self.history.append(ChatTurn("user", envelope.rendered_text))
        self.history.append(ChatTurn("assistant", text))
        if self.session.window.observe(text):
            self._terminate(
                Outcome.FAILED,
                f"model returned {self.session.window.size} identical responses in a row",
            )
            raise _Halt()
        return text, event, parsed

    def _guarded_ask(self, envelope, step, parse=None):
        """_ask, converting provider trouble into a resumable interruption."""
        try:
            return self._ask(envelope, parse=parse)
        except GatewayError as err:
            raise ProviderUnavailable(str(err), step=step, cause=err) from err

    def _drive(self, fn, *args):
        try:
            fn(*args)
        except _Halt:
            pass
        except ProviderUnavailable as err:
            if self.halt_on_provider_error:
                self._terminate(Outcome.FAILED, f"provider unavailable: {err}")
            else:
                self._pending = err.step
                raise

    def _enter(self, phase: Phase) -> None:
        # steps re-enter their own phase when resumed after an interruption
        if self.session.phase is not phase:
            self.session.enter(phase)

    def _terminate(self, outcome: Outcome, reason: str) -> None:
        self.session.terminate(outcome, reason)
        self.log.append("SessionTerminated", {"outcome": outcome.value, "reason": reason})

    @property
    def stt(self):
        return self.session.stt

    # session start

    def start(self) -> None:
        """Send the opening prompt(s) and stop at the first command."""
        self.session.require_phase(Phase.INITIALIZATION)
        if self.session.mode is PipelineMode.GUIDED:
            initial = self.stt.graph.initial_task
            self.stt.set_status(initial, TaskStatus.IN_PROGRESS)
            self.log.append(
                "StatusChanged",
                {"task": initial, "from": "to-do", "to": "in-progress", "origin": "session-start"},
            )
            self._drive(self._step_initial)
        else:
            self._drive(self._step_baseline_initial)

    def _step_initial(self):
        envelope = build_initial_prompt(self.session)
        self._guarded_ask(envelope, step=(self._step_initial, ()))
        self._step_command()

    def _step_baseline_initial(self):
        envelope = build_baseline_initial_prompt(self.session)
        text, _, _ = self._guarded_ask(envelope, step=(self._step_baseline_initial, ()))
        self.session.ptt = BaselinePtt(text)
        self._baseline_subtask_text = text
        self._step_command()

    # command generation

    def _step_command(self):
        self._enter(Phase.COMMAND_GENERATION)
        if self.session.mode is PipelineMode.GUIDED:
            focus = self.stt.in_progress_task()
            task = self.stt.graph.tasks[focus]
            info = format_task_info(task.name, task.description)
        else:
            info = self._baseline_subtask_text
        envelope = build_command_prompt(info)
        text, _, _ = self._guarded_ask(envelope, step=(self._step_command, ()))
        self.session.current_command = text.strip()
        self._enter(Phase.AWAITING_TOOL_OUTPUT)

    # tool output intake

    def submit_tool_output(self, classification: ToolClassification | str, text: str) -> None:
        self.session.require_phase(Phase.AWAITING_TOOL_OUTPUT)
        classification = ToolClassification(classification)
        self.log.append(
            "ToolOutputSubmitted", {"classification": classification.value, "text": text}
        )
        if self.session.mode is PipelineMode.BASELINE:
            if classification is ToolClassification.SUCCESS:
                self._terminate(Outcome.SUCCEEDED, "operator confirmed the goal was reached")
            else:
                self._drive(self._step_baseline_reason, text)
            return
        if classification is ToolClassification.INVALID:
            self._drive(self._handle_invalid_command)
        elif classification is ToolClassification.SUCCESS:
            # no summarization round: the operator vouched for completion
            self.session.last_summary = SummaryOutcome([], "Proceed", "")
            self._enter(Phase.STATUS_UPDATE)
            self._drive(self._after_status_update)
        else:
            self._drive(self._step_summarize, text)

    def _handle_invalid_command(self):
        focus = self.stt.in_progress_task()
        count = self.stt.record_invalid_command(focus)
        self.log.append("InvalidCommandRecorded", {"task": focus, "count": count})
        if count < self.config.max_invalid_commands:
            self._step_command()
            return
        outcome = self.stt.fail_and_backtrack()
        self.log.append(
            "StatusChanged",
            {
                "task": focus,
                "from": "in-progress",
                "to": "failed",
                "origin": "invalid-command-threshold",
            },
        )
        if outcome.result is BacktrackResult.SESSION_EXHAUSTED:
            self._terminate(Outcome.EXHAUSTED, "every branch of the task tree failed")
            return
        self._step_selection()

    # summarization and status update

    def _step_summarize(self, tool_output: str):
        self._enter(Phase.SUMMARIZATION)
        envelope = build_summarization_prompt(tool_output)
        _, event, summary = self._guarded_ask(
            envelope, step=(self._step_summarize, (tool_output,)), parse=parse_summary
        )
        self.session.last_summary = summary
        focus = self.stt.in_progress_task()
        for finding_text in summary.key_findings:
            self.stt.add_finding(
                focus, Finding(finding_text, source_event=event.sequence, recorded_at=event.at)
            )
        self._enter(Phase.STATUS_UPDATE)
        self._after_status_update()

    def _after_status_update(self):
        recommendation = self.session.last_summary.recommendation
        if recommendation == "Proceed" and not self.auto_apply:
            return  # operator decides: apply_status to complete, or continue_current
        if recommendation == "Proceed":
            self._complete_current("recommendation")
        else:
            self._step_command()

    def _complete_current(self, origin: str):
        focus = self.stt.in_progress_task()
        self.stt.set_status(focus, TaskStatus.COMPLETED)
        self.log.append(
            "StatusChanged",
            {"task": focus, "from": "in-progress", "to": "completed", "origin": origin},
        )
        if not self.stt.candidate_next_tasks():
            self._terminate(Outcome.SUCCEEDED, f"reached the end of the path at {focus}")
            return
        self._step_selection()

    # selection

    def _step_selection(self):
        self._enter(Phase.SELECTION)
        candidates = selection_candidates(self.session)
        if not candidates:
            self._terminate(Outcome.EXHAUSTED, "no selectable tasks remain")
            return
        if self.config.auto_select_single and len(candidates) == 1:
            self._commit(candidates[0][0], origin="auto-single")
            self._step_command()
            return
        chosen = None
        for attempt in range(SELECTION_ATTEMPTS):
            appended = (SELECTION_RETRY_INSTRUCTION,) if attempt else ()
            envelope = build_selection_prompt(self.session, appended=appended)
            text, _, _ = self._guarded_ask(envelope, step=(self._step_selection, ()))
            chosen = parse_selection(text, candidates)
            if chosen is not None:
                break
        forced = chosen is None
        if forced:
            chosen = candidates[0][0]
        if self.auto_apply:
            self._commit(chosen, origin="forced" if forced else "model", forced=forced)
            self._step_command()
        else:
            self.session.proposed_selection = chosen

    def _commit(self, chosen: str, origin: str, forced: bool = False):
        anchor = self.stt.commit_selection(chosen)
        self.log.append(
            "SelectionCommitted",
            {"anchor": anchor, "chosen": chosen, "origin": origin, "forced": forced},
        )
        self.log.append(
            "StatusChanged",
            {"task": chosen, "from": "to-do", "to": "in-progress", "origin": "selection"},
        )
        self.session.proposed_selection = None

    # baseline reasoning

    def _step_baseline_reason(self, tool_output: str):
        self._enter(Phase.SUMMARIZATION)
        envelope = build_baseline_reasoning_prompt(self.session, tool_output)
        text, _, _ = self._guarded_ask(
            envelope, step=(self._step_baseline_reason, (tool_output,))
        )
        self.session.ptt.revise(text)
        self._baseline_subtask_text = text
        self._step_command()

    # operator actions

    def apply_status(self, task: str, to: TaskStatus | str, origin: str = "operator") -> None:
        self.session.require_mode(PipelineMode.GUIDED)
        self.session.require_phase(Phase.AWAITING_TOOL_OUTPUT, Phase.STATUS_UPDATE)
        to = TaskStatus(to)
        focus = self.stt.in_progress_task()
        if focus != task:
            raise IllegalTransition(f"{task} is not the in-progress task")
        if to is TaskStatus.COMPLETED:
            self._drive(self._complete_current, origin)
        elif to is TaskStatus.FAILED:
            self._drive(self._operator_fail, origin)
        else:
            raise IllegalTransition("operator may only mark completed or failed")

    def _operator_fail(self, origin: str):
        focus = self.stt.in_progress_task()
        outcome = self.stt.fail_and_backtrack()
        self.log.append(
            "StatusChanged",
            {"task": focus, "from": "in-progress", "to": "failed", "origin": origin},
        )
        if outcome.result is BacktrackResult.SESSION_EXHAUSTED:
            self._terminate(Outcome.EXHAUSTED, "every branch of the task tree failed")
            return
        self._step_selection()

    def apply_selection(self, task: str, origin: str = "operator") -> None:
        self.session.require_mode(PipelineMode.GUIDED)
        self.session.require_phase(Phase.SELECTION)
        self._drive(self._operator_select, task, origin)

    def _operator_select(self, task: str, origin: str):
        self._commit(task, origin=origin)
        self._step_command()

    def continue_current(self) -> None:
        """Operator overrides a Proceed recommendation: keep working the task."""
        self.session.require_phase(Phase.STATUS_UPDATE)
        self._drive(self._step_command)

    def abort(self, reason: str = "operator abort") -> None:
        self._terminate(Outcome.ABORTED, reason)

    def fail(self, reason: str) -> None:
        self._terminate(Outcome.FAILED, reason)

    def resume_pending(self) -> None:
        """Re-run the step that was interrupted by a provider failure."""
        if self.session.phase is Phase.TERMINATED:
            raise WrongPhase("session already terminated")
        if self._pending is None:
            raise WrongPhase("no interrupted step to resume")
        fn, args = self._pending
        self._pending = None
        self._drive(fn, *args)

    # checkpoints and reporting

    def mark_checkpoint(self, label: str) -> None:
        self.log.mark_checkpoint(label, len(self.log.checkpoints) + 1)

    def metrics(self, subtasks_total: int) -> SessionMetrics:
        return compute_metrics(
            self.log, subtasks_total, name=self.name, mode=self.session.mode.value
        )

    def view(self) -> dict:
        s = self.session
        out = {
            "name": self.name,
            "mode": s.mode.value,
            "target": s.target,
            "phase": s.phase.value,
            "outcome": s.outcome.value if s.outcome else None,
            "termination_reason": s.termination_reason,
            "current_command": s.current_command,
            "proposed_selection": s.proposed_selection,
            "recommendation": s.last_summary.recommendation if s.last_summary else None,
            "queries_sent": self.log.count("PromptSent"),
            "events": len(self.log.events),
            "pending_resume": self._pending is not None,
            "checkpoints": [
                {"label": c.label, "index": c.index} for c in self.log.checkpoints
            ],
            "config": {
                "max_invalid_commands": self.config.max_invalid_commands,
                "repetition_window": self.config.repetition_window,
                "auto_select_single": self.config.auto_select_single,
            },
        }
        if s.mode is PipelineMode.GUIDED:
            stt = s.stt
            out["tasks"] = {
                tid: {
                    "name": stt.graph.tasks[tid].name,
                    "status": state.status.value,
                    "findings": [f.text for f in state.findings],
                    "invalid_commands": state.invalid_command_count,
                }
                for tid, state in stt.task_states.items()
            }
            path = [stt.graph.initial_task]
            path += [f.chosen for f in stt.selection_stack if f.chosen is not None]
            out["selection_path"] = path
            try:
                cands = stt.candidate_next_tasks()
            except Exception:
                cands = []
            out["candidates"] = [
                {
                    "id": tid,
                    "name": stt.graph.tasks[tid].name,
                    "description": stt.graph.tasks[tid].description,
                }
                for tid in cands
            ]
            out["tree"] = stt.snapshot()
        else:
            out["plan_revision"] = s.ptt.revision if s.ptt else 0
        return out
