"""Deterministic session replay from a self-contained fixture file.

A fixture bundles everything a run needs: the task graph, a scripted
provider, the operator's tool-output submissions, and checkpoint triggers.
Replays never touch the network, which makes them usable as benchmarks,
regression tests, and demo material alike.

Checkpoint triggers fire on transcript growth: when the count-th event of
the given kind lands, the checkpoint is marked right there, so the
queries-to-deepest-subtask metric cuts at exactly the intended spot.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FixtureInvalid
from .gateway import ScriptedProvider
from .graph import AttackGraph, load_graph_file, sample_graph_path
from .pipeline import PipelineMode, SessionConfig
from .runner import SessionRunner
from .store import SessionLog, SessionMetrics, save_state

WATCHABLE_KINDS = (
    "PromptSent",
    "ResponseReceived",
    "ToolOutputSubmitted",
    "StatusChanged",
    "SelectionCommitted",
    "InvalidCommandRecorded",
)


@dataclass
class CheckpointTrigger:
    kind: str
    count: int
    label: str


@dataclass
class ReplayFixture:
    name: str
    mode: PipelineMode
    target: str
    graph: AttackGraph | None
    script: list[dict]
    tool_outputs: list[dict]
    triggers: list[CheckpointTrigger]
    subtasks_total: int
    config: SessionConfig = field(default_factory=SessionConfig)

    @classmethod
    def load(cls, path: str | Path) -> ReplayFixture:
        path = Path(path)
        try:
            raw = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise FixtureInvalid(f"cannot load fixture {path}: {err}") from err
        if not isinstance(raw, dict):
            raise FixtureInvalid(f"fixture {path} must be a JSON object")
        for key in ("target", "provider_script", "tool_outputs", "subtasks_total"):
            if key not in raw:
                raise FixtureInvalid(f"fixture {path} is missing {key!r}")

        mode = PipelineMode(raw.get("mode", "guided"))
        graph = None
        if mode is PipelineMode.GUIDED:
            graph_ref = raw.get("graph", "sample")
            graph_path = sample_graph_path() if graph_ref == "sample" else path.parent / graph_ref
            graph = load_graph_file(graph_path)

        script = raw["provider_script"]
        if not isinstance(script, list):
            raise FixtureInvalid(f"fixture {path}: provider_script must be a list")
        ScriptedProvider.from_raw(script)  # validate entries up front

        outputs = raw["tool_outputs"]
        if not isinstance(outputs, list) or not all(
            isinstance(o, dict) and "classification" in o and "text" in o for o in outputs
        ):
            raise FixtureInvalid(
                f"fixture {path}: tool_outputs must be objects with classification and text"
            )

        triggers = []
        for i, t in enumerate(raw.get("checkpoints", [])):
            if not isinstance(t, dict) or "kind" not in t or "count" not in t or "label" not in t:
                raise FixtureInvalid(f"fixture {path}: checkpoint #{i} needs kind, count, label")
            if t["kind"] not in WATCHABLE_KINDS:
                raise FixtureInvalid(f"fixture {path}: cannot watch kind {t['kind']!r}")
            triggers.append(CheckpointTrigger(t["kind"], int(t["count"]), t["label"]))

        config_raw = raw.get("config", {})
        config = SessionConfig(
            max_invalid_commands=int(config_raw.get("max_invalid_commands", 5)),
            repetition_window=int(config_raw.get("repetition_window", 3)),
            auto_select_single=bool(config_raw.get("auto_select_single", False)),
            history_turn_budget=config_raw.get("history_turn_budget"),
        )
        return cls(
            name=raw.get("name", path.stem),
            mode=mode,
            target=raw["target"],
            graph=graph,
            script=script,
            tool_outputs=outputs,
            triggers=triggers,
            subtasks_total=int(raw["subtasks_total"]),
            config=config,
        )


@dataclass
class ReplayResult:
    fixture: ReplayFixture
    runner: SessionRunner
    metrics: SessionMetrics
    out_dir: Path | None

    @property
    def outcome(self) -> str:
        return self.runner.session.outcome.value


class _CheckpointWatcher:
    def __init__(self, runner: SessionRunner, triggers: list[CheckpointTrigger]):
        self.runner = runner
        self.pending = list(triggers)
        self.seen: dict[str, int] = {}

    def __call__(self, event) -> None:
        if event.kind == "CheckpointMarked":
            return
        self.seen[event.kind] = self.seen.get(event.kind, 0) + 1
        fired = [
            t for t in self.pending
            if t.kind == event.kind and t.count == self.seen[event.kind]
        ]
        for trigger in fired:
            self.pending.remove(trigger)
            self.runner.mark_checkpoint(trigger.label)


def run_replay(fixture: ReplayFixture | str | Path, out_dir: str | Path | None = None) -> ReplayResult:
    if not isinstance(fixture, ReplayFixture):
        fixture = ReplayFixture.load(fixture)

    out_path = None
    log = SessionLog(None)
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        log = SessionLog(out_path / "transcript.jsonl")

    runner = SessionRunner(
        mode=fixture.mode,
        target=fixture.target,
        provider=ScriptedProvider.from_raw(fixture.script),
        graph=fixture.graph,
        config=fixture.config,
        log=log,
        auto_apply=True,
        halt_on_provider_error=True,
        name=fixture.name,
    )
    log.observers.append(_CheckpointWatcher(runner, fixture.triggers))

    runner.start()
    for output in fixture.tool_outputs:
        if runner.session.outcome is not None:
            break
        runner.submit_tool_output(output["classification"], output["text"])
    if runner.session.outcome is None:
        runner.fail("tool output script exhausted")

    metrics = runner.metrics(fixture.subtasks_total)
    if out_path is not None:
        if fixture.mode is PipelineMode.GUIDED:
            save_state(
                out_path / "state.json",
                runner.stt,
                {"name": fixture.name, "target": fixture.target, "mode": fixture.mode.value,
                 "outcome": runner.session.outcome.value},
            )
        (out_path / "metrics.json").write_text(
            json.dumps(metrics.to_dict(), indent=2) + "\n", "utf-8"
        )
        log.close()
    return ReplayResult(fixture=fixture, runner=runner, metrics=metrics, out_dir=out_path)
