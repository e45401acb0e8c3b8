"""Command line entry points.

`run` drives a live session interactively: the model proposes commands,
the operator executes them elsewhere, pastes results back, and confirms
status changes and task selection. Everything else is offline plumbing
(replay, validation, reporting) plus `serve` for the HTTP API.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import (
    EmptyInput,
    EngineError,
    FixtureInvalid,
    NotACandidate,
    ProviderUnavailable,
    StorageFailure,
    UnknownTask,
    ValidationError,
)
from .gateway import HttpChatProvider, ProviderConfig, ScriptedProvider
from .graph import load_graph_file, sample_graph_path
from .pipeline import Outcome, Phase, PipelineMode, SessionConfig
from .report import build_report, load_metrics_dirs, render_table
from .replay import run_replay
from .runner import SessionRunner
from .service import ServiceSettings, create_app
from .service.app import load_provider_script
from .store import SessionLog


@click.group()
def main():
    """Model-driven penetration test sessions with operator oversight."""


def _provider_options(fn):
    fn = click.option(
        "--auth-env",
        default="LLM_API_KEY",
        show_default=True,
        help="environment variable holding the API key",
    )(fn)
    fn = click.option("--model", default=None, help="model identifier")(fn)
    fn = click.option("--endpoint", default=None, help="chat completions base URL")(fn)
    fn = click.option(
        "--script",
        "script_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="canned response script instead of a live endpoint",
    )(fn)
    return fn


def _make_provider(script_path, endpoint, model, auth_env):
    if script_path:
        try:
            return ScriptedProvider.from_raw(load_provider_script(script_path))
        except FixtureInvalid as err:
            raise click.UsageError(str(err))
    if endpoint and model:
        return HttpChatProvider(
            ProviderConfig(endpoint=endpoint, model=model, auth_source=auth_env)
        )
    raise click.UsageError("either --script or both --endpoint and --model are required")


def _read_block() -> str:
    click.echo("paste the tool output, end with a line containing only EOF")
    lines = []
    while True:
        line = sys.stdin.readline()
        if not line:
            break
        stripped = line.rstrip("\n")
        if stripped.strip() == "EOF":
            break
        lines.append(stripped)
    return "\n".join(lines)


def _choice(prompt: str, letters: str) -> str:
    return click.prompt(
        prompt, type=click.Choice(list(letters)), show_choices=False
    )


@main.command()
@click.option("--target", required=True, help="engagement target, e.g. an IP")
@click.option(
    "--mode",
    type=click.Choice(["guided", "baseline"]),
    default="guided",
    show_default=True,
)
@click.option(
    "--graph",
    "graph_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="task graph file (bundled sample when omitted)",
)
@_provider_options
@click.option("--name", default="", help="session name used in reports")
@click.option(
    "--transcript",
    "transcript_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="append the event transcript to this file",
)
@click.option("--max-invalid", type=click.IntRange(min=1), default=5, show_default=True)
@click.option(
    "--repetition-window", type=click.IntRange(min=2), default=3, show_default=True
)
@click.option("--history-budget", type=click.IntRange(min=1), default=None)
@click.option("--auto-select-single", is_flag=True)
@click.option(
    "--auto-apply",
    is_flag=True,
    help="apply recommendations and selections without confirmation",
)
@click.option(
    "--subtasks-total",
    type=click.IntRange(min=0),
    default=None,
    help="print benchmark metrics against this denominator on exit",
)
@click.option("--ok-on-abort", is_flag=True, help="exit 0 when the operator aborts")
def run(
    target,
    mode,
    graph_path,
    script_path,
    endpoint,
    model,
    auth_env,
    name,
    transcript_path,
    max_invalid,
    repetition_window,
    history_budget,
    auto_select_single,
    auto_apply,
    subtasks_total,
    ok_on_abort,
):
    """Run one session against a target."""
    provider = _make_provider(script_path, endpoint, model, auth_env)
    graph = None
    if mode == "guided":
        try:
            graph = load_graph_file(graph_path or sample_graph_path())
        except ValidationError as err:
            raise click.UsageError(str(err))
    config = SessionConfig(
        max_invalid_commands=max_invalid,
        repetition_window=repetition_window,
        auto_select_single=auto_select_single,
        history_turn_budget=history_budget,
    )
    log = SessionLog(transcript_path) if transcript_path else None
    try:
        runner = SessionRunner(
            mode=PipelineMode(mode),
            target=target,
            provider=provider,
            graph=graph,
            config=config,
            log=log,
            auto_apply=auto_apply,
            halt_on_provider_error=False,
            name=name or target,
        )
    except EngineError as err:
        raise click.UsageError(str(err))

    def call(fn, *args):
        # the operator is present, so provider outages are retryable in place
        while True:
            try:
                fn(*args)
                return True
            except ProviderUnavailable as err:
                click.echo(f"provider unavailable: {err.cause}")
                if _choice("(r)etry / (q)uit", "rq") == "q":
                    runner.fail("provider unavailable; operator quit")
                    return False
                fn, args = runner.resume_pending, ()

    if not call(runner.start):
        _finish(runner, subtasks_total, ok_on_abort)
        return

    while runner.session.phase is not Phase.TERMINATED:
        phase = runner.session.phase
        if phase is Phase.AWAITING_TOOL_OUTPUT:
            prefix = ""
            if runner.session.mode is PipelineMode.GUIDED:
                prefix = f"[{runner.stt.in_progress_task()}] "
            click.echo(f"\n{prefix}$ {runner.session.current_command}")
            choice = _choice(
                "classify the result: (o)utput / (i)nvalid / (s)uccess"
                " / (m)ilestone / (a)bort",
                "oisma",
            )
            if choice == "a":
                runner.abort("operator abort")
                break
            if choice == "m":
                runner.mark_checkpoint(click.prompt("milestone label"))
                continue
            kind = {"o": "output", "i": "invalid", "s": "success"}[choice]
            text = _read_block()
            if not call(runner.submit_tool_output, kind, text):
                break
        elif phase is Phase.STATUS_UPDATE:
            summary = runner.session.last_summary
            click.echo("\nkey findings:")
            for finding in summary.key_findings:
                click.echo(f"  - {finding}")
            if not summary.key_findings:
                click.echo("  (none)")
            click.echo(f"recommendation: {summary.recommendation}")
            focus = runner.stt.in_progress_task()
            choice = _choice(
                f"mark {focus} (c)ompleted / (f)ailed / (k)eep working / (a)bort",
                "cfka",
            )
            if choice == "a":
                runner.abort("operator abort")
                break
            if choice == "c":
                ok = call(runner.apply_status, focus, "completed")
            elif choice == "f":
                ok = call(runner.apply_status, focus, "failed")
            else:
                ok = call(runner.continue_current)
            if not ok:
                break
        elif phase is Phase.SELECTION:
            candidates = runner.view()["candidates"]
            proposed = runner.session.proposed_selection
            click.echo("\nnext task candidates:")
            for cand in candidates:
                marker = "*" if cand["id"] == proposed else " "
                click.echo(f"  {marker} {cand['id']}  {cand['name']}")
            while runner.session.phase is Phase.SELECTION:
                chosen = click.prompt("select task", default=proposed)
                try:
                    if not call(runner.apply_selection, chosen):
                        break
                except (NotACandidate, UnknownTask) as err:
                    click.echo(str(err))
            if runner.session.phase is Phase.TERMINATED:
                break
        else:  # pragma: no cover - phases between prompts are transient
            raise click.ClickException(f"unexpected phase {phase.value}")

    _finish(runner, subtasks_total, ok_on_abort)


def _finish(runner: SessionRunner, subtasks_total, ok_on_abort):
    session = runner.session
    click.echo(f"\noutcome: {session.outcome.value} ({session.termination_reason})")
    if subtasks_total is not None:
        metrics = runner.metrics(subtasks_total)
        click.echo(f"subtasks completed: {metrics.subtasks_completed}/{subtasks_total}")
        click.echo(f"queries: {metrics.queries_total}")
        click.echo(f"queries to deepest subtask: {metrics.queries_to_deepest_subtask}")
        avg = metrics.avg_queries_per_completed_subtask
        if avg is not None:
            click.echo(f"avg queries per completed subtask: {avg:.2f}")
    if session.outcome is Outcome.SUCCEEDED:
        sys.exit(0)
    if session.outcome is Outcome.ABORTED:
        sys.exit(0 if ok_on_abort else 1)
    sys.exit(1)


@main.command()
@click.option(
    "--fixture",
    "fixture_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default=None,
    help="write transcript.jsonl, state.json and metrics.json here",
)
def replay(fixture_path, out_dir):
    """Re-run a recorded session deterministically, no network involved."""
    try:
        result = run_replay(fixture_path, out_dir)
    except (FixtureInvalid, ValidationError) as err:
        raise click.UsageError(str(err))
    metrics = result.metrics
    click.echo(f"{metrics.name} [{metrics.mode}] {result.outcome}")
    click.echo(f"subtasks completed: {metrics.subtasks_completed}/{metrics.subtasks_total}")
    click.echo(f"queries: {metrics.queries_total}")
    click.echo(f"queries to deepest subtask: {metrics.queries_to_deepest_subtask}")
    avg = metrics.avg_queries_per_completed_subtask
    if avg is not None:
        click.echo(f"avg queries per completed subtask: {avg:.2f}")
    if out_dir:
        click.echo(f"artifacts written to {out_dir}")


@main.command("validate-graph")
@click.option(
    "--graph",
    "graph_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
)
def validate_graph(graph_path):
    """Check a task graph file and report its size and warnings."""
    try:
        graph = load_graph_file(graph_path or sample_graph_path())
    except ValidationError as err:
        raise click.UsageError(str(err))
    click.echo(f"OK, {len(graph)} tasks, {len(graph.warnings)} warnings")
    for warning in graph.warnings:
        click.echo(f"  warning: {warning}")


@main.command()
@click.argument(
    "session_dirs",
    nargs=-1,
    required=True,
    type=click.Path(exists=True, file_okay=False),
)
@click.option("--json", "as_json", is_flag=True, help="emit the report as JSON")
def report(session_dirs, as_json):
    """Aggregate metrics.json files from session directories into one table."""
    try:
        rows = load_metrics_dirs(list(session_dirs))
        data = build_report(rows)
    except (StorageFailure, EmptyInput) as err:
        raise click.UsageError(str(err))
    if as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        click.echo(render_table(data))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option(
    "--graph",
    "graph_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
)
@_provider_options
def serve(host, port, graph_path, script_path, endpoint, model, auth_env):
    """Start the HTTP API."""
    import uvicorn

    provider_config = None
    if endpoint and model:
        provider_config = ProviderConfig(
            endpoint=endpoint, model=model, auth_source=auth_env
        )
    try:
        app = create_app(
            ServiceSettings(
                graph_path=graph_path,
                provider_config=provider_config,
                script_path=script_path,
            )
        )
    except (FixtureInvalid, ValidationError) as err:
        raise click.UsageError(str(err))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
