from __future__ import annotations

import json

import pytest

from pentree.errors import (
    IllegalTransition,
    NoAnchor,
    NotACandidate,
    NothingInProgress,
    ParseError,
    SecondInProgress,
    TaskNotStarted,
    ValidationError,
)
from pentree.graph import (
    BacktrackResult,
    Finding,
    SttState,
    TaskStatus,
    load_graph,
    load_graph_file,
    new_session_state,
    sample_graph_path,
)

from conftest import graph_doc, graph_from_edges


def started(graph):
    state = new_session_state(graph)
    state.set_status(graph.initial_task, TaskStatus.IN_PROGRESS)
    return state


def finding(text: str, source: int = 1) -> Finding:
    return Finding(text=text, source_event=source, recorded_at="2026-01-01T00:00:00+00:00")


# loading and validation

def test_load_valid_graph_preserves_edge_order():
    graph = graph_from_edges({"A": ["C", "B"], "B": [], "C": []})
    assert graph.initial_task == "A"
    assert graph.tasks["A"].next == ("C", "B")
    assert len(graph) == 3
    assert graph.warnings == ()


def test_load_rejects_malformed_json():
    with pytest.raises(ParseError):
        load_graph("{not json")


def test_dangling_edge_reported_with_both_ends():
    doc = graph_doc({"A": ["B"], "B": ["Z"]})
    with pytest.raises(ValidationError) as err:
        load_graph(json.dumps(doc))
    assert "dangling edge: B -> Z" in err.value.problems


def test_validation_collects_every_problem():
    doc = graph_doc({"A": ["A", "Z"]}, initial="X")
    doc["tasks"][0]["description"] = "  "
    with pytest.raises(ValidationError) as err:
        load_graph(json.dumps(doc))
    problems = err.value.problems
    assert "self loop: A -> A" in problems
    assert "dangling edge: A -> Z" in problems
    assert "initial_task not found: 'X'" in problems
    assert "task A: description must be non-empty" in problems


def test_duplicate_task_id_rejected():
    doc = graph_doc({"A": []})
    doc["tasks"].append(dict(doc["tasks"][0]))
    with pytest.raises(ValidationError) as err:
        load_graph(json.dumps(doc))
    assert "duplicate task id: A" in err.value.problems


def test_unknown_fields_rejected_at_schema_version_1():
    doc = graph_doc({"A": []}, comment="hello")
    with pytest.raises(ValidationError) as err:
        load_graph(json.dumps(doc))
    assert "unknown fields: comment" in err.value.problems

    doc = graph_doc({"A": []})
    doc["tasks"][0]["severity"] = "high"
    with pytest.raises(ValidationError) as err:
        load_graph(json.dumps(doc))
    assert "task #0: unknown fields: severity" in err.value.problems


def test_wrong_schema_version_rejected():
    doc = graph_doc({"A": []}, schema_version=2)
    with pytest.raises(ValidationError) as err:
        load_graph(json.dumps(doc))
    assert "unsupported schema_version: 2" in err.value.problems


def test_unreachable_task_is_a_warning_not_an_error():
    graph = graph_from_edges({"A": ["B"], "B": [], "C": []})
    assert graph.warnings == ("unreachable from initial task: C",)


def test_content_hash_tracks_the_exact_document():
    doc = json.dumps(graph_doc({"A": []}))
    assert load_graph(doc).content_hash == load_graph(doc).content_hash
    other = json.dumps(graph_doc({"A": []}, initial="A"), indent=2)
    assert load_graph(doc).content_hash != load_graph(other).content_hash


def test_sample_graph_is_clean():
    graph = load_graph_file(sample_graph_path())
    assert len(graph) == 30
    assert graph.warnings == ()
    assert graph.initial_task == "T1595"
    assert graph.tasks["T1595"].name == "Active Scanning"
    # the first scan can branch into website reconnaissance
    assert "T1594" in graph.tasks["T1595"].next
    assert all(t.description.strip() for t in graph.tasks.values())
    excluded_tactics = {"impact", "resource-development", "exfiltration"}
    assert not excluded_tactics & {t.tactic for t in graph.tasks.values()}


# status transitions

def test_todo_to_in_progress(line_graph):
    state = new_session_state(line_graph)
    state.set_status("A", TaskStatus.IN_PROGRESS)
    assert state.status_of("A") is TaskStatus.IN_PROGRESS
    assert state.in_progress_task() == "A"


def test_completed_is_terminal(line_graph):
    state = started(line_graph)
    state.set_status("A", TaskStatus.COMPLETED)
    with pytest.raises(IllegalTransition):
        state.set_status("A", TaskStatus.COMPLETED)
    with pytest.raises(IllegalTransition):
        state.set_status("A", TaskStatus.FAILED)


def test_second_in_progress_rejected(fan_graph):
    state = started(fan_graph)
    with pytest.raises(SecondInProgress):
        state.set_status("B", TaskStatus.IN_PROGRESS)


def test_in_progress_only_through_selection(fan_graph):
    state = new_session_state(fan_graph)
    # B is not the initial task and no frame has chosen it
    with pytest.raises(IllegalTransition):
        state.set_status("B", TaskStatus.IN_PROGRESS)


def test_findings_require_a_started_task(line_graph):
    state = started(line_graph)
    with pytest.raises(TaskNotStarted):
        state.add_finding("B", finding("too early"))
    state.add_finding("A", finding("port 21 open"))
    assert [f.text for f in state.task_states["A"].findings] == ["port 21 open"]


# candidate computation and selection

def test_candidates_follow_edge_order(fan_graph):
    state = started(fan_graph)
    state.set_status("A", TaskStatus.COMPLETED)
    assert state.candidate_next_tasks() == ["B", "C", "D"]


def test_no_anchor_while_task_in_progress(fan_graph):
    state = started(fan_graph)
    with pytest.raises(NoAnchor):
        state.candidate_next_tasks()


def test_no_anchor_before_initial_completes(fan_graph):
    state = new_session_state(fan_graph)
    with pytest.raises(NoAnchor):
        state.candidate_next_tasks()


def test_commit_pushes_frame_and_starts_task(fan_graph):
    state = started(fan_graph)
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("B")
    assert state.in_progress_task() == "B"
    frame = state.selection_stack[-1]
    assert (frame.anchor, frame.excluded, frame.chosen) == ("A", [], "B")
    assert state.task_states["B"].invalid_command_count == 0


def test_commit_rejects_non_candidate(fan_graph):
    state = started(fan_graph)
    state.set_status("A", TaskStatus.COMPLETED)
    with pytest.raises(NotACandidate):
        state.commit_selection("E")


def test_failed_task_leaves_candidate_set(fan_graph):
    state = started(fan_graph)
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("B")
    outcome = state.fail_and_backtrack()
    assert outcome.result is BacktrackResult.NEW_CANDIDATES
    assert outcome.anchor == "A"
    assert outcome.candidates == ["C", "D"]
    frame = state.selection_stack[-1]
    assert (frame.anchor, frame.excluded, frame.chosen) == ("A", ["B"], None)
    # the failed task never comes back, anywhere
    state.commit_selection("C")
    assert state.status_of("B") is TaskStatus.FAILED


def test_completed_tasks_excluded_from_later_candidate_sets():
    graph = graph_from_edges({"A": ["B"], "B": ["A", "C"], "C": []})
    state = started(graph)
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("B")
    state.set_status("B", TaskStatus.COMPLETED)
    # A is completed already, so only C remains
    assert state.candidate_next_tasks() == ["C"]


def test_exhausted_anchor_pops_and_excludes_above():
    graph = graph_from_edges({"A": ["B", "D"], "B": ["C"], "C": [], "D": []})
    state = started(graph)
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("B")
    state.set_status("B", TaskStatus.COMPLETED)
    state.commit_selection("C")
    outcome = state.fail_and_backtrack()
    # C failed, B has nothing else, so selection returns to A without B
    assert outcome.result is BacktrackResult.POPPED_FRAME
    assert outcome.anchor == "A"
    assert outcome.candidates == ["D"]
    assert len(state.selection_stack) == 1
    frame = state.selection_stack[0]
    assert frame.anchor == "A"
    assert frame.chosen is None
    assert "B" in frame.excluded
    assert state.status_of("B") is TaskStatus.COMPLETED


def test_single_task_graph_exhausts_when_initial_fails():
    graph = graph_from_edges({"A": []})
    state = started(graph)
    outcome = state.fail_and_backtrack()
    assert outcome.result is BacktrackResult.SESSION_EXHAUSTED
    assert outcome.candidates == []
    assert state.status_of("A") is TaskStatus.FAILED


def test_backtrack_requires_something_in_progress(fan_graph):
    state = new_session_state(fan_graph)
    with pytest.raises(NothingInProgress):
        state.fail_and_backtrack()


def test_full_exhaustion_after_every_branch_fails(fan_graph):
    state = started(fan_graph)
    state.set_status("A", TaskStatus.COMPLETED)
    for expected in (["B", "C", "D"], ["C", "D"], ["D"]):
        assert state.candidate_next_tasks() == expected
        state.commit_selection(expected[0])
        outcome = state.fail_and_backtrack()
    assert outcome.result is BacktrackResult.SESSION_EXHAUSTED


# snapshot rendering

def test_snapshot_of_fresh_sample_session():
    state = started(load_graph_file(sample_graph_path()))
    assert state.snapshot() == "1. Active Scanning - (in-progress)"


def test_snapshot_shows_findings_one_level_deeper():
    state = started(load_graph_file(sample_graph_path()))
    state.add_finding("T1595", finding("port 21 ftp open"))
    state.add_finding("T1595", finding("port 80 http open"))
    assert state.snapshot() == (
        "1. Active Scanning - (in-progress)\n"
        "    - port 21 ftp open\n"
        "    - port 80 http open"
    )


def test_snapshot_renders_selection_path_with_failed_siblings():
    state = started(load_graph_file(sample_graph_path()))
    state.add_finding("T1595", finding("port 80 http open"))
    state.set_status("T1595", TaskStatus.COMPLETED)
    state.commit_selection("T1594")
    state.fail_and_backtrack()
    state.commit_selection("T1592")
    assert state.snapshot() == (
        "1. Active Scanning - (completed)\n"
        "    - port 80 http open\n"
        "    1.1. Search Victim-Owned Websites - (failed)\n"
        "    1.2. Gather Victim Host Information - (in-progress)"
    )


def test_snapshot_numbering_follows_the_chosen_branch():
    graph = graph_from_edges({"A": ["B", "C"], "B": [], "C": ["D"], "D": []})
    state = started(graph)
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("C")
    state.set_status("C", TaskStatus.COMPLETED)
    state.commit_selection("D")
    assert state.snapshot() == (
        "1. Task A - (completed)\n"
        "    1.1. Task C - (completed)\n"
        "        1.1.1. Task D - (in-progress)"
    )


def test_snapshot_is_byte_stable(fan_graph):
    state = started(fan_graph)
    state.add_finding("A", finding("same input, same output"))
    assert state.snapshot() == state.snapshot()


# serialization

def test_state_round_trip(fan_graph):
    state = started(fan_graph)
    state.add_finding("A", finding("alpha", source=3))
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("B")
    state.record_invalid_command()
    restored = SttState.from_dict(fan_graph, json.loads(json.dumps(state.to_dict())))
    assert restored == state
    assert restored.task_states["A"].findings[0].source_event == 3


def test_invalid_command_counter_tracks_focus(line_graph):
    state = started(line_graph)
    assert state.record_invalid_command() == 1
    assert state.record_invalid_command() == 2
    state.set_status("A", TaskStatus.COMPLETED)
    state.commit_selection("B")
    assert state.task_states["B"].invalid_command_count == 0
