"""Fixture-driven replays: frozen metrics, determinism, recorded artifacts."""
import json
from pathlib import Path

import pytest

from pentree.errors import FixtureInvalid
from pentree.graph import TaskStatus, load_graph_file, sample_graph_path
from pentree.replay import ReplayFixture, run_replay
from pentree.store import load_state, replay_state

FIXTURES = Path(__file__).parent / "fixtures"
PACKAGED = Path(sample_graph_path()).parent / "fixtures"

CAP_GUIDED = PACKAGED / "cap_like_guided.json"
CAP_BASELINE = PACKAGED / "cap_like_baseline.json"


class TestGuidedBenchmark:
    def test_run_succeeds(self):
        result = run_replay(CAP_GUIDED)
        assert result.outcome == "succeeded"

    def test_metrics_frozen(self):
        m = run_replay(CAP_GUIDED).metrics
        assert m.queries_total == 19
        assert m.queries_to_deepest_subtask == 19
        assert m.subtasks_completed == 6
        assert m.subtasks_total == 6
        assert m.avg_queries_per_completed_subtask == pytest.approx(19 / 6)

    def test_walk_order(self):
        r = run_replay(CAP_GUIDED).runner
        assert r.view()["selection_path"] == ["T1595", "T1594", "T1190", "T1059", "T1053", "T1068"]
        for tid in ("T1595", "T1594", "T1190", "T1059", "T1053", "T1068"):
            assert r.stt.status_of(tid) is TaskStatus.COMPLETED

    def test_continue_round_costs_an_extra_command(self):
        r = run_replay(CAP_GUIDED).runner
        command_prompts = [
            e for e in r.log.events
            if e.kind == "PromptSent" and e.payload["template"] == "CommandGeneration"
        ]
        assert len(command_prompts) == 7  # six tasks, one regenerated for T1190

    def test_checkpoint_labels_in_order(self):
        r = run_replay(CAP_GUIDED).runner
        assert [c.label for c in r.log.checkpoints] == [
            "service map", "web content mapped", "capture feature found",
            "credentials recovered", "user shell", "root access",
        ]
        assert [c.index for c in r.log.checkpoints] == [1, 2, 3, 4, 5, 6]

    def test_findings_follow_the_path(self):
        r = run_replay(CAP_GUIDED).runner
        t1190 = [f.text for f in r.stt.task_states["T1190"].findings]
        assert len(t1190) == 3  # one from the Continue round, two after
        assert any("FTP login" in f for f in t1190)

    def test_artifacts_written_and_consistent(self, tmp_path):
        result = run_replay(CAP_GUIDED, out_dir=tmp_path / "run1")
        out = result.out_dir
        assert (out / "transcript.jsonl").exists()
        assert (out / "state.json").exists()
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["queries_total"] == 19
        graph = load_graph_file(sample_graph_path())
        state, header = load_state(out / "state.json", graph)
        assert state == result.runner.stt
        assert header["outcome"] == "succeeded"
        assert replay_state(graph, result.runner.log.events) == result.runner.stt

    def test_replay_is_deterministic(self, tmp_path):
        a = run_replay(CAP_GUIDED, out_dir=tmp_path / "a")
        b = run_replay(CAP_GUIDED, out_dir=tmp_path / "b")

        def strip(path):
            rows = [json.loads(l) for l in (path / "transcript.jsonl").read_text().splitlines()]
            for row in rows:
                row.pop("at")
            return rows

        assert strip(a.out_dir) == strip(b.out_dir)
        assert a.metrics.to_dict() == b.metrics.to_dict()


class TestBaselineBenchmark:
    def test_metrics_frozen(self):
        result = run_replay(CAP_BASELINE)
        m = result.metrics
        assert result.outcome == "succeeded"
        assert m.queries_total == 8
        assert m.queries_to_deepest_subtask == 6
        assert m.subtasks_completed == 3
        assert m.subtasks_total == 6
        assert m.avg_queries_per_completed_subtask == pytest.approx(2.0)

    def test_plan_revised_each_round(self):
        r = run_replay(CAP_BASELINE).runner
        assert r.session.ptt.revision == 4
        assert r.session.ptt.reads == 3

    def test_no_tree_artifacts(self, tmp_path):
        result = run_replay(CAP_BASELINE, out_dir=tmp_path)
        assert not (tmp_path / "state.json").exists()
        assert (tmp_path / "transcript.jsonl").exists()


class TestFailureFixtures:
    def test_repetition_abort(self):
        result = run_replay(FIXTURES / "repetition.json")
        assert result.outcome == "failed"
        assert "identical" in result.runner.session.termination_reason
        assert result.metrics.queries_total == 5
        assert result.metrics.subtasks_completed == 0
        assert result.metrics.avg_queries_per_completed_subtask is None

    def test_forced_selection(self):
        result = run_replay(FIXTURES / "forced_selection.json")
        r = result.runner
        commit = next(e for e in r.log.events if e.kind == "SelectionCommitted")
        assert commit.payload == {
            "anchor": "T1595", "chosen": "T1594", "origin": "forced", "forced": True,
        }
        assert result.outcome == "failed"
        assert r.session.termination_reason == "tool output script exhausted"
        assert result.metrics.queries_total == 7

    def test_truncated_outputs_cut_the_deep_query_count(self):
        result = run_replay(FIXTURES / "truncated_outputs.json")
        m = result.metrics
        assert result.outcome == "failed"
        assert m.queries_total == 11
        assert m.queries_to_deepest_subtask == 8
        assert m.subtasks_completed == 3
        assert m.avg_queries_per_completed_subtask == pytest.approx(8 / 3)


class TestFixtureValidation:
    def write(self, tmp_path, doc):
        p = tmp_path / "f.json"
        p.write_text(json.dumps(doc))
        return p

    BASE = {
        "target": "t",
        "provider_script": [],
        "tool_outputs": [],
        "subtasks_total": 1,
        "mode": "baseline",
    }

    def test_missing_keys(self, tmp_path):
        doc = dict(self.BASE)
        del doc["target"]
        with pytest.raises(FixtureInvalid):
            ReplayFixture.load(self.write(tmp_path, doc))

    def test_bad_script_shape(self, tmp_path):
        doc = dict(self.BASE, provider_script=[{"no_response": True}])
        with pytest.raises(FixtureInvalid):
            ReplayFixture.load(self.write(tmp_path, doc))

    def test_unwatchable_checkpoint_kind(self, tmp_path):
        doc = dict(self.BASE, checkpoints=[{"kind": "CheckpointMarked", "count": 1, "label": "x"}])
        with pytest.raises(FixtureInvalid):
            ReplayFixture.load(self.write(tmp_path, doc))

    def test_not_json(self, tmp_path):
        p = tmp_path / "f.json"
        p.write_text("{nope")
        with pytest.raises(FixtureInvalid):
            ReplayFixture.load(p)

    def test_relative_graph_path(self, tmp_path):
        graph_doc = {
            "schema_version": 1,
            "initial_task": "A",
            "tasks": [{"id": "A", "name": "Task A", "tactic": "t", "description": "d", "next": []}],
        }
        (tmp_path / "g.json").write_text(json.dumps(graph_doc))
        doc = {
            "target": "t", "graph": "g.json", "subtasks_total": 1,
            "provider_script": [
                {"match": {"template": "Initial"}, "response": "ok"},
                {"match": {"template": "CommandGeneration"}, "response": "scan"},
            ],
            "tool_outputs": [{"classification": "success", "text": "done"}],
        }
        fixture = ReplayFixture.load(self.write(tmp_path, doc))
        result = run_replay(fixture)
        assert result.outcome == "succeeded"
        assert result.metrics.queries_total == 2
