"""Phase machine legality, parsers, repetition guard, opaque plan blob."""
import pytest

from pentree.errors import IllegalTransition, InvalidTarget, WrongMode, WrongPhase
from pentree.graph import TaskStatus
from pentree.pipeline import (
    BaselinePtt,
    Outcome,
    Phase,
    PipelineMode,
    RepetitionWindow,
    Session,
    SessionConfig,
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
from pentree.prompts import TemplateId


class TestSessionConstruction:
    def test_blank_target_refused(self, fan_graph):
        with pytest.raises(InvalidTarget):
            new_session(PipelineMode.GUIDED, "   ", graph=fan_graph)

    def test_guided_needs_graph(self):
        with pytest.raises(InvalidTarget):
            new_session(PipelineMode.GUIDED, "10.0.0.5")

    def test_guided_starts_clean(self, fan_graph):
        s = new_session(PipelineMode.GUIDED, " 10.0.0.5 ", graph=fan_graph)
        assert s.target == "10.0.0.5"
        assert s.phase is Phase.INITIALIZATION
        assert s.stt.status_of("A") is TaskStatus.TODO
        assert s.ptt is None

    def test_baseline_has_no_tree(self):
        s = new_session(PipelineMode.BASELINE, "10.0.0.5")
        assert s.stt is None


class TestPhaseMachine:
    def fresh(self):
        return new_session(PipelineMode.BASELINE, "t")

    def test_normal_guided_cycle(self):
        s = self.fresh()
        for phase in (
            Phase.COMMAND_GENERATION,
            Phase.AWAITING_TOOL_OUTPUT,
            Phase.SUMMARIZATION,
            Phase.STATUS_UPDATE,
            Phase.SELECTION,
            Phase.COMMAND_GENERATION,
            Phase.AWAITING_TOOL_OUTPUT,
        ):
            s.enter(phase)
        assert s.phase is Phase.AWAITING_TOOL_OUTPUT

    def test_status_update_may_skip_selection(self):
        s = self.fresh()
        s.enter(Phase.COMMAND_GENERATION)
        s.enter(Phase.AWAITING_TOOL_OUTPUT)
        s.enter(Phase.SUMMARIZATION)
        s.enter(Phase.STATUS_UPDATE)
        s.enter(Phase.COMMAND_GENERATION)

    def test_awaiting_routes_direct_to_selection_or_command(self):
        s = self.fresh()
        s.enter(Phase.COMMAND_GENERATION)
        s.enter(Phase.AWAITING_TOOL_OUTPUT)
        s.enter(Phase.SELECTION)
        s2 = self.fresh()
        s2.enter(Phase.COMMAND_GENERATION)
        s2.enter(Phase.AWAITING_TOOL_OUTPUT)
        s2.enter(Phase.COMMAND_GENERATION)

    def test_baseline_reasoning_goes_straight_to_command(self):
        s = self.fresh()
        s.enter(Phase.COMMAND_GENERATION)
        s.enter(Phase.AWAITING_TOOL_OUTPUT)
        s.enter(Phase.SUMMARIZATION)
        s.enter(Phase.COMMAND_GENERATION)

    def test_illegal_edges_rejected(self):
        s = self.fresh()
        with pytest.raises(IllegalTransition):
            s.enter(Phase.SELECTION)
        s.enter(Phase.COMMAND_GENERATION)
        with pytest.raises(IllegalTransition):
            s.enter(Phase.STATUS_UPDATE)

    def test_terminate_is_one_way(self):
        s = self.fresh()
        s.terminate(Outcome.ABORTED, "operator quit")
        assert s.phase is Phase.TERMINATED
        assert s.outcome is Outcome.ABORTED
        with pytest.raises(IllegalTransition):
            s.enter(Phase.COMMAND_GENERATION)
        with pytest.raises(IllegalTransition):
            s.terminate(Outcome.FAILED, "again")

    def test_terminated_not_enterable_via_enter(self):
        s = self.fresh()
        with pytest.raises(IllegalTransition):
            s.enter(Phase.TERMINATED)

    def test_require_phase_and_mode(self, fan_graph):
        s = new_session(PipelineMode.GUIDED, "t", graph=fan_graph)
        with pytest.raises(WrongPhase):
            s.require_phase(Phase.AWAITING_TOOL_OUTPUT)
        with pytest.raises(WrongMode):
            s.require_mode(PipelineMode.BASELINE)
        s.require_mode(PipelineMode.GUIDED)


class TestRepetitionWindow:
    def test_three_identical_aborts(self):
        w = RepetitionWindow(3)
        assert w.observe("run nmap") is False
        assert w.observe("run  NMAP") is False  # same after normalization
        assert w.observe("Run nmap\n") is True

    def test_interruption_resets_the_run(self):
        w = RepetitionWindow(3)
        w.observe("a")
        w.observe("a")
        assert w.observe("b") is False
        assert w.observe("a") is False
        assert w.observe("a") is False  # window is b,a,a

    def test_window_of_two(self):
        w = RepetitionWindow(2)
        w.observe("x")
        assert w.observe("x") is True

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            RepetitionWindow(1)


class TestParseSummary:
    def test_structured_response(self):
        text = (
            "The scan went well.\n"
            "Key findings:\n"
            "- port 80 open\n"
            "- port 22 open\n"
            "* nginx 1.18 behind port 80\n"
            "\n"
            "Next steps: the task is complete, proceed to the next task.\n"
        )
        out = parse_summary(text)
        assert out.key_findings == ["port 80 open", "port 22 open", "nginx 1.18 behind port 80"]
        assert out.recommendation == "Proceed"

    def test_continue_when_more_work_remains(self):
        text = (
            "Findings:\n"
            "1. partial directory listing\n"
            "Next steps: do not proceed yet, enumerate the remaining paths.\n"
        )
        out = parse_summary(text)
        assert out.key_findings == ["partial directory listing"]
        assert out.recommendation == "Continue"

    def test_numbered_bullets_and_paren_style(self):
        out = parse_summary("findings\n1) alpha\n2) beta\n")
        assert out.key_findings == ["alpha", "beta"]

    def test_garbage_yields_empty_continue(self):
        out = parse_summary("??? no structure whatsoever")
        assert out.key_findings == []
        assert out.recommendation == "Continue"
        assert out.raw_response == "??? no structure whatsoever"

    def test_bullets_without_heading_still_collected(self):
        out = parse_summary("- loose bullet one\n- loose bullet two")
        assert out.key_findings == ["loose bullet one", "loose bullet two"]

    def test_bullets_in_next_step_section_not_findings(self):
        text = "Key findings:\n- real one\nNext steps:\n- proceed to exploitation\n"
        out = parse_summary(text)
        assert out.key_findings == ["real one"]
        assert out.recommendation == "Proceed"

    def test_never_raises(self):
        for text in ("", "\n\n\n", "-", "1.", "findings", "next step"):
            parse_summary(text)


class TestParseSelection:
    CANDS = [("T1592", "Gather Victim Host Information"), ("T1590", "Gather Victim Network Information")]

    def test_id_match(self):
        assert parse_selection("I pick T1590 next.", self.CANDS) == "T1590"

    def test_id_case_insensitive(self):
        assert parse_selection("t1592 looks promising", self.CANDS) == "T1592"

    def test_name_match_when_no_id(self):
        text = "Let's gather victim network information first."
        assert parse_selection(text, self.CANDS) == "T1590"

    def test_id_pass_wins_over_name_pass(self):
        # response names one candidate but quotes the other's id
        text = "Gather Victim Host Information is tempting but T1590 is better"
        assert parse_selection(text, self.CANDS) == "T1590"

    def test_multiple_ids_resolve_to_first_candidate(self):
        text = "either T1590 or T1592 would work"
        assert parse_selection(text, self.CANDS) == "T1592"

    def test_no_match(self):
        assert parse_selection("let me think about it", self.CANDS) is None
        assert parse_selection("", self.CANDS) is None


class TestBaselinePtt:
    def test_reads_are_counted(self):
        ptt = BaselinePtt("1. Reconnaissance - [to-do]")
        assert ptt.reads == 0
        _ = ptt.text
        _ = ptt.text
        assert ptt.reads == 2

    def test_revise_bumps_revision_without_reading(self):
        ptt = BaselinePtt("v1")
        assert ptt.revision == 1
        ptt.revise("v2")
        ptt.revise("v3")
        assert ptt.revision == 3
        assert ptt.reads == 0
        assert ptt.text == "v3"


class TestPromptBuilders:
    def test_initial_prompt_carries_target_and_first_task(self, fan_graph):
        s = new_session(PipelineMode.GUIDED, "10.0.0.5", graph=fan_graph)
        env = build_initial_prompt(s)
        assert env.template_id is TemplateId.INITIAL
        assert "10.0.0.5" in env.rendered_text
        assert "Task A: Do the A step of the exercise." in env.rendered_text

    def test_selection_prompt_lists_candidates_in_edge_order(self, fan_graph):
        s = new_session(PipelineMode.GUIDED, "t", graph=fan_graph)
        s.stt.set_status("A", TaskStatus.IN_PROGRESS)
        s.stt.set_status("A", TaskStatus.COMPLETED)
        env = build_selection_prompt(s)
        text = env.rendered_text
        assert text.index("- B Task B") < text.index("- C Task C") < text.index("- D Task D")
        assert "(no findings recorded)" in text

    def test_selection_prompt_shows_anchor_findings(self, fan_graph):
        from pentree.graph import Finding
        s = new_session(PipelineMode.GUIDED, "t", graph=fan_graph)
        s.stt.set_status("A", TaskStatus.IN_PROGRESS)
        s.stt.add_finding("A", Finding("port 445 open", 1, "now"))
        s.stt.set_status("A", TaskStatus.COMPLETED)
        env = build_selection_prompt(s)
        assert "- port 445 open" in env.rendered_text

    def test_selection_candidates_pairs(self, fan_graph):
        s = new_session(PipelineMode.GUIDED, "t", graph=fan_graph)
        s.stt.set_status("A", TaskStatus.IN_PROGRESS)
        s.stt.set_status("A", TaskStatus.COMPLETED)
        assert selection_candidates(s) == [("B", "Task B"), ("C", "Task C"), ("D", "Task D")]

    def test_command_prompt(self):
        env = build_command_prompt("Task B: step B")
        assert env.template_id is TemplateId.COMMAND_GENERATION
        assert "Task B: step B" in env.rendered_text

    def test_summarization_prompt_appends_output(self):
        env = build_summarization_prompt("Nmap scan report for 10.0.0.5")
        assert env.rendered_text.endswith("Nmap scan report for 10.0.0.5")
        assert env.placeholders.get("[appended #1]") == "Nmap scan report for 10.0.0.5"

    def test_baseline_builders_enforce_mode(self, fan_graph):
        guided = new_session(PipelineMode.GUIDED, "t", graph=fan_graph)
        with pytest.raises(WrongMode):
            build_baseline_initial_prompt(guided)
        baseline = new_session(PipelineMode.BASELINE, "t")
        with pytest.raises(WrongMode):
            build_initial_prompt(baseline)

    def test_baseline_reasoning_reads_ptt_once(self):
        s = new_session(PipelineMode.BASELINE, "t")
        s.ptt = BaselinePtt("plan text here")
        env = build_baseline_reasoning_prompt(s, "tool said hi")
        assert s.ptt.reads == 1
        assert "plan text here" in env.rendered_text
        assert env.rendered_text.index("plan text here") < env.rendered_text.index("tool said hi")
