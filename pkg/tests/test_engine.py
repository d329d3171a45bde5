import json

import pytest

from eaa.agent import Tool, ToolOutput, ToolParam, ToolRegistry
from eaa.context import Role, ToolCall
from eaa.engine import (
    AUTO_REPLY_TEXT,
    OVERLAP_QUESTION,
    Hook,
    LoopConfig,
    LoopStatus,
    SequenceChecker,
    Session,
    ask_structured,
    check_sequence,
    find_termination_token,
    make_registration_hook,
    run_loop,
    spawn_subtask,
)
from eaa.memory import MemoryStore
from eaa.model import ModelResponse, ScriptExhausted, make_scripted_model
from eaa.policies import focusing_scenario


class Ping(Tool):
    name = "ping"
    description = "Answers pong."

    def call(self):
        return ToolOutput(text="pong")


def tc(cid, name="ping", args="{}"):
    return ToolCall(id=cid, tool_name=name, arguments_json=args)


def session_with(script, tools=(), **kwargs):
    registry = ToolRegistry()
    for tool in tools:
        registry.register(tool)
    return Session("loop-test", model=make_scripted_model(script), registry=registry, **kwargs)


class TestTerminationTokens:
    def test_whole_word_match(self):
        tokens = ("TERMINATE", "NEED HUMAN")
        assert find_termination_token("done. TERMINATE", tokens) == "TERMINATE"
        assert find_termination_token("I NEED HUMAN input", tokens) == "NEED HUMAN"
        assert find_termination_token("TERMINATED", tokens) is None
        assert find_termination_token("terminate", tokens) is None  # case-sensitive


class TestRunLoop:
    def test_immediate_terminate(self):
        session = session_with([ModelResponse(text="all done TERMINATE")])
        outcome = run_loop(session, LoopConfig(initial_prompt="go"))
        assert outcome.status is LoopStatus.TERMINATED
        assert outcome.rounds == 1

    def test_tool_calls_then_terminate(self):
        script = [
            ModelResponse(text="", tool_calls=(tc("c1"),)),
            ModelResponse(text="", tool_calls=(tc("c2"),)),
            ModelResponse(text="TERMINATE"),
        ]
        session = session_with(script, tools=[Ping()])
        outcome = run_loop(session, LoopConfig(initial_prompt="go"))
        assert outcome.status is LoopStatus.TERMINATED
        assert outcome.rounds == 3
        tool_msgs = [m for m in session.context.messages if m.role is Role.TOOL]
        assert len(tool_msgs) == 2

    def test_need_human_maps_to_handoff(self):
        session = session_with([ModelResponse(text="stuck, NEED HUMAN")])
        outcome = run_loop(session, LoopConfig(initial_prompt="go"))
        assert outcome.status is LoopStatus.HUMAN_HANDOFF

    def test_auto_reply_inserted_with_exact_text(self):
        script = [ModelResponse(text="hmm"), ModelResponse(text="ok TERMINATE")]
        session = session_with(script)
        outcome = run_loop(session, LoopConfig(initial_prompt="go"))
        assert outcome.status is LoopStatus.TERMINATED
        autos = [m for m in session.context.messages if m.role is Role.AUTO]
        assert [m.text for m in autos] == [AUTO_REPLY_TEXT]

    def test_three_autoreplies_then_handoff(self):
        script = [ModelResponse(text=f"rambling {i}") for i in range(3)]
        session = session_with(script)
        outcome = run_loop(session, LoopConfig(initial_prompt="go"))
        assert outcome.status is LoopStatus.HUMAN_HANDOFF
        assert outcome.rounds == 3
        autos = [m for m in session.context.messages if m.text == AUTO_REPLY_TEXT]
        assert len(autos) == 3

    def test_no_signal_required_hands_back(self):
        session = session_with([ModelResponse(text="plain answer")])
        outcome = run_loop(session, LoopConfig(initial_prompt="hi", require_signal_or_tool=False))
        assert outcome.status is LoopStatus.HUMAN_HANDOFF
        assert outcome.rounds == 1

    def test_round_cap(self):
        script = [ModelResponse(text="", tool_calls=(tc(f"c{i}"),)) for i in range(10)]
        session = session_with(script, tools=[Ping()])
        outcome = run_loop(session, LoopConfig(initial_prompt="go", max_rounds=4))
        assert outcome.status is LoopStatus.ROUND_CAP
        assert outcome.rounds == 4

    def test_model_error_preserves_transcript(self):
        session = session_with([ModelResponse(text="", tool_calls=(tc("c1"),))], tools=[Ping()])
        outcome = run_loop(session, LoopConfig(initial_prompt="go", max_rounds=5))
        # script exhausted on round 2 -> gateway error -> status=error
        assert outcome.status is LoopStatus.ERROR
        assert len(outcome.transcript) >= 3

    def test_every_response_becomes_assistant_message(self):
        script = [
            ModelResponse(text="a", tool_calls=(tc("c1"),)),
            ModelResponse(text="b"),
            ModelResponse(text="c TERMINATE"),
        ]
        session = session_with(script, tools=[Ping()])
        run_loop(session, LoopConfig(initial_prompt="go"))
        texts = [m.text for m in session.context.messages if m.role is Role.ASSISTANT]
        assert texts == ["a", "b", "c TERMINATE"]

    def test_unknown_tool_survives(self):
        script = [
            ModelResponse(text="", tool_calls=(tc("c1", "frobnicate"),)),
            ModelResponse(text="TERMINATE"),
        ]
        session = session_with(script, tools=[Ping()])
        outcome = run_loop(session, LoopConfig(initial_prompt="go"))
        assert outcome.status is LoopStatus.TERMINATED
        errors = [
            m for m in session.context.messages if m.role is Role.TOOL and m.tool_result.is_error
        ]
        assert len(errors) == 1 and "unknown tool" in errors[0].tool_result.text

    def test_hook_failure_not_fatal(self):
        def bad_hook(session, call, result):
            raise RuntimeError("hook exploded")

        script = [
            ModelResponse(text="", tool_calls=(tc("c1"),)),
            ModelResponse(text="TERMINATE"),
        ]
        session = session_with(script, tools=[Ping()])
        config = LoopConfig(
            initial_prompt="go", hooks=(Hook(trigger="after_tool:ping", action=bad_hook),)
        )
        assert run_loop(session, config).status is LoopStatus.TERMINATED

    def test_memory_recall_injected_before_user_message(self):
        store = MemoryStore()
        store.add_text("the detector deadtime is 2 us")
        session = session_with([ModelResponse(text="TERMINATE")], memory=store)
        run_loop(session, LoopConfig(initial_prompt="what is the detector deadtime?"))
        roles = [m.role for m in session.context.messages]
        assert roles[0] is Role.AUTO and "Relevant memory:" in session.context.messages[0].text
        assert roles[1] is Role.USER

    def test_notable_message_recorded(self):
        store = MemoryStore()
        session = session_with([ModelResponse(text="noted TERMINATE")], memory=store)
        run_loop(session, LoopConfig(initial_prompt="Remember that the beam energy is 10 keV"))
        assert len(store) == 1


class TestSequenceChecker:
    EXPECTED = ("scan_line_1d", "set_zone_plate_z", "acquire_image_2d")

    def test_in_order_no_warnings(self):
        checker = SequenceChecker(self.EXPECTED)
        calls = ["scan_line_1d", "set_zone_plate_z", "acquire_image_2d", "scan_line_1d"]
        assert [checker.check(c) for c in calls] == [None, None, None, None]

    def test_retry_soft_warning_no_advance(self):
        checker = SequenceChecker(self.EXPECTED)
        assert checker.check("scan_line_1d") is None
        warning = checker.check("scan_line_1d")
        assert warning is not None and "again" in warning
        assert checker.check("set_zone_plate_z") is None  # position unchanged by the retry

    def test_out_of_order_names_expected_tool(self):
        warning, _ = check_sequence(self.EXPECTED, "set_zone_plate_z", 0)
        assert warning is not None and "scan_line_1d" in warning

    def test_transition_table(self):
        # transition-table oracle: (position, call) -> (warns?, new position)
        table = [
            (0, "scan_line_1d", False, 1),
            (1, "set_zone_plate_z", False, 2),
            (2, "acquire_image_2d", False, 0),
            (0, "acquire_image_2d", True, 0),  # resync: index(acquire)+1 mod 3
            (1, "scan_line_1d", True, 1),  # resync: index(line)+1
            (2, "read_status", True, 2),  # unknown tool: warn, keep position
        ]
        for pos, call, warns, new_pos in table:
            warning, got = check_sequence(self.EXPECTED, call, pos)
            assert (warning is not None) == warns, (pos, call)
            assert got == new_pos, (pos, call)

    def test_cyclic_wraparound(self):
        checker = SequenceChecker(self.EXPECTED)
        for _ in range(3):
            for name in self.EXPECTED:
                assert checker.check(name) is None

    def test_warning_does_not_block_execution(self):
        script = [
            ModelResponse(text="", tool_calls=(tc("c1", "ping"),)),
            ModelResponse(text="TERMINATE"),
        ]
        session = session_with(script, tools=[Ping()])
        config = LoopConfig(initial_prompt="go", expected_sequence=("other", "ping"))
        run_loop(session, config)
        tool_msgs = [m for m in session.context.messages if m.role is Role.TOOL]
        warnings = [m for m in session.context.messages if "Warning" in m.text]
        assert len(tool_msgs) == 1  # executed despite the warning
        assert len(warnings) == 1


class TestAskStructured:
    def test_direct_answer(self):
        session = session_with([ModelResponse(text="yes")])
        assert ask_structured(session, "overlap?", ("yes", "no"), default="no") == "yes"

    def test_reask_once_then_default(self):
        session = session_with(
            [ModelResponse(text="maybe"), ModelResponse(text="who knows")]
        )
        assert ask_structured(session, "overlap?", ("yes", "no"), default="no") == "no"

    def test_reask_recovers(self):
        session = session_with([ModelResponse(text="hmm"), ModelResponse(text="No.")])
        assert ask_structured(session, "overlap?", ("yes", "no"), default="yes") == "no"

    def test_ambiguous_is_invalid(self):
        session = session_with(
            [ModelResponse(text="yes or no"), ModelResponse(text="yes and no")]
        )
        assert ask_structured(session, "overlap?", ("yes", "no"), default="no") == "no"


class TestSpawnSubtask:
    def test_parent_gains_exactly_one_message(self):
        script = [
            ModelResponse(text="child working", tool_calls=(tc("c1"),)),
            ModelResponse(text="offset: dx=3.1, dy=-2.0 TERMINATE"),
        ]
        registry = ToolRegistry()
        registry.register(Ping())
        parent = Session("parent", model=make_scripted_model(script), registry=registry)
        parent.context.append_count = 0
        before = len(parent.context)
        child_tools = ToolRegistry()
        child_tools.register(Ping())
        summary = spawn_subtask(parent, "you are a tracker", child_tools, "find the feature")
        assert len(parent.context) == before + 1
        assert "dx=3.1" in summary.text

    def test_seq_sets_disjoint(self):
        script = [ModelResponse(text="done TERMINATE")]
        parent = Session("parent", model=make_scripted_model(script), registry=ToolRegistry())
        parent.add_user_message("hello")
        child_tools = ToolRegistry()
        spawn_subtask(parent, "", child_tools, "goal")
        parent_seqs = {m.seq for m in parent.context.messages}
        child = parent.subtask_outcomes[-1].transcript
        child_seqs = {m.seq for m in child.messages}
        assert parent_seqs.isdisjoint(child_seqs)
        assert len(child_seqs) > 0

    def test_child_error_surfaces_as_summary(self):
        parent = Session(
            "parent", model=make_scripted_model([ModelResponse(text="", tool_calls=(tc("c1"),))]),
            registry=ToolRegistry(),
        )
        child_tools = ToolRegistry()
        child_tools.register(Ping())
        summary = spawn_subtask(parent, "", child_tools, "goal", LoopConfig(max_rounds=4))
        # round 2 exhausts the script -> child errors; parent continues
        assert "failed" in summary.text
        assert len(parent.context) == 1

    def test_child_round_cap_noted(self):
        script = [ModelResponse(text="", tool_calls=(tc(f"c{i}"),)) for i in range(3)]
        parent = Session("parent", model=make_scripted_model(script), registry=ToolRegistry())
        child_tools = ToolRegistry()
        child_tools.register(Ping())
        summary = spawn_subtask(parent, "", child_tools, "goal", LoopConfig(max_rounds=3))
        assert "round_cap" in summary.text


class TestRegistrationHook:
    def make_session(self, script, make_beamline):
        beamline = make_beamline(focusing_scenario(), session="hook")
        registry = ToolRegistry()
        from eaa.tools import microscope_tools

        for tool in microscope_tools(beamline):
            registry.register(tool)
        return Session("hook", model=make_scripted_model(script), registry=registry,
                       beamline=beamline)

    def test_first_acquisition_no_message(self, make_beamline):
        session = self.make_session([ModelResponse(text="x")], make_beamline)
        session.beamline.acquire_2d(0, 4, 12, 12, 0.5)
        hook = make_registration_hook(confidence_threshold=0.0)
        assert hook.action(session, None, None) == []

    def test_offset_reported_after_z_move(self, make_beamline):
        session = self.make_session([ModelResponse(text="x")], make_beamline)
        bl = session.beamline
        bl.zone_plate_z = -194.0
        bl.acquire_2d(0, 4, 12, 12, 0.5)
        bl.set_zone_plate_z(-192.0)
        bl.acquire_2d(0, 4, 12, 12, 0.5)
        hook = make_registration_hook(confidence_threshold=0.0)
        msgs = hook.action(session, None, None)
        assert len(msgs) == 1
        text = msgs[0].text
        assert "Offset vs previous image" in text
        dx = float(text.split("dx=")[1].split(",")[0])
        dy = float(text.split("dy=")[1].split(" ")[0])
        assert dx == pytest.approx(2.4, abs=0.5)
        assert dy == pytest.approx(-1.6, abs=0.5)

    def test_low_confidence_overlap_yes_reports_offset(self, make_beamline):
        session = self.make_session([ModelResponse(text="yes")], make_beamline)
        bl = session.beamline
        bl.zone_plate_z = -194.0
        bl.acquire_2d(0, 4, 12, 12, 0.5)
        bl.set_zone_plate_z(-192.0)
        bl.acquire_2d(0, 4, 12, 12, 0.5)
        hook = make_registration_hook(confidence_threshold=1.1)  # force the question
        msgs = hook.action(session, None, None)
        assert any(OVERLAP_QUESTION in m.text for m in session.context.messages)
        assert len(msgs) == 1 and "Offset vs previous image" in msgs[0].text

    def test_low_confidence_overlap_no_spawns_subtask(self, make_beamline):
        script = [
            ModelResponse(text="no"),  # overlap answer
            ModelResponse(text="relocated. offset: dx=2.5, dy=-1.5 TERMINATE"),  # child
        ]
        session = self.make_session(script, make_beamline)
        bl = session.beamline
        bl.zone_plate_z = -194.0
        bl.acquire_2d(0, 4, 12, 12, 0.5)
        bl.set_zone_plate_z(-192.0)
        bl.acquire_2d(0, 4, 12, 12, 0.5)
        hook = make_registration_hook(confidence_threshold=1.1)
        before = len(session.context)
        msgs = hook.action(session, None, None)
        assert msgs == []
        assert len(session.subtask_outcomes) == 1
        summaries = [m for m in session.context.messages[before:] if "Sub-agent" in m.text]
        assert len(summaries) == 1 and "dx=2.5" in summaries[0].text
