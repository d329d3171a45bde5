import json

import pytest

from eaa.context import (
    AUX_IMAGE_CAPTION,
    Context,
    CorruptTranscript,
    DanglingToolResult,
    Message,
    MissingImageFile,
    Role,
    RoleFieldMismatch,
    TickClock,
    ToolCall,
    ToolResult,
    assistant_message,
    aux_image_message,
    auto_message,
    load_transcript,
    persist_transcript,
    render_for_wire,
    system_message,
    tool_message,
    user_message,
)


def call(cid="c1", name="acquire_image_2d", args='{"x": 0}'):
    return ToolCall(id=cid, tool_name=name, arguments_json=args)


class TestAppend:
    def test_base_case(self):
        ctx = Context(session_id="s")
        ctx.append(user_message("hello"))
        assert len(ctx) == 1
        assert ctx.messages[0].seq == 0
        assert ctx.messages[0].timestamp is not None

    def test_seq_strictly_increasing(self):
        ctx = Context(session_id="s")
        for i in range(5):
            ctx.append(user_message(f"m{i}"))
        seqs = [m.seq for m in ctx.messages]
        assert seqs == sorted(seqs) and len(set(seqs)) == 5

    def test_dangling_tool_result(self):
        ctx = Context(session_id="s")
        ctx.append(user_message("hi"))
        with pytest.raises(DanglingToolResult):
            ctx.append(tool_message(ToolResult(call_id="zz", text="nope")))

    def test_tool_calls_only_on_assistant(self):
        with pytest.raises(RoleFieldMismatch):
            Context(session_id="s").append(
                Message(role=Role.USER, tool_calls=(call(),))
            )

    def test_tool_result_iff_tool_role(self):
        with pytest.raises(RoleFieldMismatch):
            Context(session_id="s").append(Message(role=Role.TOOL))
        with pytest.raises(RoleFieldMismatch):
            Context(session_id="s").append(
                Message(role=Role.USER, tool_result=ToolResult(call_id="c", text=""))
            )

    def test_duplicate_call_id_rejected(self):
        ctx = Context(session_id="s")
        ctx.append(assistant_message("", [call("c1")]))
        ctx.append(tool_message(ToolResult(call_id="c1", text="ok")))
        with pytest.raises(RoleFieldMismatch):
            ctx.append(assistant_message("", [call("c1")]))

    def test_malformed_arguments_rejected(self):
        ctx = Context(session_id="s")
        with pytest.raises(RoleFieldMismatch):
            ctx.append(assistant_message("", [call("c1", args="{not json")]))
        with pytest.raises(RoleFieldMismatch):
            ctx.append(assistant_message("", [call("c1", args='["list"]')]))

    def test_two_calls_two_results_replay(self):
        # replay oracle over a hand-built transcript fixture
        ctx = Context(session_id="s")
        ctx.append(assistant_message("doing two things", [call("c1"), call("c2", "move_stage")]))
        ctx.append(tool_message(ToolResult(call_id="c1", text="r1")))
        ctx.append(tool_message(ToolResult(call_id="c2", text="r2")))
        assert len(ctx) == 3
        assert ctx.pending_call_ids() == set()

    def test_result_must_match_nearest_unresolved_assistant(self):
        ctx = Context(session_id="s")
        ctx.append(assistant_message("", [call("c1")]))
        ctx.append(tool_message(ToolResult(call_id="c1", text="r1")))
        ctx.append(assistant_message("", [call("c2")]))
        with pytest.raises(DanglingToolResult):
            ctx.append(tool_message(ToolResult(call_id="c1", text="again")))


class TestRenderForWire:
    def test_text_only_identity(self):
        ctx = Context(session_id="s")
        ctx.append(system_message("sys"))
        ctx.append(user_message("u1"))
        ctx.append(assistant_message("a1"))
        wire = render_for_wire(ctx)
        assert [m["role"] for m in wire] == ["system", "user", "assistant"]
        assert wire[1]["content"] == "u1"

    def test_auto_renders_as_user(self):
        ctx = Context(session_id="s")
        ctx.append(auto_message("workflow says"))
        assert render_for_wire(ctx)[0]["role"] == "user"

    def test_tool_image_injection(self, tiny_png):
        path = tiny_png("scan_001.png")
        ctx = Context(session_id="s")
        ctx.append(assistant_message("", [call("c1")]))
        ctx.append(tool_message(ToolResult(call_id="c1", text="done", image_paths=(path,))))
        wire = render_for_wire(ctx)
        assert [m["role"] for m in wire] == ["assistant", "tool", "user"]
        blocks = wire[2]["content"]
        images = [b for b in blocks if b["type"] == "image_url"]
        assert len(images) == 1
        assert images[0]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_injected_block_count_matches_paths(self, tiny_png):
        # count-equality oracle: injected image blocks == len(image_paths)
        paths = (tiny_png("a.png"), tiny_png("b.png"))
        ctx = Context(session_id="s")
        ctx.append(assistant_message("", [call("c1")]))
        ctx.append(tool_message(ToolResult(call_id="c1", text="t", image_paths=paths)))
        wire = render_for_wire(ctx)
        images = [b for b in wire[-1]["content"] if b["type"] == "image_url"]
        assert len(images) == 2

    def test_existing_aux_message_not_double_injected(self, tiny_png):
        path = tiny_png("c.png")
        result = ToolResult(call_id="c1", text="t", image_paths=(path,))
        ctx = Context(session_id="s")
        ctx.append(assistant_message("", [call("c1")]))
        ctx.append(tool_message(result))
        ctx.append(aux_image_message(result))
        wire = render_for_wire(ctx)
        user_image_msgs = [
            m
            for m in wire
            if m["role"] == "user"
            and isinstance(m["content"], list)
            and any(b["type"] == "image_url" for b in m["content"])
        ]
        assert len(user_image_msgs) == 1
        assert AUX_IMAGE_CAPTION.format(call_id="c1") in json.dumps(wire)

    def test_missing_image_file(self):
        ctx = Context(session_id="s")
        ctx.append(assistant_message("", [call("c1")]))
        ctx.append(
            tool_message(ToolResult(call_id="c1", text="t", image_paths=("/nope/gone.png",)))
        )
        with pytest.raises(MissingImageFile):
            render_for_wire(ctx)

    def test_assistant_tool_calls_on_wire(self):
        ctx = Context(session_id="s")
        ctx.append(assistant_message("text", [call("c9", "move_stage", '{"x": 1, "y": 2}')]))
        entry = render_for_wire(ctx)[0]
        assert entry["tool_calls"][0]["function"]["name"] == "move_stage"
        assert entry["tool_calls"][0]["id"] == "c9"


class TestPersistence:
    def build(self, tiny_png):
        ctx = Context(session_id="sess-1", clock=TickClock())
        ctx.metadata["note"] = "fixture"
        ctx.append(system_message("sys"))
        ctx.append(user_message("u"))
        ctx.append(assistant_message("a", [call("c1")]))
        ctx.append(
            tool_message(ToolResult(call_id="c1", text="ok", image_paths=(tiny_png(),)))
        )
        ctx.append(auto_message("done"))
        return ctx

    def test_round_trip_identity(self, tmp_path, tiny_png):
        ctx = self.build(tiny_png)
        path = tmp_path / "t.jsonl"
        persist_transcript(ctx, path)
        loaded = load_transcript(path)
        assert loaded.session_id == ctx.session_id
        assert loaded.metadata == ctx.metadata
        assert loaded.messages == ctx.messages

    def test_image_paths_preserved_verbatim(self, tmp_path, tiny_png):
        ctx = self.build(tiny_png)
        path = tmp_path / "t.jsonl"
        persist_transcript(ctx, path)
        loaded = load_transcript(path)
        orig = ctx.messages[3].tool_result.image_paths
        assert loaded.messages[3].tool_result.image_paths == orig

    def test_truncated_line_is_corrupt(self, tmp_path, tiny_png):
        ctx = self.build(tiny_png)
        path = tmp_path / "t.jsonl"
        persist_transcript(ctx, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1] + [lines[-1][: len(lines[-1]) // 2]]))
        with pytest.raises(CorruptTranscript):
            load_transcript(path)

    def test_append_resumes_sequence(self, tmp_path, tiny_png):
        ctx = self.build(tiny_png)
        path = tmp_path / "t.jsonl"
        persist_transcript(ctx, path)
        loaded = load_transcript(path)
        msg = loaded.append(user_message("next"))
        assert msg.seq == ctx.messages[-1].seq + 1
