from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valuesim.agent import (
    MEMORY_CAPACITY,
    AgentMemory,
    AgentState,
    Impression,
    fallback_merge,
    parse_impression,
    recall_context,
    remember,
    update_impression,
    update_self_perception,
)
from valuesim.backend import Backend, ChatRequest, ChatResponse, RequestTag
from valuesim.errors import BackendError
from valuesim.persona import Complexity, PersonaProfile


def profile(agent_id: str = "agent_00", name: str = "Ada") -> PersonaProfile:
    return PersonaProfile(
        agent_id=agent_id,
        display_name=name,
        values=(),
        complexity=Complexity.NONE,
        narrative=f"{name} keeps to themselves and fixes clocks.",
        elicitation_trace=[],
    )


# --------------------------------------------------------------------------
# Bounded memory
# --------------------------------------------------------------------------


class TestMemoryBounds:
    def test_twelve_inserts_cause_seven_merges(self):
        mem = AgentMemory()
        merges = 0
        for i in range(12):
            if mem.insert(f"memory {i}", round_index=i) is not None:
                merges += 1
        assert merges == 7
        assert mem.total_merges == 7
        assert len(mem.slots) == MEMORY_CAPACITY

    def test_first_merge_takes_the_two_oldest(self):
        mem = AgentMemory()
        for i in range(5):
            mem.insert(f"m{i}", round_index=i)
        record = mem.insert("m5", round_index=5)
        assert record is not None
        assert record.parent_summaries == ("m0", "m1")
        assert record.merged_merge_count == 1
        merged = next(s for s in mem.slots if s.merge_count == 1)
        assert merged.summary == fallback_merge("m0", "m1")

    def test_merge_counts_accumulate(self):
        mem = AgentMemory(capacity=2)
        mem.insert("a", 0)
        mem.insert("b", 0)
        first = mem.insert("c", 0)
        second = mem.insert("d", 0)
        assert first is not None and first.parent_merge_counts == (0, 0)
        assert second is not None and second.parent_merge_counts == (1, 0)
        assert second.merged_merge_count == 2

    def test_merged_slot_unions_conversation_sources(self):
        mem = AgentMemory(capacity=2)
        mem.insert("a", 0, source_conversation_ids=["r001c01"])
        mem.insert("b", 0, source_conversation_ids=["r001c02", "r001c01"])
        record = mem.insert("c", 1, source_conversation_ids=["r002c01"])
        assert record is not None
        assert record.source_conversation_ids == ["r001c01", "r001c02"]

    def test_custom_merger_is_used(self):
        mem = AgentMemory(capacity=2)
        mem.insert("first", 0)
        mem.insert("second", 0)
        record = mem.insert("third", 0, merger=lambda a, b: f"<{a}+{b}>")
        assert record is not None and record.merged_summary == "<first+second>"

    def test_raising_or_empty_merger_falls_back(self):
        def boom(a: str, b: str) -> str:
            raise RuntimeError("no")

        for merger in (boom, lambda a, b: ""):
            mem = AgentMemory(capacity=2)
            mem.insert("first", 0)
            mem.insert("second", 0)
            record = mem.insert("third", 0, merger=merger)
            assert record is not None
            assert record.merged_summary == "first | second"

    def test_rejects_empty_summary_and_tiny_capacity(self):
        with pytest.raises(ValueError):
            AgentMemory(capacity=1)
        with pytest.raises(ValueError):
            AgentMemory().insert("", 0)

    @given(
        st.lists(
            st.text(alphabet="abcdef ", min_size=1).filter(str.strip),
            min_size=1,
            max_size=40,
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_capacity_and_conservation_hold_for_any_sequence(self, summaries):
        mem = AgentMemory()
        for i, text in enumerate(summaries):
            mem.insert(text, round_index=i)
            assert len(mem.slots) <= MEMORY_CAPACITY
            assert mem.insertion_accounting() == mem.total_insertions
        assert mem.total_insertions == len(summaries)
        assert len(mem.slots) == len(summaries) - mem.total_merges

    @given(st.lists(st.booleans(), min_size=6, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_conservation_survives_flaky_mergers(self, failures):
        mem = AgentMemory()
        for i, fail in enumerate(failures):
            def merger(a: str, b: str, fail=fail) -> str:
                if fail:
                    raise RuntimeError("flaky")
                return f"{a} & {b}"

            mem.insert(f"note {i}", round_index=i, merger=merger)
        assert mem.insertion_accounting() == mem.total_insertions == len(failures)


# --------------------------------------------------------------------------
# Recall
# --------------------------------------------------------------------------


class TestRecall:
    def test_recall_is_mru_first_within_budget(self):
        mem = AgentMemory()
        for i in range(4):
            mem.insert(f"slot {i} body", round_index=i)
        got = mem.recall(round_index=9, budget_tokens=6)  # 3 words per slot
        assert [s.summary for s in got] == ["slot 3 body", "slot 2 body"]
        assert all(s.last_used_round == 9 for s in got)

    def test_back_to_back_recall_is_stable(self):
        mem = AgentMemory()
        for i in range(5):
            mem.insert(f"slot {i} body", round_index=i)
        first = [s.summary for s in mem.recall(10, budget_tokens=100)]
        second = [s.summary for s in mem.recall(10, budget_tokens=100)]
        assert first == second == [f"slot {i} body" for i in (4, 3, 2, 1, 0)]

    def test_zero_budget_recalls_nothing(self):
        mem = AgentMemory()
        mem.insert("anything", 0)
        assert mem.recall(1, budget_tokens=0) == []

    def test_slots_are_all_or_nothing(self):
        mem = AgentMemory()
        mem.insert("one two three four", 0)
        mem.insert("five six", 1)
        got = mem.recall(2, budget_tokens=3)
        # The 2-word MRU slot fits; the 4-word one would overflow the budget.
        assert [s.summary for s in got] == ["five six"]

    def test_unrecalled_slots_stay_least_recent(self):
        mem = AgentMemory()
        for i in range(5):
            mem.insert(f"s{i}", round_index=i)
        mem.recall(8, budget_tokens=3)  # refreshes s4..s2, leaves s0 and s1
        record = mem.insert("s5", round_index=9)
        assert record is not None and record.parent_summaries == ("s0", "s1")


# --------------------------------------------------------------------------
# Context assembly
# --------------------------------------------------------------------------


class TestRecallContext:
    def test_orders_sections_and_respects_budget(self):
        state = AgentState(profile=profile())
        state.self_perception = "Ada now trusts the group."
        state.impressions["agent_01"] = Impression("steady under pressure", 0.5)
        state.memory.insert("they fixed the well together", 2)
        text = recall_context(state, round_index=3, budget_tokens=200)
        background = text.index("Background:")
        self_pos = text.index("How you see yourself now:")
        impressions = text.index("Your impressions of others:")
        memories = text.index("What you remember:")
        assert background < self_pos < impressions < memories
        assert "- agent_01: steady under pressure (affinity +0.5)" in text
        assert "- they fixed the well together" in text

    def test_unchanged_self_perception_is_omitted(self):
        state = AgentState(profile=profile())
        text = recall_context(state, 0, budget_tokens=200)
        assert "How you see yourself now" not in text

    def test_tight_budget_truncates_fixed_sections_first(self):
        state = AgentState(profile=profile())
        state.memory.insert("never shown", 0)
        text = recall_context(state, 1, budget_tokens=3)
        assert len(text.split()) <= 3
        assert "never shown" not in text


# --------------------------------------------------------------------------
# Backend-coupled updates
# --------------------------------------------------------------------------


class _ScriptedBackend(Backend):
    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.requests: list[ChatRequest] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.requests.append(req)
        if not self.replies:
            raise AssertionError("script exhausted")
        return ChatResponse(text=self.replies.pop(0))


class _FailingBackend(Backend):
    def complete(self, req: ChatRequest) -> ChatResponse:
        raise BackendError("wire down")


class TestRemember:
    def test_merge_summary_comes_from_the_backend(self):
        state = AgentState(profile=profile())
        backend = _ScriptedBackend(["the whole week, condensed"])
        for i in range(5):
            state.memory.insert(f"day {i}", i)
        record = remember(state, "day 5", 5, backend)
        assert record is not None
        assert record.merged_summary == "the whole week, condensed"
        req = backend.requests[0]
        assert req.tag is RequestTag.SUMMARIZE
        assert "day 0" in req.messages[1].content
        assert "day 1" in req.messages[1].content

    def test_backend_failure_degrades_to_deterministic_merge(self):
        state = AgentState(profile=profile())
        for i in range(5):
            state.memory.insert(f"day {i}", i)
        record = remember(state, "day 5", 5, _FailingBackend())
        assert record is not None
        assert record.merged_summary == "day 0 | day 1"


class TestSelfPerception:
    def test_no_change_reply_keeps_perception(self):
        state = AgentState(profile=profile())
        for reply in ("no change", "No change.", "  NO CHANGE  "):
            out = update_self_perception(state, "small talk", _ScriptedBackend([reply]))
            assert not out.changed
            assert state.self_perception == profile().narrative

    def test_replacement_reply_updates_perception(self):
        state = AgentState(profile=profile())
        backend = _ScriptedBackend(["Ada realizes she enjoys company."])
        out = update_self_perception(state, "a warm chat", backend)
        assert out.changed
        assert out.old == profile().narrative
        assert state.self_perception == "Ada realizes she enjoys company."

    def test_backend_error_leaves_perception_alone(self):
        state = AgentState(profile=profile())
        out = update_self_perception(state, "anything", _FailingBackend())
        assert out.failed and not out.changed
        assert state.self_perception == profile().narrative


class TestImpressions:
    def test_parse_clamps_affinity(self):
        assert parse_impression("Impression: bold\nAffinity: 3.5") == ("bold", 1.0)
        assert parse_impression("Impression: cold\nAffinity: -2") == ("cold", -1.0)
        assert parse_impression("affinity: 0.25") == ("affinity: 0.25", 0.25)
        assert parse_impression("just words") is None

    def test_update_stores_parsed_impression(self):
        state = AgentState(profile=profile())
        backend = _ScriptedBackend(["Impression: patient listener\nAffinity: 0.5"])
        out = update_impression(state, "agent_01", "they talked", backend)
        assert not out.kept_previous
        assert state.impressions["agent_01"].text == "patient listener"
        assert state.impressions["agent_01"].affinity == 0.5

    def test_reminder_retry_then_success(self):
        state = AgentState(profile=profile())
        backend = _ScriptedBackend(["???", "Impression: wary\nAffinity: -0.25"])
        out = update_impression(state, "agent_01", "a spat", backend)
        assert not out.kept_previous and out.affinity == -0.25
        retry = backend.requests[1]
        assert retry.messages[-1].role == "user"
        assert retry.messages[-1].content.startswith("Format reminder:")

    def test_unparsable_twice_keeps_previous_impression(self):
        state = AgentState(profile=profile())
        state.impressions["agent_01"] = Impression("old read", 0.75)
        backend = _ScriptedBackend(["???", "still ???"])
        out = update_impression(state, "agent_01", "chaos", backend)
        assert out.kept_previous
        assert (out.text, out.affinity) == ("old read", 0.75)
        assert state.impressions["agent_01"].affinity == 0.75

    def test_backend_error_without_prior_yields_neutral(self):
        state = AgentState(profile=profile())
        out = update_impression(state, "agent_01", "anything", _FailingBackend())
        assert out.kept_previous and out.text == "" and out.affinity == 0.0
        assert "agent_01" not in state.impressions

    def test_self_impression_is_rejected(self):
        state = AgentState(profile=profile())
        with pytest.raises(ValueError):
            update_impression(state, "agent_00", "mirror", _FailingBackend())
