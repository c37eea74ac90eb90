"""Per-agent cognitive state: self-perception, impressions of others, action
history, and a bounded conversation memory with LRU merge, plus the
prompt-context assembly used for every agent decision.

Memory is a rolling window of at most five slots. When a sixth item arrives,
the two least recently used slots are merged into one (via a summarization
callable, with a deterministic truncate-and-join fallback) before the new
item is inserted. Nothing is ever evicted, only merged, so
sum(merge_count + 1) over live slots always equals the total number of
insertions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .backend import (
    Backend,
    ChatRequest,
    Message,
    RequestTag,
    approx_token_count,
)
from .errors import BackendError, ParseFailedTwiceError
from .persona import PersonaProfile

MEMORY_CAPACITY = 5


@dataclass
class MemorySlot:
    summary: str
    last_used_round: int
    source_conversation_ids: list[str] = field(default_factory=list)
    merge_count: int = 0
    # Monotone per-memory use counter; makes LRU ordering total without ties.
    use_seq: int = 0

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "last_used_round": self.last_used_round,
            "source_conversation_ids": list(self.source_conversation_ids),
            "merge_count": self.merge_count,
            "use_seq": self.use_seq,
        }


@dataclass
class MergeRecord:
    """What a single merge did; emitted so the event log can carry it."""

    parent_summaries: tuple[str, str]
    parent_merge_counts: tuple[int, int]
    merged_summary: str
    merged_merge_count: int
    source_conversation_ids: list[str]


def fallback_merge(a: str, b: str, keep_words: int = 40) -> str:
    """Deterministic merge used when the summarization call fails."""
    head_a = " ".join(a.split()[:keep_words])
    head_b = " ".join(b.split()[:keep_words])
    return f"{head_a} | {head_b}"


class AgentMemory:
    """At most ``capacity`` slots; overflow merges the two LRU slots."""

    def __init__(self, capacity: int = MEMORY_CAPACITY):
        if capacity < 2:
            raise ValueError("memory capacity must be at least 2")
        self.capacity = capacity
        self.slots: list[MemorySlot] = []
        self._use_counter = 0
        self.total_insertions = 0
        self.total_merges = 0

    def _tick(self) -> int:
        self._use_counter += 1
        return self._use_counter

    def insert(
        self,
        summary: str,
        round_index: int,
        source_conversation_ids: list[str] | None = None,
        merger: Callable[[str, str], str] | None = None,
    ) -> MergeRecord | None:
        """Insert a memory; returns the MergeRecord if a merge was needed."""
        if not summary:
            raise ValueError("memory summary must be non-empty")
        record: MergeRecord | None = None
        if len(self.slots) >= self.capacity:
            record = self._merge_lru(merger)
        self.slots.append(
            MemorySlot(
                summary=summary,
                last_used_round=round_index,
                source_conversation_ids=list(source_conversation_ids or []),
                use_seq=self._tick(),
            )
        )
        self.total_insertions += 1
        return record

    def _merge_lru(self, merger: Callable[[str, str], str] | None) -> MergeRecord:
        ordered = sorted(self.slots, key=lambda s: s.use_seq)
        a, b = ordered[0], ordered[1]
        merge = merger or fallback_merge
        try:
            merged_text = merge(a.summary, b.summary)
        except Exception:
            merged_text = fallback_merge(a.summary, b.summary)
        if not merged_text:
            merged_text = fallback_merge(a.summary, b.summary)
        merged = MemorySlot(
            summary=merged_text,
            last_used_round=max(a.last_used_round, b.last_used_round),
            source_conversation_ids=sorted(
                set(a.source_conversation_ids) | set(b.source_conversation_ids)
            ),
            merge_count=a.merge_count + b.merge_count + 1,
            use_seq=max(a.use_seq, b.use_seq),
        )
        self.slots = [s for s in self.slots if s is not a and s is not b]
        self.slots.append(merged)
        self.total_merges += 1
        return MergeRecord(
            parent_summaries=(a.summary, b.summary),
            parent_merge_counts=(a.merge_count, b.merge_count),
            merged_summary=merged.summary,
            merged_merge_count=merged.merge_count,
            source_conversation_ids=list(merged.source_conversation_ids),
        )

    def recall(self, round_index: int, budget_tokens: int) -> list[MemorySlot]:
        """Whole slots, most recently used first, within the token budget.

        Included slots have their recency refreshed in a way that preserves
        their relative order, so back-to-back recalls list slots identically.
        """
        ordered = sorted(self.slots, key=lambda s: s.use_seq, reverse=True)
        included: list[MemorySlot] = []
        spent = 0
        for slot in ordered:
            cost = approx_token_count(slot.summary)
            if spent + cost > budget_tokens:
                break
            included.append(slot)
            spent += cost
        # Refresh least-recent first so the most recent ends up newest again.
        for slot in reversed(included):
            slot.last_used_round = round_index
            slot.use_seq = self._tick()
        return included

    def insertion_accounting(self) -> int:
        """sum(merge_count + 1) over slots; equals total insertions."""
        return sum(s.merge_count + 1 for s in self.slots)


@dataclass
class Impression:
    text: str
    affinity: float  # in [-1, 1]


@dataclass
class AgentState:
    profile: PersonaProfile
    self_perception: str = ""
    impressions: dict[str, Impression] = field(default_factory=dict)
    action_history: list[int] = field(default_factory=list)  # event seq refs
    memory: AgentMemory = field(default_factory=AgentMemory)
    busy: bool = False

    def __post_init__(self) -> None:
        if not self.self_perception:
            self.self_perception = self.profile.narrative

    @property
    def agent_id(self) -> str:
        return self.profile.agent_id

    def affinity_for(self, other_id: str) -> float:
        imp = self.impressions.get(other_id)
        return imp.affinity if imp else 0.0

    def system_prompt(self) -> str:
        parts = [f"You are {self.profile.display_name}."]
        if self.profile.values:
            names = " and ".join(str(v) for v in self.profile.values)
            parts.append(f"What you hold dearest: {names}.")
        parts.append(self.profile.narrative)
        return " ".join(parts)

    def to_snapshot(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "self_perception": self.self_perception,
            "impressions": {
                k: {"text": v.text, "affinity": v.affinity}
                for k, v in sorted(self.impressions.items())
            },
            "action_history": list(self.action_history),
            "memory": [s.to_dict() for s in self.memory.slots],
            "busy": self.busy,
        }


# --------------------------------------------------------------------------
# Operations (backend-calling; event logging is the caller's job)
# --------------------------------------------------------------------------


def recall_context(state: AgentState, round_index: int, budget_tokens: int) -> str:
    """Prompt context: persona narrative, self-perception, impressions, then
    memory slots most-recently-used first, all within the word budget.

    Fixed sections are truncated at the budget boundary; memory slots are
    all-or-nothing and only included slots get their recency refreshed.
    """
    segments = [f"Background: {state.profile.narrative}"]
    if state.self_perception != state.profile.narrative:
        segments.append(f"How you see yourself now: {state.self_perception}")
    if state.impressions:
        lines = [
            f"- {other}: {imp.text} (affinity {imp.affinity:+.1f})"
            for other, imp in sorted(state.impressions.items())
        ]
        segments.append("Your impressions of others:\n" + "\n".join(lines))

    out: list[str] = []
    remaining = budget_tokens
    for seg in segments:
        cost = approx_token_count(seg)
        if cost <= remaining:
            out.append(seg)
            remaining -= cost
        else:
            if remaining > 0:
                out.append(" ".join(seg.split()[:remaining]))
            remaining = 0
            break
    if remaining > 0:
        slots = state.memory.recall(round_index, remaining)
        if slots:
            out.append(
                "What you remember:\n" + "\n".join(f"- {s.summary}" for s in slots)
            )
    return "\n".join(out)


def remember(
    state: AgentState,
    new_summary: str,
    round_index: int,
    backend: Backend,
    source_conversation_ids: list[str] | None = None,
) -> MergeRecord | None:
    """Insert a conversation memory, merging the two LRU slots if full."""

    def summarize_merge(a: str, b: str) -> str:
        req = ChatRequest(
            messages=[
                Message("system", "Combine two memories into one concise memory."),
                Message("user", f"First memory: {a}\nSecond memory: {b}"),
            ],
            tag=RequestTag.SUMMARIZE,
        )
        return backend.complete(req).text

    return state.memory.insert(
        new_summary, round_index, source_conversation_ids, merger=summarize_merge
    )


@dataclass
class SelfPerceptionOutcome:
    changed: bool
    old: str
    new: str
    failed: bool = False  # backend error; perception left alone


def update_self_perception(
    state: AgentState, conversation_summary: str, backend: Backend
) -> SelfPerceptionOutcome:
    old = state.self_perception
    req = ChatRequest(
        messages=[
            Message("system", state.system_prompt()),
            Message(
                "user",
                "You just had this conversation:\n"
                f"{conversation_summary}\n"
                f"Your current self-perception: {old}\n"
                "If the conversation changed how you see yourself, reply with the "
                "replacement self-perception in 1-2 sentences. Otherwise reply "
                "exactly: no change",
            ),
        ],
        tag=RequestTag.SELF_PERCEPTION_UPDATE,
    )
    try:
        text = backend.complete(req).text
    except BackendError:
        return SelfPerceptionOutcome(changed=False, old=old, new=old, failed=True)
    changed = _apply_self_perception(state, text)
    return SelfPerceptionOutcome(changed=changed, old=old, new=state.self_perception)


def _apply_self_perception(state: AgentState, text: str) -> bool:
    cleaned = text.strip()
    if not cleaned or cleaned.lower().rstrip(".") == "no change":
        return False
    state.self_perception = cleaned
    return True


_AFFINITY_RE = re.compile(r"Affinity:\s*(-?\d+(?:\.\d+)?)", re.IGNORECASE)
_IMPRESSION_RE = re.compile(r"Impression:\s*([^\n]+)", re.IGNORECASE)


def parse_impression(text: str) -> tuple[str, float] | None:
    affinity_match = _AFFINITY_RE.search(text)
    if not affinity_match:
        return None
    affinity = max(-1.0, min(1.0, float(affinity_match.group(1))))
    impression_match = _IMPRESSION_RE.search(text)
    summary = impression_match.group(1).strip() if impression_match else text.strip()
    return summary, affinity


@dataclass
class ImpressionOutcome:
    text: str
    affinity: float
    kept_previous: bool


def update_impression(
    state: AgentState, other_id: str, conversation_summary: str, backend: Backend
) -> ImpressionOutcome:
    """Refresh the impression of a conversation partner.

    An unparsable reply (after one format reminder) keeps the previous
    impression rather than erasing it.
    """
    if other_id == state.agent_id:
        raise ValueError("an agent does not form an impression of itself")
    prior = state.impressions.get(other_id)
    base_messages = [
        Message("system", state.system_prompt()),
        Message(
            "user",
            f"You just talked with {other_id}:\n{conversation_summary}\n"
            + (f"Your previous impression: {prior.text}\n" if prior else "")
            + "Describe your impression of them in one line starting with "
            "'Impression:', then on the next line 'Affinity: X' where X is a "
            "number between -1 and 1.",
        ),
    ]
    req = ChatRequest(messages=base_messages, tag=RequestTag.IMPRESSION_UPDATE)
    try:
        parsed = parse_impression(backend.complete(req).text)
        if parsed is None:
            reminder = Message(
                "user",
                "Format reminder: reply with exactly two lines, "
                "'Impression: <one line>' then 'Affinity: <number in [-1, 1]>'.",
            )
            retry = ChatRequest(
                messages=base_messages + [reminder], tag=RequestTag.IMPRESSION_UPDATE
            )
            parsed = parse_impression(backend.complete(retry).text)
        if parsed is None:
            raise ParseFailedTwiceError(f"impression of {other_id} unparsable twice")
    except (ParseFailedTwiceError, BackendError):
        if prior is not None:
            return ImpressionOutcome(prior.text, prior.affinity, kept_previous=True)
        return ImpressionOutcome("", 0.0, kept_previous=True)
    text, affinity = parsed
    state.impressions[other_id] = Impression(text=text, affinity=affinity)
    return ImpressionOutcome(text, affinity, kept_previous=False)
