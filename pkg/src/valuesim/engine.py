"""The staged protocol.

Stage 1 runs a fixed number of rounds, each with four phases:

* invite   — every idle agent either names a conversation partner or waits,
* resolve  — invitations become pairings (busy targets ignore invites; a
             target with several suitors picks one),
* converse — each pairing talks turn by turn, then both sides update memory,
             impressions, and self-perception,
* survey   — every ``survey_interval`` rounds, a pairwise value survey.

Stage 2 asks each agent for two governing rules and runs one comment pass
over sampled proposals. There is no voting.

Everything is event-sourced: each phase appends its events in an order
sorted by agent id (and conversation id), never by wall-clock completion,
so the same seed always yields the same stream. Conversations are executed
sequentially here; the log-order contract is what matters, and it leaves
room for a concurrent executor without changing any recorded artifact.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .agent import (
    AgentState,
    recall_context,
    remember,
    update_impression,
    update_self_perception,
)
from .backend import (
    Backend,
    ChatRequest,
    Message,
    RecordingBackend,
    RequestTag,
    RulePair,
    SchemaTag,
    complete_structured,
    make_backend,
)
from .config import RunConfig
from .errors import (
    BackendError,
    ParseFailedTwiceError,
    SurveyEmptyError,
)
from .persona import (
    PersonaProfile,
    build_population,
    dump_personas,
    load_dilemmas,
)
from .store import RunManifest, RunWriter
from .values import CYCLE, ValueType


class Phase(Enum):
    SETUP = "setup"
    INVITE = "invite"
    RESOLVE = "resolve"
    CONVERSE = "converse"
    SURVEY = "survey"
    PROPOSE = "propose"
    COMMENT = "comment"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RoundPhase:
    round_index: int  # 1-based
    phase: Phase


class ConversationStatus(Enum):
    ACTIVE = "Active"
    ENDED = "Ended"


@dataclass
class Conversation:
    id: str
    participants: tuple[str, str]
    turns: list[tuple[str, str]] = field(default_factory=list)
    round_started: int = 0
    status: ConversationStatus = ConversationStatus.ACTIVE


@dataclass
class SurveyResponse:
    agent_id: str
    round_index: int
    scores: dict[ValueType, float]
    raw_choices: list[dict]


@dataclass
class RuleProposalRecord:
    agent_id: str
    rule_index: int  # 1 or 2
    text: str
    rationale: str
    placeholder: bool = False


# Ten survey principles, one per value, in cycle order.
PRINCIPLES: dict[ValueType, str] = {
    ValueType.SELF_DIRECTION: (
        "Each member chooses their own path and thinks for themselves, even "
        "against the grain."
    ),
    ValueType.STIMULATION: (
        "A community should seek out new experiences and welcome bold change."
    ),
    ValueType.HEDONISM: (
        "Life here should be enjoyed; pleasure and celebration are not luxuries."
    ),
    ValueType.ACHIEVEMENT: (
        "Members should strive for excellence and be recognized for what they "
        "accomplish."
    ),
    ValueType.POWER: (
        "Clear authority and strong leadership keep a community effective."
    ),
    ValueType.SECURITY: (
        "Safety, stability, and predictable order come before everything else."
    ),
    ValueType.CONFORMITY: (
        "Members should follow shared norms and avoid upsetting others."
    ),
    ValueType.TRADITION: (
        "The customs handed down to us deserve respect and continuation."
    ),
    ValueType.BENEVOLENCE: (
        "Caring for the people close to you is the first duty of anyone."
    ),
    ValueType.UNIVERSALISM: (
        "Justice, tolerance, and protection for all people and nature guide "
        "every decision."
    ),
}


def survey_pairs() -> list[tuple[ValueType, ValueType]]:
    """The fixed pairing table: ten neighbour pairs plus five diametric ones.

    Every value appears exactly three times (twice among neighbours, once
    diametrically).
    """
    n = len(CYCLE)
    pairs = [(CYCLE[i], CYCLE[(i + 1) % n]) for i in range(n)]
    pairs += [(CYCLE[i], CYCLE[i + 5]) for i in range(5)]
    return pairs


_CLOSING_RE = re.compile(r"\b(goodbye|farewell)\b", re.IGNORECASE)


def is_closing_line(text: str) -> bool:
    return _CLOSING_RE.search(text) is not None


# --------------------------------------------------------------------------


class SimulationEngine:
    """Owns the whole run: population, state, event log, and both stages."""

    def __init__(self, config: RunConfig, writer: RunWriter, backend: Backend):
        self.config = config
        self.writer = writer
        self._round = 0
        self._phase = Phase.SETUP
        # Every completion is recorded into the event stream as it happens.
        self.backend = RecordingBackend(backend, self._record_backend_call)
        self.states: dict[str, AgentState] = {}
        self.conversation_count = 0
        self.proposals: list[RuleProposalRecord] = []
        self.comment_count = 0

    # -- event plumbing ----------------------------------------------------

    def _record_backend_call(self, tag: str, req_hash: str, response_text: str) -> None:
        self.writer.events.append(
            "BackendCall",
            {"request_tag": tag, "request_hash": req_hash, "response_text": response_text},
            self._round,
            self._phase.value,
        )

    def _emit(self, kind: str, payload: dict) -> int:
        event = self.writer.events.append(kind, payload, self._round, self._phase.value)
        return event.seq

    def _warn(self, message: str, **context) -> None:
        payload = {"message": message}
        payload.update(context)
        self._emit("Warning", payload)

    def _enter(self, round_index: int, phase: Phase) -> None:
        self.writer.events.barrier()
        self._round = round_index
        self._phase = phase

    # -- setup ---------------------------------------------------------------

    def build_population(self) -> None:
        corpus = load_dilemmas()
        profiles = build_population(
            self.config.population,
            corpus,
            self.backend,
            self.config.seed,
            warn=lambda msg: self._warn(msg),
        )
        for profile in profiles:
            self._emit("PersonaBuilt", {"agent_id": profile.agent_id, "profile": profile.to_dict()})
            self.states[profile.agent_id] = AgentState(profile=profile)
        self.writer.write_personas(dump_personas(profiles))
        self.writer.events.barrier()

    def adopt_population(self, profiles: list[PersonaProfile]) -> None:
        """Take pre-built profiles (personas command output) instead of eliciting."""
        for profile in profiles:
            self._emit("PersonaBuilt", {"agent_id": profile.agent_id, "profile": profile.to_dict()})
            self.states[profile.agent_id] = AgentState(profile=profile)
        self.writer.write_personas(dump_personas(profiles))
        self.writer.events.barrier()

    def _ids(self) -> list[str]:
        return sorted(self.states)

    # -- stage 1 -------------------------------------------------------------

    def run_stage1(self) -> None:
        for round_index in range(1, self.config.stage1.rounds + 1):
            self._enter(round_index, Phase.INVITE)
            invites = self._invite_phase(round_index)
            self._enter(round_index, Phase.RESOLVE)
            pairings = self._resolve_phase(round_index, invites)
            self._enter(round_index, Phase.CONVERSE)
            self._converse_phase(round_index, pairings)
            if round_index % self.config.stage1.survey_interval == 0:
                self._enter(round_index, Phase.SURVEY)
                for agent_id in self._ids():
                    response = self.administer_survey(self.states[agent_id], round_index)
                    self._emit(
                        "Survey",
                        {
                            "agent_id": agent_id,
                            "scores": {str(v): response.scores[v] for v in CYCLE},
                            "raw_choices": response.raw_choices,
                        },
                    )
        self.writer.events.barrier()

    def _invite_phase(self, round_index: int) -> dict[str, str | None]:
        budget = self.config.stage1.context_budget_tokens
        invites: dict[str, str | None] = {}
        for agent_id in self._ids():
            state = self.states[agent_id]
            others = [i for i in self._ids() if i != agent_id]
            others.sort(key=lambda i: (-state.affinity_for(i), i))
            options = others + ["wait"]
            context = recall_context(state, round_index, budget)
            req = ChatRequest(
                messages=[
                    Message("system", state.system_prompt()),
                    Message(
                        "user",
                        f"Round {round_index}. {context}\n"
                        "You may invite one other community member to a private "
                        "conversation this round, or wait.\n"
                        f"Options: [{', '.join(options)}]",
                    ),
                ],
                tag=RequestTag.INVITE_DECISION,
            )
            target: str | None
            try:
                choice = complete_structured(self.backend, req, SchemaTag.AGENT_CHOICE, options)
                target = None if choice == "wait" else choice
            except (ParseFailedTwiceError, BackendError) as exc:
                self._warn(f"invite decision failed for {agent_id}: {exc}", agent_id=agent_id)
                target = None
            invites[agent_id] = target
            seq = self._emit("Invite", {"agent_id": agent_id, "target": target})
            state.action_history.append(seq)
        return invites

    def _resolve_phase(
        self, round_index: int, invites: dict[str, str | None]
    ) -> list[tuple[str, str]]:
        """Turn invitations into pairings.

        Mutual invitations pair immediately. Remaining idle invitees accept
        exactly one suitor (a single suitor is accepted outright; several
        trigger a choice completion over suitors listed best-affinity
        first). Invitations to already-paired agents are ignored.
        Returns (first_speaker, partner) pairs.
        """
        pending = {a: t for a, t in invites.items() if t is not None and t in self.states}
        paired: set[str] = set()
        pairings: list[tuple[str, str]] = []  # (first_speaker, partner)
        accepted_invites: set[str] = set()  # inviter ids whose invite became a conversation

        for a in sorted(pending):
            t = pending[a]
            if a in paired or t in paired:
                continue
            if pending.get(t) == a and a < t:
                pairings.append((a, t))
                paired.update((a, t))
                accepted_invites.update((a, t))

        for target in self._ids():
            if target in paired:
                continue
            suitors = [a for a in sorted(pending) if pending[a] == target and a not in paired]
            if not suitors:
                continue
            if len(suitors) == 1:
                chosen = suitors[0]
            else:
                state = self.states[target]
                suitors.sort(key=lambda i: (-state.affinity_for(i), i))
                req = ChatRequest(
                    messages=[
                        Message("system", state.system_prompt()),
                        Message(
                            "user",
                            f"Round {round_index}. Several members invited you to talk: "
                            f"{', '.join(suitors)}. Accept exactly one invitation.\n"
                            f"Options: [{', '.join(suitors)}]",
                        ),
                    ],
                    tag=RequestTag.INVITE_DECISION,
                )
                try:
                    chosen = complete_structured(self.backend, req, SchemaTag.AGENT_CHOICE, suitors)
                except (ParseFailedTwiceError, BackendError) as exc:
                    self._warn(
                        f"invitation pick failed for {target}: {exc}", agent_id=target
                    )
                    chosen = suitors[0]
            pairings.append((chosen, target))
            paired.update((chosen, target))
            accepted_invites.add(chosen)

        for inviter in sorted(pending):
            outcome = "Accepted" if inviter in accepted_invites else "Ignored"
            self._emit(
                "InviteOutcome",
                {"inviter": inviter, "target": pending[inviter], "outcome": outcome},
            )
        return sorted(pairings, key=lambda p: tuple(sorted(p)))

    def _converse_phase(self, round_index: int, pairings: list[tuple[str, str]]) -> None:
        budget = self.config.stage1.context_budget_tokens
        conversations: list[Conversation] = []
        for k, (first, second) in enumerate(pairings):
            conv = Conversation(
                id=f"r{round_index:03d}c{k:02d}",
                participants=(first, second),
                round_started=round_index,
            )
            conversations.append(conv)
            for pid in conv.participants:
                self.states[pid].busy = True
            self._emit(
                "ConversationStart",
                {"conversation_id": conv.id, "participants": sorted(conv.participants)},
            )

        for conv in conversations:
            self._run_conversation(round_index, conv, budget)
            for pid in conv.participants:
                self.states[pid].busy = False
        self.conversation_count += len(conversations)

    def _run_conversation(self, round_index: int, conv: Conversation, budget: int) -> None:
        speaker, listener = conv.participants
        reason = "max_turns"
        for turn_index in range(self.config.stage1.max_turns):
            state = self.states[speaker]
            partner = self.states[listener]
            transcript = "\n".join(f"{s}: {t}" for s, t in conv.turns) or "(no turns yet)"
            context = recall_context(state, round_index, budget)
            req = ChatRequest(
                messages=[
                    Message("system", state.system_prompt()),
                    Message(
                        "user",
                        f"{context}\n"
                        f"You are in a one-on-one conversation with "
                        f"{partner.profile.display_name} ({listener}).\n"
                        f"Conversation so far:\n{transcript}\n"
                        "Say your next line.",
                    ),
                ],
                tag=RequestTag.CONVERSATION_TURN,
            )
            try:
                text = self.backend.complete(req).text
            except BackendError as exc:
                self._warn(
                    f"turn failed in {conv.id}; ending conversation: {exc}",
                    conversation_id=conv.id,
                    speaker=speaker,
                )
                reason = "backend_error"
                break
            conv.turns.append((speaker, text))
            seq = self._emit(
                "Turn",
                {
                    "conversation_id": conv.id,
                    "speaker": speaker,
                    "turn_index": turn_index,
                    "text": text,
                },
            )
            self.states[speaker].action_history.append(seq)
            if is_closing_line(text):
                reason = "closing"
                break
            speaker, listener = listener, speaker
        conv.status = ConversationStatus.ENDED
        self._emit(
            "ConversationEnd",
            {"conversation_id": conv.id, "reason": reason, "num_turns": len(conv.turns)},
        )
        if not conv.turns:
            return
        summary = self._summarize_conversation(conv)
        for pid in sorted(conv.participants):
            other = conv.participants[0] if conv.participants[1] == pid else conv.participants[1]
            state = self.states[pid]
            merge = remember(state, summary, round_index, self.backend, [conv.id])
            if merge is not None:
                self._emit(
                    "MemoryMerge",
                    {
                        "agent_id": pid,
                        "parent_summaries": list(merge.parent_summaries),
                        "parent_merge_counts": list(merge.parent_merge_counts),
                        "merged_summary": merge.merged_summary,
                        "merged_merge_count": merge.merged_merge_count,
                        "source_conversation_ids": merge.source_conversation_ids,
                    },
                )
            imp = update_impression(state, other, summary, self.backend)
            if imp.kept_previous:
                self._warn(
                    f"impression of {other} by {pid} unparsable; keeping previous",
                    agent_id=pid,
                )
            self._emit(
                "ImpressionUpdate",
                {
                    "agent_id": pid,
                    "other_id": other,
                    "text": imp.text,
                    "affinity": imp.affinity,
                    "kept_previous": imp.kept_previous,
                },
            )
            sp = update_self_perception(state, summary, self.backend)
            if sp.failed:
                self._warn(f"self-perception update failed for {pid}", agent_id=pid)
            self._emit(
                "SelfPerceptionUpdate",
                {"agent_id": pid, "changed": sp.changed, "old": sp.old, "new": sp.new},
            )

    def _summarize_conversation(self, conv: Conversation) -> str:
        transcript = "\n".join(f"{s}: {t}" for s, t in conv.turns)
        req = ChatRequest(
            messages=[
                Message("system", "Summarize the conversation in one or two sentences."),
                Message("user", f"Conversation transcript:\n{transcript}"),
            ],
            tag=RequestTag.SUMMARIZE,
        )
        try:
            text = self.backend.complete(req).text
        except BackendError as exc:
            self._warn(f"summary failed for {conv.id}: {exc}", conversation_id=conv.id)
            lines = [t for _, t in conv.turns]
            text = " ".join(" ".join(lines).split()[:40])
        return text

    # -- surveys ---------------------------------------------------------------

    def administer_survey(self, state: AgentState, round_index: int) -> SurveyResponse:
        """Fifteen pairwise principle choices; score(v) = wins / appearances.

        Presentation order is seeded per (agent, round); the pairing table
        and within-pair positions are fixed. A pair whose reply cannot be
        parsed even after a reminder is skipped and its two appearances are
        not counted.
        """
        pairs = survey_pairs()
        order = list(range(len(pairs)))
        rng = random.Random(f"{self.config.seed}|survey|{round_index}|{state.agent_id}")
        rng.shuffle(order)
        context = recall_context(state, round_index, self.config.stage1.context_budget_tokens)
        wins = {v: 0 for v in CYCLE}
        appearances = {v: 0 for v in CYCLE}
        raw_choices: list[dict] = []
        answered = 0
        for pair_index in order:
            first, second = pairs[pair_index]
            req = ChatRequest(
                messages=[
                    Message("system", state.system_prompt()),
                    Message(
                        "user",
                        f"{context}\n"
                        "Which principle matters more to you right now?\n"
                        f"Principle 1: {PRINCIPLES[first]}\n"
                        f"Principle 2: {PRINCIPLES[second]}\n"
                        "Options: [1, 2]",
                    ),
                ],
                tag=RequestTag.SURVEY,
            )
            try:
                pick = complete_structured(
                    self.backend, req, SchemaTag.SURVEY_CHOICE, ["1", "2"]
                )
            except (ParseFailedTwiceError, BackendError) as exc:
                self._warn(
                    f"survey pair {pair_index} skipped for {state.agent_id}: {exc}",
                    agent_id=state.agent_id,
                )
                raw_choices.append({"pair_index": pair_index, "skipped": True})
                continue
            appearances[first] += 1
            appearances[second] += 1
            winner = first if pick == "1" else second
            wins[winner] += 1
            answered += 1
            raw_choices.append(
                {
                    "pair_index": pair_index,
                    "first": str(first),
                    "second": str(second),
                    "picked": str(winner),
                }
            )
        if answered == 0:
            raise SurveyEmptyError(
                f"every survey pair was skipped for {state.agent_id} in round {round_index}"
            )
        scores = {
            v: (wins[v] / appearances[v]) if appearances[v] else 0.0 for v in CYCLE
        }
        return SurveyResponse(
            agent_id=state.agent_id,
            round_index=round_index,
            scores=scores,
            raw_choices=raw_choices,
        )

    # -- stage 2 -----------------------------------------------------------------

    def run_stage2(self) -> None:
        stage2_round = self.config.stage1.rounds + 1
        self._enter(stage2_round, Phase.PROPOSE)
        budget = self.config.stage1.context_budget_tokens
        for agent_id in self._ids():
            state = self.states[agent_id]
            context = recall_context(state, stage2_round, budget)
            pair = self._propose_rules(state, context)
            if pair is None:
                self._warn(
                    f"rule proposal unparsable twice for {agent_id}; recording placeholder",
                    agent_id=agent_id,
                )
                records = [
                    RuleProposalRecord(agent_id, 1, "", "", placeholder=True),
                    RuleProposalRecord(agent_id, 2, "", "", placeholder=True),
                ]
            else:
                records = [
                    RuleProposalRecord(agent_id, 1, pair.rule_one, pair.rationale),
                    RuleProposalRecord(agent_id, 2, pair.rule_two, pair.rationale),
                ]
            for rec in records:
                self.proposals.append(rec)
                seq = self._emit(
                    "RuleProposed",
                    {
                        "agent_id": rec.agent_id,
                        "rule_index": rec.rule_index,
                        "text": rec.text,
                        "rationale": rec.rationale,
                        "placeholder": rec.placeholder,
                    },
                )
                state.action_history.append(seq)

        self._enter(stage2_round, Phase.COMMENT)
        candidates = [p for p in self.proposals if not p.placeholder]
        for agent_id in self._ids():
            state = self.states[agent_id]
            pool = sorted(
                ((p.agent_id, p.rule_index) for p in candidates if p.agent_id != agent_id)
            )
            k = min(self.config.stage2.comment_k, len(pool))
            if k == 0:
                continue
            rng = random.Random(f"{self.config.seed}|comments|{agent_id}")
            picked = rng.sample(pool, k)
            by_key = {(p.agent_id, p.rule_index): p for p in candidates}
            for author_id, rule_index in picked:
                proposal = by_key[(author_id, rule_index)]
                req = ChatRequest(
                    messages=[
                        Message("system", state.system_prompt()),
                        Message(
                            "user",
                            f"A fellow member proposed this community rule:\n"
                            f"{proposal.text}\n"
                            "Comment briefly on it: would you support it, and why?",
                        ),
                    ],
                    tag=RequestTag.RULE_COMMENT,
                )
                try:
                    text = self.backend.complete(req).text
                except BackendError as exc:
                    self._warn(
                        f"comment by {agent_id} on ({author_id}, {rule_index}) failed: {exc}",
                        agent_id=agent_id,
                    )
                    continue
                self.comment_count += 1
                self._emit(
                    "RuleComment",
                    {
                        "agent_id": agent_id,
                        "author_id": author_id,
                        "rule_index": rule_index,
                        "text": text,
                    },
                )
        self.writer.events.barrier()

    def _propose_rules(self, state: AgentState, context: str) -> RulePair | None:
        base = [
            Message("system", state.system_prompt()),
            Message(
                "user",
                f"{context}\n"
                "Based on your experience in this community, propose two rules "
                "it should live by. Use exactly this format:\n"
                "Rule 1: <first rule>\nRule 2: <second rule>\n"
                "Rationale: <one sentence>",
            ),
        ]
        for attempt in (1, 2):
            messages = list(base)
            if attempt == 2:
                messages.append(
                    Message("user", "Try once more, following the format exactly.")
                )
            req = ChatRequest(messages=messages, tag=RequestTag.RULE_PROPOSAL)
            try:
                return complete_structured(self.backend, req, SchemaTag.RULE_PAIR)
            except ParseFailedTwiceError:
                continue
            except BackendError:
                continue
        return None

    # -- snapshots -----------------------------------------------------------

    def write_snapshot(self, label: str) -> None:
        self.writer.write_snapshot(
            label,
            {
                "round": self._round,
                "agents": {aid: self.states[aid].to_snapshot() for aid in self._ids()},
            },
        )

    def summary(self) -> dict:
        return {
            "agents": len(self.states),
            "rounds": self.config.stage1.rounds,
            "conversations": self.conversation_count,
            "proposals": len(self.proposals),
            "comments": self.comment_count,
        }


# --------------------------------------------------------------------------
# Top-level drivers
# --------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(
    config: RunConfig,
    out_dir: str | Path,
    force: bool = False,
    backend_override: Backend | None = None,
    profiles: list[PersonaProfile] | None = None,
    run_analysis: bool = True,
) -> tuple[Path, dict]:
    """Build the population, run both stages, write all artifacts.

    On failure, whatever was already logged stays on disk. Returns the run
    directory and a printable summary.
    """
    from . import __version__
    from .analysis import write_all_metrics

    # An injected backend (replay, tests) needs no live credentials.
    config.validate(check_api_key=backend_override is None)
    manifest = RunManifest(
        run_id=config.effective_run_id(),
        seed=config.seed,
        config=config.to_dict(),
        code_version=__version__,
        started_at=_now(),
    )
    writer = RunWriter(out_dir, manifest, force=force)
    backend = backend_override if backend_override is not None else make_backend(config.backend)
    engine = SimulationEngine(config, writer, backend)
    outcomes: dict[str, str] = {}
    try:
        if profiles is None:
            engine.build_population()
        else:
            engine.adopt_population(profiles)
        outcomes["setup"] = "ok"
        engine.run_stage1()
        outcomes["stage1"] = "ok"
        engine.write_snapshot("stage1")
        engine.run_stage2()
        outcomes["stage2"] = "ok"
        engine.write_snapshot("stage2_final")
    except BaseException:
        outcomes.setdefault("aborted", "partial artifacts preserved")
        writer.finalize(stage_outcomes=outcomes, finished_at=_now())
        raise
    writer.finalize(stage_outcomes=outcomes, finished_at=_now())
    if run_analysis:
        write_all_metrics(writer.run_dir)
    return writer.run_dir, engine.summary()


def replay_run(run_dir: str | Path, out_dir: str | Path, force: bool = False) -> Path:
    """Re-execute a recorded run, substituting logged backend responses.

    Any mismatch between the recorded and replayed event streams (or the
    final snapshots) raises DivergenceError at the first differing seq.
    """
    from .backend import ReplayBackend
    from .errors import DivergenceError
    from .store import extract_backend_calls, first_divergence, load_run, read_events

    loaded = load_run(run_dir)
    config = RunConfig.from_dict(loaded.manifest.config, check_api_key=False)
    config.run_id = loaded.manifest.run_id
    replay_backend = ReplayBackend(extract_backend_calls(loaded.events))

    in_flight: DivergenceError | None = None
    out_dir = Path(out_dir)
    try:
        run_experiment(
            config,
            out_dir,
            force=force,
            backend_override=replay_backend,
            run_analysis=False,
        )
    except DivergenceError as exc:
        in_flight = exc

    replayed_events = read_events(out_dir / "events.jsonl")
    mismatch = first_divergence(loaded.events, replayed_events)
    if mismatch is not None:
        seq, detail = mismatch
        if in_flight is not None and in_flight.seq >= 0:
            seq = min(seq, in_flight.seq)
        raise DivergenceError(seq, detail)
    if in_flight is not None:
        raise in_flight

    for name in ("stage1", "stage2_final"):
        original = Path(run_dir) / "snapshots" / f"{name}.json"
        replayed = out_dir / "snapshots" / f"{name}.json"
        if original.exists() != replayed.exists():
            raise DivergenceError(-1, f"snapshot {name} missing on one side")
        if original.exists() and original.read_bytes() != replayed.read_bytes():
            raise DivergenceError(-1, f"snapshot {name} differs from the recorded run")
    return out_dir
