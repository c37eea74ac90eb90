from __future__ import annotations

import json
import re
from collections import Counter, defaultdict

import pytest
from conftest import make_config

from valuesim.backend import Backend, ChatRequest, ChatResponse, RequestTag
from valuesim.engine import (
    PRINCIPLES,
    SimulationEngine,
    is_closing_line,
    replay_run,
    run_experiment,
    survey_pairs,
)
from valuesim.errors import DivergenceError, SurveyEmptyError
from valuesim.persona import Complexity, PersonaProfile, PopulationCondition
from valuesim.store import RunManifest, RunWriter, load_run, read_events
from valuesim.values import CYCLE, circular_distance


class TestSurveyPairs:
    def test_fifteen_pairs_ten_neighbours_five_diametric(self):
        pairs = survey_pairs()
        assert len(pairs) == 15
        assert all(circular_distance(a, b) == 1 for a, b in pairs[:10])
        assert all(circular_distance(a, b) == 5 for a, b in pairs[10:])

    def test_every_value_appears_three_times(self):
        counts = Counter(v for pair in survey_pairs() for v in pair)
        assert all(counts[v] == 3 for v in CYCLE)

    def test_every_value_has_a_principle(self):
        assert set(PRINCIPLES) == set(CYCLE)
        assert all(PRINCIPLES[v] for v in CYCLE)


class TestClosingLine:
    def test_detects_farewells(self):
        assert is_closing_line("Goodbye, and thanks for the chat.")
        assert is_closing_line("I wish you well. FAREWELL.")
        assert not is_closing_line("The goodbyes can wait.")
        assert not is_closing_line("See you at the well tomorrow.")


# --------------------------------------------------------------------------
# Protocol invariants over a full mock run
# --------------------------------------------------------------------------


CONV_ID_RE = re.compile(r"^r\d{3}c\d{2}$")


class TestProtocol:
    def test_no_agent_is_in_two_active_conversations(self, smoke_run):
        events = read_events(smoke_run / "events.jsonl")
        active: dict[str, set[str]] = {}
        busy: set[str] = set()
        for e in events:
            if e.kind == "ConversationStart":
                participants = set(e.payload["participants"])
                assert not (participants & busy), (
                    f"agents {participants & busy} already mid-conversation at seq {e.seq}"
                )
                active[e.payload["conversation_id"]] = participants
                busy |= participants
            elif e.kind == "ConversationEnd":
                busy -= active.pop(e.payload["conversation_id"])
        assert not active, "every conversation must be closed"

    def test_exactly_25_rounds_and_surveys_every_5(self, smoke_run):
        events = read_events(smoke_run / "events.jsonl")
        stage1_rounds = {
            e.round for e in events if e.phase in ("invite", "resolve", "converse")
        }
        assert stage1_rounds == set(range(1, 26))
        survey_rounds = sorted({e.round for e in events if e.kind == "Survey"})
        assert survey_rounds == [5, 10, 15, 20, 25]
        per_agent = Counter(e.payload["agent_id"] for e in events if e.kind == "Survey")
        assert set(per_agent.values()) == {5}

    def test_exactly_two_proposals_per_agent(self, smoke_run):
        events = read_events(smoke_run / "events.jsonl")
        proposals = [e for e in events if e.kind == "RuleProposed"]
        per_agent = Counter(e.payload["agent_id"] for e in proposals)
        assert set(per_agent.values()) == {2}
        indices = defaultdict(list)
        for e in proposals:
            indices[e.payload["agent_id"]].append(e.payload["rule_index"])
        assert all(sorted(ix) == [1, 2] for ix in indices.values())

    def test_conversation_ids_and_turn_counts_line_up(self, smoke_run):
        events = read_events(smoke_run / "events.jsonl")
        turns = Counter(
            e.payload["conversation_id"] for e in events if e.kind == "Turn"
        )
        ends = {
            e.payload["conversation_id"]: e.payload["num_turns"]
            for e in events
            if e.kind == "ConversationEnd"
        }
        for conv_id, num_turns in ends.items():
            assert CONV_ID_RE.match(conv_id)
            assert turns[conv_id] == num_turns

    def test_turn_indices_are_sequential_per_conversation(self, smoke_run):
        events = read_events(smoke_run / "events.jsonl")
        seen: dict[str, int] = defaultdict(int)
        for e in events:
            if e.kind != "Turn":
                continue
            conv = e.payload["conversation_id"]
            assert e.payload["turn_index"] == seen[conv]
            seen[conv] += 1

    def test_summary_matches_the_event_stream(self, tmp_path):
        run_dir, summary = run_experiment(make_config(seed=19), tmp_path / "run")
        events = read_events(run_dir / "events.jsonl")
        kinds = Counter(e.kind for e in events)
        assert summary["agents"] == 4
        assert summary["rounds"] == 25
        assert summary["conversations"] == kinds["ConversationStart"]
        assert summary["proposals"] == kinds["RuleProposed"]
        assert summary["comments"] == kinds["RuleComment"]
        manifest = load_run(run_dir).manifest
        assert manifest.stage_outcomes == {"setup": "ok", "stage1": "ok", "stage2": "ok"}
        assert (run_dir / "snapshots" / "stage1.json").exists()
        assert (run_dir / "snapshots" / "stage2_final.json").exists()

    def test_novalue_agents_carry_no_values(self, novalue_run):
        loaded = load_run(novalue_run)
        personas = json.loads(loaded.personas_json)["personas"]
        assert len(personas) == 4
        assert all(p["values"] == [] for p in personas)


# --------------------------------------------------------------------------
# Survey scoring oracle
# --------------------------------------------------------------------------


class _AlwaysFirstBackend(Backend):
    """Answers every survey pair with principle 1."""

    def complete(self, req: ChatRequest) -> ChatResponse:
        assert req.tag is RequestTag.SURVEY
        return ChatResponse(text="1")


class _MuteBackend(Backend):
    def complete(self, req: ChatRequest) -> ChatResponse:
        return ChatResponse(text="neither speaks to me")


def survey_engine(tmp_path, backend: Backend) -> tuple[SimulationEngine, object]:
    config = make_config()
    writer = RunWriter(
        tmp_path / "survey_run",
        RunManifest(run_id="x", seed=config.seed, config=config.to_dict()),
    )
    engine = SimulationEngine(config, writer, backend)
    profile = PersonaProfile(
        agent_id="agent_00",
        display_name="Ada",
        values=(),
        complexity=Complexity.NONE,
        narrative="Ada.",
        elicitation_trace=[],
    )
    engine.adopt_population([profile])
    return engine, engine.states["agent_00"]


class TestSurveyScoring:
    def test_always_first_splits_the_cycle(self, tmp_path):
        # Picking principle 1 every time wins each neighbour pair's left
        # member once; the five diametric pairs favor the first half of the
        # cycle, so those score 2/3 and the back half 1/3.
        engine, state = survey_engine(tmp_path, _AlwaysFirstBackend())
        response = engine.administer_survey(state, round_index=5)
        for v in CYCLE[:5]:
            assert response.scores[v] == pytest.approx(2 / 3)
        for v in CYCLE[5:]:
            assert response.scores[v] == pytest.approx(1 / 3)
        assert len(response.raw_choices) == 15

    def test_scores_are_win_rates_out_of_three(self, smoke_run):
        events = read_events(smoke_run / "events.jsonl")
        surveys = [e for e in events if e.kind == "Survey"]
        assert surveys
        for e in surveys:
            scores = e.payload["scores"].values()
            assert all(0.0 <= s <= 1.0 for s in scores)
            # 15 answered pairs produce 15 wins spread over 30 appearances.
            assert sum(scores) == pytest.approx(5.0)

    def test_presentation_order_varies_by_round(self, tmp_path):
        engine, state = survey_engine(tmp_path, _AlwaysFirstBackend())
        first = [c["pair_index"] for c in engine.administer_survey(state, 5).raw_choices]
        second = [c["pair_index"] for c in engine.administer_survey(state, 10).raw_choices]
        assert sorted(first) == sorted(second) == list(range(15))
        assert first != second

    def test_all_pairs_skipped_raises(self, tmp_path):
        engine, state = survey_engine(tmp_path, _MuteBackend())
        with pytest.raises(SurveyEmptyError):
            engine.administer_survey(state, round_index=5)


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------


class TestReplay:
    def test_replay_reproduces_the_event_stream(self, smoke_run, tmp_path):
        out = replay_run(smoke_run, tmp_path / "replayed")
        original = (smoke_run / "events.jsonl").read_bytes()
        assert (out / "events.jsonl").read_bytes() == original

    def test_tampered_turn_text_diverges_at_its_seq(self, smoke_run, tmp_path):
        source = (smoke_run / "events.jsonl").read_text(encoding="utf-8")
        lines = source.splitlines()
        target_seq = None
        for i, line in enumerate(lines):
            raw = json.loads(line)
            if raw["kind"] == "Turn":
                raw["payload"]["text"] = "tampered words that were never said"
                lines[i] = json.dumps(raw, sort_keys=True, separators=(",", ":"))
                target_seq = raw["seq"]
                break
        assert target_seq is not None

        doctored = tmp_path / "doctored"
        doctored.mkdir()
        for name in ("manifest.json", "personas.json"):
            (doctored / name).write_bytes((smoke_run / name).read_bytes())
        (doctored / "snapshots").mkdir()
        for snap in (smoke_run / "snapshots").iterdir():
            (doctored / "snapshots" / snap.name).write_bytes(snap.read_bytes())
        (doctored / "events.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")

        with pytest.raises(DivergenceError) as err:
            replay_run(doctored, tmp_path / "replayed")
        assert err.value.seq == target_seq

    def test_replay_needs_no_api_key(self, tmp_path, monkeypatch):
        run_dir, _ = run_experiment(make_config(seed=23), tmp_path / "orig")
        monkeypatch.delenv("VALUESIM_API_KEY", raising=False)
        replay_run(run_dir, tmp_path / "replayed")
