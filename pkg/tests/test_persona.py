from __future__ import annotations

import json
from collections import Counter

import pytest

from valuesim.backend import Backend, ChatRequest, ChatResponse, MockBackend, RequestTag
from valuesim.errors import (
    DuplicateIdError,
    InfeasibleSpecError,
    UncoveredValueError,
    UnknownValueNameError,
    UnparsableScoreError,
)
from valuesim.persona import (
    DILEMMAS_PER_AGENT,
    KEEP_THRESHOLD,
    Complexity,
    Dilemma,
    PersonaSpec,
    PopulationCondition,
    PopulationSpec,
    build_persona,
    build_population,
    build_population_specs,
    dump_personas,
    load_dilemmas,
    load_personas,
    validate_corpus,
)
from valuesim.values import (
    CYCLE,
    HigherOrderCategory,
    ValueType,
    category,
    circular_distance,
)

OTC = HigherOrderCategory.OPENNESS_TO_CHANGE
SE = HigherOrderCategory.SELF_ENHANCEMENT
CONS = HigherOrderCategory.CONSERVATION
ST = HigherOrderCategory.SELF_TRANSCENDENCE


# --------------------------------------------------------------------------
# Corpus
# --------------------------------------------------------------------------


class TestCorpus:
    def test_bundled_corpus_shape(self):
        corpus = load_dilemmas()
        assert len(corpus) == 84
        assert len({d.id for d in corpus}) == 84
        validate_corpus(corpus)
        coverage = Counter(v for d in corpus for v in d.tags)
        for v in CYCLE:
            assert coverage[v] >= 10, f"{v} has only {coverage[v]} dilemmas"
        for d in corpus:
            assert d.title and d.text
            assert 1 <= len(d.tags) <= 2

    def test_duplicate_ids_rejected(self):
        d = load_dilemmas()[0]
        with pytest.raises(DuplicateIdError) as err:
            validate_corpus([d, d])
        assert err.value.dilemma_id == d.id

    def test_missing_coverage_rejected(self):
        corpus = [d for d in load_dilemmas() if ValueType.HEDONISM not in d.tags]
        with pytest.raises(UncoveredValueError) as err:
            validate_corpus(corpus)
        assert "Hedonism" in err.value.missing

    def test_unknown_value_name_rejected(self, tmp_path):
        bad = tmp_path / "corpus.json"
        bad.write_text(
            json.dumps(
                {"dilemmas": [{"id": "x1", "title": "t", "text": "body", "tags": ["Bravery"]}]}
            ),
            encoding="utf-8",
        )
        with pytest.raises(UnknownValueNameError):
            load_dilemmas(str(bad))


# --------------------------------------------------------------------------
# Population specs
# --------------------------------------------------------------------------


class TestPopulationSpecs:
    def test_balanced_single_covers_quadrants_at_4(self):
        specs = build_population_specs(
            PopulationSpec(4, PopulationCondition.DIVERSE_BALANCED, Complexity.SINGLE)
        )
        cats = {category(s.values[0]) for s in specs}
        assert cats == set(HigherOrderCategory)

    def test_balanced_single_covers_all_values_at_10(self):
        specs = build_population_specs(
            PopulationSpec(10, PopulationCondition.DIVERSE_BALANCED, Complexity.SINGLE)
        )
        assert {s.values[0] for s in specs} == set(CYCLE)

    def test_balanced_single_is_near_even_at_30(self):
        specs = build_population_specs(
            PopulationSpec(30, PopulationCondition.DIVERSE_BALANCED, Complexity.SINGLE)
        )
        # Quadrant balance is the hard constraint; value counts are as even
        # as that allows (quadrants hold 2 or 3 values each).
        quadrant_counts = Counter(category(s.values[0]) for s in specs)
        assert max(quadrant_counts.values()) - min(quadrant_counts.values()) <= 1
        value_counts = Counter(s.values[0] for s in specs)
        assert set(value_counts) == set(CYCLE)
        assert max(value_counts.values()) - min(value_counts.values()) <= 2

    def test_balanced_multi_pairs_are_adjacent_and_even(self):
        specs = build_population_specs(
            PopulationSpec(10, PopulationCondition.DIVERSE_BALANCED, Complexity.MULTI)
        )
        coverage = Counter(v for s in specs for v in s.values)
        for s in specs:
            assert len(s.values) == 2
            assert circular_distance(*s.values) == 1
        assert all(coverage[v] == 2 for v in CYCLE)

    def test_homogeneous_single_stays_in_category(self):
        specs = build_population_specs(
            PopulationSpec(
                6, PopulationCondition.HOMOGENEOUS, Complexity.SINGLE,
                homogeneous_category=SE,
            )
        )
        assert all(category(s.values[0]) is SE for s in specs)

    def test_homogeneous_multi_uses_within_category_adjacent_pairs(self):
        for cat in HigherOrderCategory:
            specs = build_population_specs(
                PopulationSpec(
                    5, PopulationCondition.HOMOGENEOUS, Complexity.MULTI,
                    homogeneous_category=cat,
                )
            )
            for s in specs:
                assert len(s.values) == 2
                assert circular_distance(*s.values) == 1
                assert {category(v) for v in s.values} == {cat}

    def test_novalue_specs_carry_nothing(self):
        specs = build_population_specs(
            PopulationSpec(4, PopulationCondition.NO_VALUE, Complexity.NONE)
        )
        assert all(s.values == () for s in specs)
        assert all(s.complexity is Complexity.NONE for s in specs)

    def test_display_names_unique_and_ids_sequential(self):
        specs = build_population_specs(
            PopulationSpec(30, PopulationCondition.DIVERSE_BALANCED, Complexity.SINGLE)
        )
        assert [s.agent_id for s in specs] == [f"agent_{i:02d}" for i in range(30)]
        assert len({s.display_name for s in specs}) == 30

    def test_infeasible_specs(self):
        with pytest.raises(InfeasibleSpecError):
            PopulationSpec(0, PopulationCondition.NO_VALUE, Complexity.NONE).validate()
        with pytest.raises(InfeasibleSpecError):
            PopulationSpec(4, PopulationCondition.NO_VALUE, Complexity.SINGLE).validate()
        with pytest.raises(InfeasibleSpecError):
            PopulationSpec(4, PopulationCondition.HOMOGENEOUS, Complexity.SINGLE).validate()
        with pytest.raises(InfeasibleSpecError):
            PopulationSpec(
                4, PopulationCondition.DIVERSE_BALANCED, Complexity.SINGLE,
                homogeneous_category=SE,
            ).validate()

    def test_non_adjacent_pair_rejected(self):
        spec = PersonaSpec(
            agent_id="a",
            display_name="A",
            values=(ValueType.SELF_DIRECTION, ValueType.SECURITY),
            complexity=Complexity.MULTI,
        )
        with pytest.raises(InfeasibleSpecError):
            spec.validate()

    def test_same_value_twice_rejected(self):
        spec = PersonaSpec(
            agent_id="a",
            display_name="A",
            values=(ValueType.POWER, ValueType.POWER),
            complexity=Complexity.MULTI,
        )
        with pytest.raises(InfeasibleSpecError):
            spec.validate()


# --------------------------------------------------------------------------
# Elicitation
# --------------------------------------------------------------------------


class _ScriptedJudgeBackend(Backend):
    """Narratives and reflections are canned; judge scores come from a script."""

    def __init__(self, judge_scores: list[int]):
        self.judge_scores = list(judge_scores)
        self.tags: list[RequestTag] = []

    def complete(self, r: ChatRequest) -> ChatResponse:
        self.tags.append(r.tag)
        if r.tag is RequestTag.NARRATIVE_GEN:
            return ChatResponse(text=f"draft number {len(self.tags)}")
        if r.tag is RequestTag.JUDGE:
            return ChatResponse(text=f"Score: {self.judge_scores.pop(0)}. Noted.")
        if r.tag is RequestTag.REFLECTION:
            return ChatResponse(text="I know where I stand.")
        raise AssertionError(f"unexpected tag during elicitation: {r.tag}")


def single_spec(value: ValueType = ValueType.HEDONISM) -> PersonaSpec:
    return PersonaSpec(
        agent_id="agent_00", display_name="Ada", values=(value,),
        complexity=Complexity.SINGLE,
    )


def mini_corpus(n: int = 3, value: ValueType = ValueType.HEDONISM) -> list[Dilemma]:
    return [
        Dilemma(id=f"m{i:02d}", title=f"case {i}", text="a hard call", tags=(value,))
        for i in range(n)
    ]


class _ExplodingBackend(Backend):
    def complete(self, r: ChatRequest) -> ChatResponse:
        raise AssertionError("value-neutral personas must not call the backend")


class TestElicitation:
    def test_novalue_profile_never_touches_the_backend(self):
        spec = PersonaSpec(
            agent_id="agent_00", display_name="Ada", values=(), complexity=Complexity.NONE
        )
        profile = build_persona(spec, load_dilemmas(), _ExplodingBackend(), seed=0)
        assert profile.values == ()
        assert "Ada" in profile.narrative
        assert profile.elicitation_trace == []

    def test_accepts_on_first_good_score(self):
        backend = _ScriptedJudgeBackend([9, 8, 7])
        profile = build_persona(single_spec(), mini_corpus(), backend, seed=1)
        assert [r.accepted for r in profile.elicitation_trace] == [True, True, True]
        assert [r.attempts for r in profile.elicitation_trace] == [1, 1, 1]
        assert all(r.judge_score >= KEEP_THRESHOLD for r in profile.elicitation_trace)
        assert profile.narrative == "I know where I stand."

    def test_regenerates_until_kept(self):
        backend = _ScriptedJudgeBackend([5, 6, 9, 8, 7])
        profile = build_persona(single_spec(), mini_corpus(), backend, seed=1)
        first = profile.elicitation_trace[0]
        assert first.attempts == 3 and first.accepted and first.judge_score == 9

    def test_substitution_after_exhausted_regenerations(self):
        # First sampled dilemma burns 4 attempts, the unused one is swapped in.
        backend = _ScriptedJudgeBackend([3, 4, 3, 5, 9, 8, 7])
        profile = build_persona(single_spec(), mini_corpus(4), backend, seed=1)
        sub = profile.elicitation_trace[0]
        assert sub.accepted and sub.judge_score == 9
        assert sub.substituted_for is not None
        assert sub.dilemma_id != sub.substituted_for

    def test_fallback_keeps_best_rejected_and_warns(self):
        scores = [3, 4, 5, 4] * 3  # every attempt for all three slots fails
        backend = _ScriptedJudgeBackend(scores)
        warnings: list[str] = []
        profile = build_persona(
            single_spec(), mini_corpus(3), backend, seed=1, warn=warnings.append
        )
        assert len(warnings) == 3
        for record in profile.elicitation_trace:
            assert not record.accepted
            assert record.judge_score == 5  # best of the rejected drafts
            assert record.attempts == 4

    def test_unparsable_judge_surfaces(self):
        class GarbageJudge(_ScriptedJudgeBackend):
            def complete(self, r: ChatRequest) -> ChatResponse:
                if r.tag is RequestTag.JUDGE:
                    return ChatResponse(text="no score here")
                return super().complete(r)

        with pytest.raises(UnparsableScoreError):
            build_persona(single_spec(), mini_corpus(), GarbageJudge([]), seed=1)

    def test_same_seed_reproduces_the_profile(self):
        corpus = load_dilemmas()
        a = build_persona(single_spec(), corpus, MockBackend(seed=3), seed=42)
        b = build_persona(single_spec(), corpus, MockBackend(seed=3), seed=42)
        assert a.to_dict() == b.to_dict()
        c = build_persona(single_spec(), corpus, MockBackend(seed=3), seed=43)
        assert [r.dilemma_id for r in c.elicitation_trace] != [
            r.dilemma_id for r in a.elicitation_trace
        ]

    def test_population_roundtrip(self):
        spec = PopulationSpec(4, PopulationCondition.DIVERSE_BALANCED, Complexity.MULTI)
        profiles = build_population(spec, load_dilemmas(), MockBackend(seed=5), seed=5)
        text = dump_personas(profiles)
        restored = load_personas(text)
        assert [p.to_dict() for p in restored] == [p.to_dict() for p in profiles]
