"""Persona construction.

A persona is elicited rather than pasted in: the agent resolves a handful of
moral dilemmas drawn from a pre-tagged corpus, each resolution is scored by a
judge call, kept or regenerated, and a closing reflection stitches the kept
narratives into a first-person backstory. The profile travels with its full
elicitation trace so any persona can be audited afterwards.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .backend import Backend, ChatRequest, Message, RequestTag, SchemaTag, complete_structured
from .errors import (
    DuplicateIdError,
    ElicitationError,
    InfeasibleSpecError,
    ParseFailedTwiceError,
    UncoveredValueError,
    UnknownValueNameError,
    UnparsableScoreError,
)
from .values import (
    CYCLE,
    HigherOrderCategory,
    MEMBERS_OF,
    ValueType,
    cycle_index,
    is_compatible_pair,
    value_from_name,
)

KEEP_THRESHOLD = 7
DILEMMAS_PER_AGENT = 3
MAX_REGENERATIONS = 3  # per dilemma, after the initial attempt


# --------------------------------------------------------------------------
# Dilemma corpus
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dilemma:
    id: str
    title: str
    text: str
    tags: tuple[ValueType, ...]


def load_dilemmas(path: str | None = None) -> list[Dilemma]:
    """Load and validate a dilemma corpus; defaults to the bundled one."""
    if path is None:
        raw = resources.files("valuesim.data").joinpath("dilemmas.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    payload = json.loads(raw)
    dilemmas: list[Dilemma] = []
    for entry in payload["dilemmas"]:
        tags = []
        for name in entry["tags"]:
            try:
                tags.append(value_from_name(name))
            except KeyError:
                raise UnknownValueNameError(name) from None
        dilemmas.append(
            Dilemma(id=entry["id"], title=entry["title"], text=entry["text"], tags=tuple(tags))
        )
    validate_corpus(dilemmas)
    return dilemmas


def validate_corpus(dilemmas: list[Dilemma]) -> None:
    seen: set[str] = set()
    for d in dilemmas:
        if d.id in seen:
            raise DuplicateIdError(d.id)
        seen.add(d.id)
    covered = {tag for d in dilemmas for tag in d.tags}
    missing = [str(v) for v in CYCLE if v not in covered]
    if missing:
        raise UncoveredValueError(missing)


# --------------------------------------------------------------------------
# Population specification
# --------------------------------------------------------------------------


class Complexity(Enum):
    SINGLE = "Single"
    MULTI = "Multi"
    NONE = "None"

    def __str__(self) -> str:
        return self.value


class PopulationCondition(Enum):
    NO_VALUE = "NoValue"
    HOMOGENEOUS = "Homogeneous"
    DIVERSE_BALANCED = "DiverseBalanced"

    def __str__(self) -> str:
        return self.value


_NAME_POOL = (
    "Anselm", "Beatrix", "Caius", "Delia", "Edmund", "Freya", "Gideon", "Halima",
    "Ignat", "Jorunn", "Kiran", "Leonor", "Milos", "Nadia", "Osric", "Petra",
    "Quentin", "Rosalind", "Soren", "Thessaly", "Umberto", "Verena", "Wendell",
    "Ximena", "Yusuf", "Zelda", "Arvid", "Brunhild", "Casimir", "Dorothea",
    "Elias", "Fenella", "Godfrey", "Hypatia", "Isolde", "Jasper", "Katarin",
    "Lysander", "Maren", "Niklaus",
)

# Within-quadrant adjacent pairs, in cycle order of their first member.
_QUADRANT_PAIRS: dict[HigherOrderCategory, tuple[tuple[ValueType, ValueType], ...]] = {
    HigherOrderCategory.OPENNESS_TO_CHANGE: (
        (ValueType.SELF_DIRECTION, ValueType.STIMULATION),
    ),
    HigherOrderCategory.SELF_ENHANCEMENT: (
        (ValueType.HEDONISM, ValueType.ACHIEVEMENT),
        (ValueType.ACHIEVEMENT, ValueType.POWER),
    ),
    HigherOrderCategory.CONSERVATION: (
        (ValueType.SECURITY, ValueType.CONFORMITY),
        (ValueType.CONFORMITY, ValueType.TRADITION),
    ),
    HigherOrderCategory.SELF_TRANSCENDENCE: (
        (ValueType.BENEVOLENCE, ValueType.UNIVERSALISM),
    ),
}

# Fixed assignment order for balanced multi-value populations: four entries
# cover all four quadrants, ten cover all ten values.
_BALANCED_MULTI_PAIRS: tuple[tuple[ValueType, ValueType], ...] = (
    (ValueType.SELF_DIRECTION, ValueType.STIMULATION),
    (ValueType.ACHIEVEMENT, ValueType.POWER),
    (ValueType.SECURITY, ValueType.CONFORMITY),
    (ValueType.BENEVOLENCE, ValueType.UNIVERSALISM),
    (ValueType.HEDONISM, ValueType.ACHIEVEMENT),
    (ValueType.TRADITION, ValueType.BENEVOLENCE),
    (ValueType.POWER, ValueType.SECURITY),
    (ValueType.UNIVERSALISM, ValueType.SELF_DIRECTION),
    (ValueType.STIMULATION, ValueType.HEDONISM),
    (ValueType.CONFORMITY, ValueType.TRADITION),
)

_QUADRANT_ORDER = (
    HigherOrderCategory.OPENNESS_TO_CHANGE,
    HigherOrderCategory.SELF_ENHANCEMENT,
    HigherOrderCategory.CONSERVATION,
    HigherOrderCategory.SELF_TRANSCENDENCE,
)

# Extra headcount goes to the three-member quadrants first so small
# populations reach full value coverage sooner.
_EXTRA_ORDER = (
    HigherOrderCategory.SELF_ENHANCEMENT,
    HigherOrderCategory.CONSERVATION,
    HigherOrderCategory.OPENNESS_TO_CHANGE,
    HigherOrderCategory.SELF_TRANSCENDENCE,
)


@dataclass(frozen=True)
class PersonaSpec:
    agent_id: str
    display_name: str
    values: tuple[ValueType, ...]
    complexity: Complexity

    def validate(self) -> None:
        if self.complexity is Complexity.NONE:
            if self.values:
                raise InfeasibleSpecError(
                    f"{self.agent_id}: value-neutral personas carry no values"
                )
            return
        if self.complexity is Complexity.SINGLE:
            if len(self.values) != 1:
                raise InfeasibleSpecError(
                    f"{self.agent_id}: single-value persona needs exactly one value"
                )
            return
        if len(self.values) != 2:
            raise InfeasibleSpecError(
                f"{self.agent_id}: multi-value persona needs exactly two values"
            )
        a, b = self.values
        if a is b or not is_compatible_pair(a, b):
            raise InfeasibleSpecError(
                f"{self.agent_id}: {a} and {b} are not adjacent on the circle; "
                "only adjacent pairs form a coherent persona"
            )


@dataclass(frozen=True)
class PopulationSpec:
    n: int
    condition: PopulationCondition
    complexity: Complexity
    homogeneous_category: HigherOrderCategory | None = None

    def validate(self) -> None:
        if self.n <= 0:
            raise InfeasibleSpecError("population size must be positive")
        if self.condition is PopulationCondition.NO_VALUE:
            if self.complexity is not Complexity.NONE:
                raise InfeasibleSpecError("a value-neutral population has complexity None")
        elif self.complexity is Complexity.NONE:
            raise InfeasibleSpecError(
                f"{self.condition} requires Single or Multi complexity"
            )
        if self.condition is PopulationCondition.HOMOGENEOUS:
            if self.homogeneous_category is None:
                raise InfeasibleSpecError("homogeneous population needs a category")
        elif self.homogeneous_category is not None:
            raise InfeasibleSpecError("category only applies to homogeneous populations")


def _display_name(index: int) -> str:
    base = _NAME_POOL[index % len(_NAME_POOL)]
    round_ = index // len(_NAME_POOL)
    return base if round_ == 0 else f"{base} {round_ + 1}"


def _balanced_single_assignment(n: int) -> list[ValueType]:
    counts = {q: n // 4 for q in _QUADRANT_ORDER}
    for q in _EXTRA_ORDER[: n % 4]:
        counts[q] += 1
    per_quadrant: dict[HigherOrderCategory, list[ValueType]] = {}
    for q in _QUADRANT_ORDER:
        members = sorted(MEMBERS_OF[q], key=cycle_index)
        per_quadrant[q] = [members[i % len(members)] for i in range(counts[q])]
    # Interleave across quadrants so every prefix stays as mixed as possible.
    out: list[ValueType] = []
    i = 0
    while len(out) < n:
        for q in _QUADRANT_ORDER:
            if i < len(per_quadrant[q]):
                out.append(per_quadrant[q][i])
        i += 1
    return out[:n]


def _balanced_multi_assignment(n: int) -> list[tuple[ValueType, ValueType]]:
    return [_BALANCED_MULTI_PAIRS[i % len(_BALANCED_MULTI_PAIRS)] for i in range(n)]


def build_population_specs(spec: PopulationSpec) -> list[PersonaSpec]:
    """Expand a population description into one PersonaSpec per agent."""
    spec.validate()
    out: list[PersonaSpec] = []
    for i in range(spec.n):
        agent_id = f"agent_{i:02d}"
        name = _display_name(i)
        if spec.condition is PopulationCondition.NO_VALUE:
            values: tuple[ValueType, ...] = ()
        elif spec.condition is PopulationCondition.HOMOGENEOUS:
            assert spec.homogeneous_category is not None
            if spec.complexity is Complexity.SINGLE:
                members = sorted(MEMBERS_OF[spec.homogeneous_category], key=cycle_index)
                values = (members[i % len(members)],)
            else:
                pairs = _QUADRANT_PAIRS[spec.homogeneous_category]
                values = pairs[i % len(pairs)]
        else:
            if spec.complexity is Complexity.SINGLE:
                values = (_balanced_single_assignment(spec.n)[i],)
            else:
                values = _balanced_multi_assignment(spec.n)[i]
        ps = PersonaSpec(agent_id=agent_id, display_name=name, values=values,
                         complexity=spec.complexity)
        ps.validate()
        out.append(ps)
    return out


# --------------------------------------------------------------------------
# Elicitation
# --------------------------------------------------------------------------


@dataclass
class NarrativeRecord:
    dilemma_id: str
    narrative: str
    judge_score: int
    attempts: int
    accepted: bool
    substituted_for: str | None = None

    def to_dict(self) -> dict:
        out = {
            "dilemma_id": self.dilemma_id,
            "narrative": self.narrative,
            "judge_score": self.judge_score,
            "attempts": self.attempts,
            "accepted": self.accepted,
        }
        if self.substituted_for is not None:
            out["substituted_for"] = self.substituted_for
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NarrativeRecord":
        return cls(
            dilemma_id=d["dilemma_id"],
            narrative=d["narrative"],
            judge_score=d["judge_score"],
            attempts=d["attempts"],
            accepted=d["accepted"],
            substituted_for=d.get("substituted_for"),
        )


@dataclass
class PersonaProfile:
    agent_id: str
    display_name: str
    values: tuple[ValueType, ...]
    complexity: Complexity
    narrative: str
    elicitation_trace: list[NarrativeRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "display_name": self.display_name,
            "values": [str(v) for v in self.values],
            "complexity": self.complexity.value,
            "narrative": self.narrative,
            "elicitation_trace": [r.to_dict() for r in self.elicitation_trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PersonaProfile":
        return cls(
            agent_id=d["agent_id"],
            display_name=d["display_name"],
            values=tuple(value_from_name(v) for v in d["values"]),
            complexity=Complexity(d["complexity"]),
            narrative=d["narrative"],
            elicitation_trace=[NarrativeRecord.from_dict(r) for r in d["elicitation_trace"]],
        )


_NEUTRAL_BACKSTORY = (
    "{name} grew up in a mid-sized river town, trained in a practical trade, and "
    "moved here for the work. They take situations as they come, weigh what is in "
    "front of them, and get along with most people without strong attachments to "
    "any particular creed."
)


def _values_phrase(values: tuple[ValueType, ...]) -> str:
    names = [str(v) for v in values]
    return " and ".join(names) if len(names) <= 2 else ", ".join(names)


def _narrative_request(spec: PersonaSpec, dilemma: Dilemma,
                       targets: tuple[ValueType, ...], attempt: int) -> ChatRequest:
    system = Message(
        "system",
        f"You are {spec.display_name}, writing a short first-person account of a "
        "choice you once made. Stay concrete and personal.",
    )
    user = Message(
        "user",
        f"Dilemma: {dilemma.title}. {dilemma.text}\n"
        f"Target values: {_values_phrase(targets)}\n"
        f"Attempt: {attempt}\n"
        "Recount, in 3-5 sentences, what you chose and why.",
    )
    return ChatRequest(messages=[system, user], tag=RequestTag.NARRATIVE_GEN)


def _judge_request(dilemma: Dilemma, targets: tuple[ValueType, ...], narrative: str) -> ChatRequest:
    system = Message(
        "system",
        "You grade persona narratives for coherence and fidelity to the stated "
        "values. Reply with 'Score: N' where N is an integer from 0 to 10, then "
        "one sentence of justification.",
    )
    user = Message(
        "user",
        f"Dilemma: {dilemma.title}. {dilemma.text}\n"
        f"Target values: {_values_phrase(targets)}\n"
        f"Narrative:\n{narrative}",
    )
    return ChatRequest(messages=[system, user], tag=RequestTag.JUDGE)


def _score_narrative(backend: Backend, dilemma: Dilemma,
                     targets: tuple[ValueType, ...], narrative: str) -> int:
    req = _judge_request(dilemma, targets, narrative)
    try:
        return complete_structured(backend, req, SchemaTag.INTEGER_IN_RANGE, int_range=(0, 10))
    except ParseFailedTwiceError as exc:
        raise UnparsableScoreError(str(exc)) from exc


def _elicit_one(backend: Backend, spec: PersonaSpec, dilemma: Dilemma) -> NarrativeRecord:
    targets = tuple(v for v in dilemma.tags if v in spec.values) or spec.values
    best_text = ""
    best_score = -1
    attempts = 0
    for attempt in range(1, MAX_REGENERATIONS + 2):
        attempts = attempt
        narrative = backend.complete(_narrative_request(spec, dilemma, targets, attempt)).text
        score = _score_narrative(backend, dilemma, targets, narrative)
        if score > best_score:
            best_score, best_text = score, narrative
        if score >= KEEP_THRESHOLD:
            return NarrativeRecord(dilemma.id, narrative, score, attempts, accepted=True)
    return NarrativeRecord(dilemma.id, best_text, best_score, attempts, accepted=False)


def _reflection_request(spec: PersonaSpec, records: list[NarrativeRecord]) -> ChatRequest:
    system = Message(
        "system",
        f"You are {spec.display_name}. Distill the episodes below into a short "
        "first-person self-portrait: who you are and what you will not bend on.",
    )
    episodes = "\n\n".join(f"Episode {i + 1}: {r.narrative}" for i, r in enumerate(records))
    user = Message(
        "user",
        f"Target values: {_values_phrase(spec.values)}\n{episodes}\n"
        "Write the self-portrait in 2-4 sentences.",
    )
    return ChatRequest(messages=[system, user], tag=RequestTag.REFLECTION)


def build_persona(
    spec: PersonaSpec,
    corpus: list[Dilemma],
    backend: Backend,
    seed: int | str,
    warn: object = None,
) -> PersonaProfile:
    """Run the full elicitation pipeline for one agent.

    ``warn`` is an optional callable taking a message string; it is invoked
    when a dilemma slot falls back to its best rejected narrative.
    """
    spec.validate()
    if spec.complexity is Complexity.NONE:
        return PersonaProfile(
            agent_id=spec.agent_id,
            display_name=spec.display_name,
            values=(),
            complexity=Complexity.NONE,
            narrative=_NEUTRAL_BACKSTORY.format(name=spec.display_name),
            elicitation_trace=[],
        )

    eligible = [d for d in corpus if any(t in spec.values for t in d.tags)]
    if len(eligible) < DILEMMAS_PER_AGENT:
        raise ElicitationError(
            f"{spec.agent_id}: only {len(eligible)} dilemmas match values "
            f"{_values_phrase(spec.values)}; need {DILEMMAS_PER_AGENT}"
        )
    eligible.sort(key=lambda d: d.id)
    rng = random.Random(f"{seed}|persona|{spec.agent_id}")
    chosen = rng.sample(eligible, DILEMMAS_PER_AGENT)
    used = {d.id for d in chosen}

    trace: list[NarrativeRecord] = []
    for dilemma in chosen:
        record = _elicit_one(backend, spec, dilemma)
        if not record.accepted:
            # Swap in an unused dilemma sharing a tag and try once more.
            substitutes = [d for d in eligible if d.id not in used]
            if substitutes:
                sub = substitutes[0]
                used.add(sub.id)
                sub_record = _elicit_one(backend, spec, sub)
                sub_record.substituted_for = dilemma.id
                if sub_record.accepted:
                    trace.append(sub_record)
                    continue
                if sub_record.judge_score > record.judge_score:
                    record = sub_record
            if warn is not None:
                warn(
                    f"{spec.agent_id}: kept best-of-rejected narrative for "
                    f"{record.dilemma_id} (score {record.judge_score})"
                )
        trace.append(record)

    reflection = backend.complete(_reflection_request(spec, trace)).text
    return PersonaProfile(
        agent_id=spec.agent_id,
        display_name=spec.display_name,
        values=spec.values,
        complexity=spec.complexity,
        narrative=reflection,
        elicitation_trace=trace,
    )


def build_population(
    spec: PopulationSpec,
    corpus: list[Dilemma],
    backend: Backend,
    seed: int | str,
    warn: object = None,
) -> list[PersonaProfile]:
    return [
        build_persona(ps, corpus, backend, seed, warn=warn)
        for ps in build_population_specs(spec)
    ]


def dump_personas(profiles: list[PersonaProfile]) -> str:
    payload = {"personas": [p.to_dict() for p in profiles]}
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_personas(text: str) -> list[PersonaProfile]:
    payload = json.loads(text)
    return [PersonaProfile.from_dict(d) for d in payload["personas"]]
