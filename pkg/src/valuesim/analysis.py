"""Measurements over a finished run: who talked to whom, how evenly, how
coherently, and what kind of rules came out of it.

Everything here is a pure function of the loaded event log (plus the run
manifest for protocol constants), so metrics can be recomputed at any time
without touching the simulation.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backend import (
    Backend,
    ChatRequest,
    Message,
    RequestTag,
    SchemaTag,
    complete_structured,
)
from .errors import (
    DegenerateLabelsError,
    MissingPopulationError,
    NoEligibleConversationsError,
    ParseFailedTwiceError,
    TooFewSurveysError,
)
from .store import Event, LoadedRun, load_run
from .values import CYCLE, category, value_from_name

NO_VALUE_LABEL = "NoValue"


# --------------------------------------------------------------------------
# Conversation graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphNode:
    agent_id: str
    display_name: str
    values: tuple[str, ...]
    category: str  # quadrant of the first held value, or NoValue


@dataclass
class ConversationGraph:
    """Undirected weighted graph; weight = completed-conversation count."""

    nodes: dict[str, GraphNode]
    edges: dict[tuple[str, str], float]

    def total_weight(self) -> float:
        return float(sum(self.edges.values()))

    def degrees(self) -> dict[str, float]:
        deg = {agent_id: 0.0 for agent_id in self.nodes}
        for (a, b), w in self.edges.items():
            deg[a] += w
            deg[b] += w
        return deg


def _node_category(values: Sequence[str]) -> str:
    if not values:
        return NO_VALUE_LABEL
    return str(category(value_from_name(values[0])))


def build_graph(events: Sequence[Event]) -> ConversationGraph:
    """Nodes from persona records, one edge per pair that finished talking."""
    nodes: dict[str, GraphNode] = {}
    for e in events:
        if e.kind != "PersonaBuilt":
            continue
        profile = e.payload["profile"]
        values = tuple(profile.get("values", []))
        nodes[e.payload["agent_id"]] = GraphNode(
            agent_id=e.payload["agent_id"],
            display_name=profile.get("display_name", e.payload["agent_id"]),
            values=values,
            category=_node_category(values),
        )
    if not nodes:
        raise MissingPopulationError("event log contains no persona records")

    participants: dict[str, tuple[str, str]] = {}
    edges: dict[tuple[str, str], float] = {}
    for e in events:
        if e.kind == "ConversationStart":
            a, b = sorted(e.payload["participants"])
            participants[e.payload["conversation_id"]] = (a, b)
        elif e.kind == "ConversationEnd" and e.payload["num_turns"] >= 1:
            pair = participants[e.payload["conversation_id"]]
            edges[pair] = edges.get(pair, 0.0) + 1.0
    return ConversationGraph(nodes=nodes, edges=edges)


def category_labeling(graph: ConversationGraph) -> dict[str, str]:
    return {agent_id: node.category for agent_id, node in graph.nodes.items()}


# --------------------------------------------------------------------------
# Participation balance
# --------------------------------------------------------------------------


def gini_coefficient(counts: Sequence[float]) -> float:
    """Pairwise relative-difference concentration score: the sum over i<j of
    |ci-cj|/(ci+cj), divided by n, with an all-zero pair contributing 0.

    Uniform counts give 0 and a single dominant speaker among n agents gives
    (n-1)/n, but unlike the classical Gini the score is a pair sum over n
    normalized by n, so widely dispersed counts in a large population can
    push it past 1. Downstream consumers that need a bounded balance signal
    clamp 1 - gini into [0, 1].
    """
    c = np.asarray(list(counts), dtype=float)
    n = c.size
    if n == 0:
        return 0.0
    diff = np.abs(c[:, None] - c[None, :])
    total = c[:, None] + c[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(total > 0, diff / total, 0.0)
    # Symmetric with a zero diagonal, so the i<j sum is half the full sum.
    return float(ratio.sum() / 2.0 / n)


def entropy_bits(counts: Sequence[float]) -> float:
    c = np.asarray(list(counts), dtype=float)
    total = c.sum()
    if total <= 0:
        return 0.0
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def participation_balance(events: Sequence[Event]) -> dict:
    """Gini and entropy over per-agent utterance counts.

    Agents who never spoke still count: silence is the imbalance being
    measured. Zero utterances overall is flagged degenerate (both metrics 0).
    """
    counts: dict[str, int] = {}
    for e in events:
        if e.kind == "PersonaBuilt":
            counts[e.payload["agent_id"]] = 0
    for e in events:
        if e.kind == "Turn":
            speaker = e.payload["speaker"]
            counts[speaker] = counts.get(speaker, 0) + 1
    ordered = [counts[agent_id] for agent_id in sorted(counts)]
    return {
        "gini": gini_coefficient(ordered),
        "entropy_bits": entropy_bits(ordered),
        "degenerate": sum(ordered) == 0,
        "counts": {agent_id: counts[agent_id] for agent_id in sorted(counts)},
    }


# --------------------------------------------------------------------------
# Assortativity, modularity, communities
# --------------------------------------------------------------------------


def assortativity(graph: ConversationGraph, labeling: Mapping[str, str]) -> float:
    """Newman attribute assortativity over edge-weighted label pairs.

    By convention 1.0 when no edge weight crosses labels (and at least two
    labels exist); a single shared label leaves the coefficient undefined.
    """
    if not graph.edges:
        raise ValueError("assortativity needs at least one edge")
    node_labels = sorted({labeling[agent_id] for agent_id in graph.nodes})
    if len(node_labels) < 2:
        raise DegenerateLabelsError("all nodes share one label")
    index = {label: i for i, label in enumerate(node_labels)}
    k = len(node_labels)
    mix = np.zeros((k, k))
    for (a, b), w in graph.edges.items():
        la, lb = index[labeling[a]], index[labeling[b]]
        mix[la][lb] += w
        mix[lb][la] += w
    e = mix / mix.sum()
    trace = float(np.trace(e))
    if math.isclose(trace, 1.0, abs_tol=1e-12):
        return 1.0
    a_i = e.sum(axis=1)
    rand = float((a_i * a_i).sum())
    return (trace - rand) / (1.0 - rand)


def modularity(graph: ConversationGraph, partition: Mapping[str, int]) -> float:
    """Newman-Girvan weighted modularity Q for the given node partition."""
    for agent_id in graph.nodes:
        if agent_id not in partition:
            raise ValueError(f"partition misses node {agent_id!r}")
    m = graph.total_weight()
    if m == 0:
        return 0.0
    intra: dict[int, float] = {}
    comm_degree: dict[int, float] = {}
    for (a, b), w in graph.edges.items():
        ca, cb = partition[a], partition[b]
        if ca == cb:
            intra[ca] = intra.get(ca, 0.0) + w
        comm_degree[ca] = comm_degree.get(ca, 0.0) + w
        comm_degree[cb] = comm_degree.get(cb, 0.0) + w
    q = 0.0
    for c in set(partition.values()):
        d_c = comm_degree.get(c, 0.0)
        q += intra.get(c, 0.0) / m - (d_c / (2.0 * m)) ** 2
    return q


def detect_communities(graph: ConversationGraph) -> dict[str, int]:
    """Greedy agglomerative modularity maximization.

    Starts from singletons and keeps merging the community pair with the
    largest positive dQ = w_ab/m - d_a*d_b/(2*m^2); ties go to the smallest
    index pair. Stops when no merge gains. Returned indices are contiguous
    from 0 in node-id order of first appearance.
    """
    node_ids = sorted(graph.nodes)
    if not node_ids:
        raise ValueError("graph has no nodes")
    m = graph.total_weight()
    comm_of = {agent_id: i for i, agent_id in enumerate(node_ids)}
    if m > 0:
        degree = graph.degrees()
        comm_degree = {i: degree[agent_id] for agent_id, i in comm_of.items()}
        cross: dict[tuple[int, int], float] = {}
        for (a, b), w in graph.edges.items():
            key = tuple(sorted((comm_of[a], comm_of[b])))
            cross[key] = cross.get(key, 0.0) + w

        while cross:
            best: tuple[int, int] | None = None
            best_gain = 0.0
            for key in sorted(cross):
                i, j = key
                gain = cross[key] / m - comm_degree[i] * comm_degree[j] / (2.0 * m * m)
                if gain > best_gain:
                    best_gain = gain
                    best = key
            if best is None:
                break
            keep, gone = best
            comm_degree[keep] += comm_degree.pop(gone)
            merged: dict[tuple[int, int], float] = {}
            for (i, j), w in cross.items():
                i = keep if i == gone else i
                j = keep if j == gone else j
                if i == j:
                    continue  # became internal weight
                key = (i, j) if i < j else (j, i)
                merged[key] = merged.get(key, 0.0) + w
            cross = merged
            for agent_id, c in comm_of.items():
                if c == gone:
                    comm_of[agent_id] = keep

    relabel: dict[int, int] = {}
    partition: dict[str, int] = {}
    for agent_id in node_ids:
        c = comm_of[agent_id]
        if c not in relabel:
            relabel[c] = len(relabel)
        partition[agent_id] = relabel[c]
    return partition


def bridge_stats(graph: ConversationGraph, partition: Mapping[str, int]) -> dict:
    """Fraction of edge weight crossing community boundaries."""
    total = graph.total_weight()
    if total == 0:
        return {"bridge_edge_fraction": 0.0}
    crossing = sum(w for (a, b), w in graph.edges.items() if partition[a] != partition[b])
    return {"bridge_edge_fraction": crossing / total}


# --------------------------------------------------------------------------
# Topical continuity
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z]+(?:'[a-z]+)?")
_stopwords: frozenset[str] | None = None


def _load_stopwords() -> frozenset[str]:
    global _stopwords
    if _stopwords is None:
        text = resources.files("valuesim.data").joinpath("stopwords.txt").read_text("utf-8")
        _stopwords = frozenset(w.strip() for w in text.splitlines() if w.strip())
    return _stopwords


def content_words(text: str) -> frozenset[str]:
    stop = _load_stopwords()
    return frozenset(t for t in _TOKEN_RE.findall(text.lower()) if t not in stop)


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def topical_continuity(events: Sequence[Event]) -> float:
    """Mean over conversations of mean Jaccard overlap between the content
    words of consecutive turns. Conversations shorter than two turns carry
    no continuity signal and are skipped."""
    turns: dict[str, list[str]] = {}
    order: list[str] = []
    for e in events:
        if e.kind == "Turn":
            conv_id = e.payload["conversation_id"]
            if conv_id not in turns:
                turns[conv_id] = []
                order.append(conv_id)
            turns[conv_id].append(e.payload["text"])
    per_conversation: list[float] = []
    for conv_id in order:
        texts = turns[conv_id]
        if len(texts) < 2:
            continue
        sets = [content_words(t) for t in texts]
        overlaps = [_jaccard(sets[i], sets[i + 1]) for i in range(len(sets) - 1)]
        per_conversation.append(sum(overlaps) / len(overlaps))
    if not per_conversation:
        raise NoEligibleConversationsError("no conversation has two or more turns")
    return sum(per_conversation) / len(per_conversation)


# --------------------------------------------------------------------------
# Value drift
# --------------------------------------------------------------------------


def survey_vectors(events: Sequence[Event]) -> dict[str, list[tuple[int, list[float]]]]:
    """Per agent, the (round, 10-component score vector) series in log order."""
    series: dict[str, list[tuple[int, list[float]]]] = {}
    for e in events:
        if e.kind != "Survey":
            continue
        scores = e.payload["scores"]
        vector = [float(scores[str(v)]) for v in CYCLE]
        series.setdefault(e.payload["agent_id"], []).append((e.round, vector))
    return series


def value_drift(vectors: Sequence[Sequence[float]]) -> tuple[list[float], float]:
    """Drift per consecutive survey pair and the resulting stability.

    drift_t = mean absolute component difference between survey t and t+1;
    stability = 1 - mean(drift_t).
    """
    if len(vectors) < 2:
        raise TooFewSurveysError("drift needs at least two surveys")
    arr = np.asarray([list(v) for v in vectors], dtype=float)
    drifts = np.abs(np.diff(arr, axis=0)).mean(axis=1)
    series = [float(d) for d in drifts]
    return series, 1.0 - float(np.mean(drifts))


# --------------------------------------------------------------------------
# Rule ideology
# --------------------------------------------------------------------------


class Ideology(Enum):
    ROUSSEAUIAN = "Rousseauian"
    LOCKEAN = "Lockean"
    HOBBESIAN = "Hobbesian"
    UNCLASSIFIED = "Unclassified"

    def __str__(self) -> str:
        return self.value


IDEOLOGY_DEFINITIONS = {
    Ideology.ROUSSEAUIAN: "collective consensus, the general will, and social harmony",
    Ideology.LOCKEAN: "individual rights and procedural fairness",
    Ideology.HOBBESIAN: "hierarchy, order, and final authority",
}

# Weighted cue phrases per tradition. Scores are summed per occurrence
# (word-boundary matches on the lowercased rule); the best tradition must
# reach _RUBRIC_THRESHOLD and be a unique maximum, else Unclassified.
_RUBRIC: dict[Ideology, dict[str, int]] = {
    Ideology.ROUSSEAUIAN: {
        "consensus": 4,
        "general will": 5,
        "common good": 4,
        "common ground": 4,
        "harmony": 4,
        "unanimous": 4,
        "solidarity": 4,
        "inclusion": 4,
        "collective": 3,
        "whole community": 3,
        "belonging": 3,
        "unity": 3,
        "together": 2,
        "shared": 2,
        "everyone": 2,
        "all members": 2,
    },
    Ideology.LOCKEAN: {
        "due process": 5,
        "fair procedure": 5,
        "rights": 4,
        "consent": 4,
        "liberty": 4,
        "property": 4,
        "privacy": 4,
        "right": 3,
        "appeal": 3,
        "individual": 3,
        "freely": 3,
        "freedom": 3,
        "private": 3,
        "impartial": 3,
        "exit": 3,
        "notice": 2,
    },
    Ideology.HOBBESIAN: {
        "arbiter": 5,
        "sovereign": 5,
        "hierarchy": 5,
        "authority": 4,
        "obey": 4,
        "enforce": 4,
        "enforces": 4,
        "enforcement": 4,
        "command": 4,
        "punish": 4,
        "binding": 3,
        "penalty": 3,
        "discipline": 3,
        "rank": 3,
        "order": 2,
        "final": 2,
        "leader": 2,
    },
}

_RUBRIC_THRESHOLD = 3

_RUBRIC_PATTERNS: dict[Ideology, list[tuple[re.Pattern, int]]] = {
    ideology: [
        (re.compile(rf"\b{re.escape(phrase)}\b"), weight)
        for phrase, weight in table.items()
    ]
    for ideology, table in _RUBRIC.items()
}


def rubric_scores(rule_text: str) -> dict[Ideology, int]:
    lowered = rule_text.lower()
    scores: dict[Ideology, int] = {}
    for ideology, patterns in _RUBRIC_PATTERNS.items():
        scores[ideology] = sum(
            weight * len(pattern.findall(lowered)) for pattern, weight in patterns
        )
    return scores


def classify_ideology(rule_text: str, backend: Backend | None = None) -> Ideology:
    """Label one proposed rule.

    Rubric mode (no backend) scores weighted cue phrases for each tradition.
    Backend mode asks a judge completion to pick a label; an unparsable
    reply falls back to Unclassified.
    """
    if not rule_text.strip():
        raise ValueError("rule text is empty")
    if backend is None:
        scores = rubric_scores(rule_text)
        best = max(scores.values())
        if best < _RUBRIC_THRESHOLD:
            return Ideology.UNCLASSIFIED
        winners = [i for i, s in scores.items() if s == best]
        if len(winners) != 1:
            return Ideology.UNCLASSIFIED
        return winners[0]

    labels = [str(i) for i in IDEOLOGY_DEFINITIONS]
    definitions = "\n".join(f"- {i}: {d}" for i, d in IDEOLOGY_DEFINITIONS.items())
    req = ChatRequest(
        messages=[
            Message("system", "You classify proposed community rules by political tradition."),
            Message(
                "user",
                f"Traditions:\n{definitions}\n\n"
                f"Rule: {rule_text}\n"
                f"Options: [{', '.join(labels)}]\n"
                "Answer with exactly one tradition name and a one-line justification.",
            ),
        ],
        tag=RequestTag.IDEOLOGY_JUDGE,
    )
    try:
        choice = complete_structured(backend, req, SchemaTag.AGENT_CHOICE, options=labels)
    except ParseFailedTwiceError:
        return Ideology.UNCLASSIFIED
    return Ideology(choice)


def load_ideology_fixture() -> list[tuple[str, Ideology]]:
    """Bundled labeled rule corpus used to pin the rubric's behavior."""
    raw = json.loads(
        resources.files("valuesim.data").joinpath("ideology_fixture.json").read_text("utf-8")
    )
    return [(entry["text"], Ideology(entry["label"])) for entry in raw["rules"]]


def ideology_distribution(
    proposals: Sequence[Mapping],
    labels: Sequence[Ideology],
    agent_values: Mapping[str, Sequence[str]],
) -> dict:
    """Histogram plus the proposer-value x ideology count matrix.

    Each proposal increments one cell per value its proposer holds (the
    NoValue row when the proposer holds none).
    """
    if len(proposals) != len(labels):
        raise ValueError("one label per proposal required")
    columns = [str(i) for i in Ideology]
    histogram = {c: 0 for c in columns}
    cell: dict[tuple[str, str], int] = {}
    rows_present: set[str] = set()
    for proposal, label in zip(proposals, labels):
        histogram[str(label)] += 1
        values = list(agent_values.get(proposal["agent_id"], ())) or [NO_VALUE_LABEL]
        for value_name in values:
            rows_present.add(value_name)
            key = (value_name, str(label))
            cell[key] = cell.get(key, 0) + 1
    total = sum(histogram.values())
    percentages = {
        c: (100.0 * histogram[c] / total if total else 0.0) for c in columns
    }
    row_order = [str(v) for v in CYCLE if str(v) in rows_present]
    if NO_VALUE_LABEL in rows_present:
        row_order.append(NO_VALUE_LABEL)
    matrix = [[cell.get((r, c), 0) for c in columns] for r in row_order]
    return {
        "histogram": histogram,
        "percentages": percentages,
        "value_ideology_matrix": {"rows": row_order, "columns": columns, "counts": matrix},
    }


# --------------------------------------------------------------------------
# Emergence index
# --------------------------------------------------------------------------

EMERGENCE_COMPONENTS = (
    "conversational_depth",
    "topical_continuity",
    "participation_balance",
    "rule_diversity",
)

EMERGENCE_FORMULA = (
    "mean(mean_turns/max_turns, topical_continuity, 1 - gini, "
    "ideology_entropy/log(3))"
)


def rule_diversity(histogram: Mapping[str, int]) -> float | None:
    """Shannon entropy of the named-ideology split, normalized to [0,1].

    Unclassified rules carry no ideological signal and are excluded; with
    no classified rules at all the component is absent.
    """
    named = [
        histogram.get(str(i), 0)
        for i in (Ideology.ROUSSEAUIAN, Ideology.LOCKEAN, Ideology.HOBBESIAN)
    ]
    total = sum(named)
    if total == 0:
        return None
    entropy = -sum((c / total) * math.log(c / total) for c in named if c > 0)
    return min(1.0, max(0.0, entropy / math.log(3)))


def emergence_index(
    components: Mapping[str, float | None],
    weights: Mapping[str, float] | None = None,
) -> float | None:
    """Weighted mean of the four normalized components; absent when any
    component is missing rather than silently imputed."""
    values: list[float] = []
    weight_list: list[float] = []
    for key in EMERGENCE_COMPONENTS:
        value = components.get(key)
        if value is None:
            return None
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"component {key} out of range: {value}")
        values.append(value)
        weight_list.append(weights[key] if weights else 1.0)
    total_weight = sum(weight_list)
    if total_weight <= 0:
        raise ValueError("weights must sum to a positive total")
    return sum(v * w for v, w in zip(values, weight_list)) / total_weight


# --------------------------------------------------------------------------
# Full report
# --------------------------------------------------------------------------


def _round_floats(value, places: int = 12):
    if isinstance(value, float):
        return round(value, places)
    if isinstance(value, dict):
        return {k: _round_floats(v, places) for k, v in value.items()}
    if isinstance(value, list):
        return [_round_floats(v, places) for v in value]
    return value


def compute_report(loaded: LoadedRun) -> dict:
    events = loaded.events
    config = loaded.manifest.config
    max_turns = int(config.get("stage1", {}).get("max_turns", 6))
    flags: list[str] = []

    graph = build_graph(events)
    participation = participation_balance(events)
    if participation["degenerate"]:
        flags.append("no_utterances")

    assort: float | None
    if not graph.edges:
        flags.append("no_edges")
        assort = None
        assort_degenerate = False
    else:
        try:
            assort = assortativity(graph, category_labeling(graph))
            assort_degenerate = False
        except DegenerateLabelsError:
            # Single shared label: undefined, reported as 1.0 by convention.
            assort = 1.0
            assort_degenerate = True
            flags.append("degenerate_labels")

    partition = detect_communities(graph)
    if graph.edges:
        modularity_value: float | None = modularity(graph, partition)
        bridge_fraction: float | None = bridge_stats(graph, partition)["bridge_edge_fraction"]
    else:
        modularity_value = None
        bridge_fraction = None

    try:
        continuity: float | None = topical_continuity(events)
    except NoEligibleConversationsError:
        continuity = None
        flags.append("no_multi_turn_conversations")

    vectors = survey_vectors(events)
    drift_series: dict[str, list[float]] = {}
    stability_by_agent: dict[str, float] = {}
    for agent_id in sorted(vectors):
        series = [vec for _, vec in vectors[agent_id]]
        if len(series) < 2:
            continue
        drifts, stability = value_drift(series)
        drift_series[agent_id] = drifts
        stability_by_agent[agent_id] = stability
    value_stability = (
        sum(stability_by_agent.values()) / len(stability_by_agent)
        if stability_by_agent
        else None
    )
    if value_stability is None:
        flags.append("too_few_surveys")

    proposals = [e.payload for e in events if e.kind == "RuleProposed"]
    classified = [p for p in proposals if not p.get("placeholder")]
    labels = [classify_ideology(p["text"]) for p in classified]
    agent_values = {agent_id: node.values for agent_id, node in graph.nodes.items()}
    distribution = ideology_distribution(classified, labels, agent_values)

    conversation_turns = [
        e.payload["num_turns"] for e in events if e.kind == "ConversationEnd"
    ]
    depth = (
        min(1.0, sum(conversation_turns) / len(conversation_turns) / max_turns)
        if conversation_turns
        else None
    )
    components = {
        "conversational_depth": depth,
        "topical_continuity": continuity,
        # The pairwise gini can pass 1 on large dispersed populations; the
        # balance component is defined as the clamped complement.
        "participation_balance": min(1.0, max(0.0, 1.0 - participation["gini"])),
        "rule_diversity": rule_diversity(distribution["histogram"]),
    }
    index = emergence_index(components)

    report = {
        "schema_version": 1,
        "run_id": loaded.manifest.run_id,
        "seed": loaded.manifest.seed,
        "population_size": len(graph.nodes),
        "num_conversations": len(conversation_turns),
        "num_turns": sum(conversation_turns),
        "participation": {
            "gini": participation["gini"],
            "entropy_bits": participation["entropy_bits"],
            "degenerate": participation["degenerate"],
        },
        "assortativity_by_category": assort,
        "assortativity_degenerate": assort_degenerate,
        "modularity": modularity_value,
        "partition": partition,
        "bridge_edge_fraction": bridge_fraction,
        "topical_continuity": continuity,
        "drift_series": drift_series,
        "stability_by_agent": stability_by_agent,
        "value_stability": value_stability,
        "ideology_histogram": distribution["histogram"],
        "ideology_percentages": distribution["percentages"],
        "value_ideology_matrix": distribution["value_ideology_matrix"],
        "placeholder_rules": len(proposals) - len(classified),
        "emergence_index": index,
        "components": components,
        "emergence_formula": EMERGENCE_FORMULA,
        "degenerate_flags": flags,
    }
    return _round_floats(report)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_all_metrics(run_dir: str | Path) -> dict:
    """Compute the full report and write metrics/report.json plus the flat
    CSV exports (edges, nodes, participation, surveys, ideology)."""
    loaded = load_run(run_dir)
    report = compute_report(loaded)
    metrics_dir = Path(run_dir) / "metrics"
    metrics_dir.mkdir(parents=True, exist_ok=True)

    (metrics_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    graph = build_graph(loaded.events)
    _write_csv(
        metrics_dir / "edges.csv",
        ["source", "target", "weight"],
        [[a, b, int(w)] for (a, b), w in sorted(graph.edges.items())],
    )
    partition = report["partition"]
    _write_csv(
        metrics_dir / "nodes.csv",
        ["agent_id", "display_name", "category", "values", "community"],
        [
            [
                agent_id,
                node.display_name,
                node.category,
                "|".join(node.values),
                partition[agent_id],
            ]
            for agent_id, node in sorted(graph.nodes.items())
        ],
    )
    participation = participation_balance(loaded.events)
    _write_csv(
        metrics_dir / "participation.csv",
        ["agent_id", "utterances"],
        [[agent_id, n] for agent_id, n in participation["counts"].items()],
    )
    value_columns = [str(v) for v in CYCLE]
    survey_rows = []
    for agent_id, series in sorted(survey_vectors(loaded.events).items()):
        for round_index, vector in series:
            survey_rows.append([agent_id, round_index] + [repr(x) for x in vector])
    _write_csv(metrics_dir / "surveys.csv", ["agent_id", "round"] + value_columns, survey_rows)

    ideology_rows = []
    for e in loaded.events:
        if e.kind != "RuleProposed":
            continue
        p = e.payload
        label = (
            str(Ideology.UNCLASSIFIED)
            if p.get("placeholder")
            else str(classify_ideology(p["text"]))
        )
        ideology_rows.append(
            [p["agent_id"], p["rule_index"], label, int(bool(p.get("placeholder"))), p["text"]]
        )
    _write_csv(
        metrics_dir / "ideology.csv",
        ["agent_id", "rule_index", "label", "placeholder", "text"],
        ideology_rows,
    )
    return report


# --------------------------------------------------------------------------
# Cross-run aggregation
# --------------------------------------------------------------------------

_AGGREGATE_METRICS = (
    "participation.gini",
    "participation.entropy_bits",
    "assortativity_by_category",
    "modularity",
    "bridge_edge_fraction",
    "topical_continuity",
    "value_stability",
    "emergence_index",
)


def _dig(report: dict, dotted: str):
    value = report
    for part in dotted.split("."):
        if not isinstance(value, dict) or part not in value:
            return None
        value = value[part]
    return value


def summarize_runs(run_dirs: Sequence[str | Path]) -> dict:
    """Aggregate reports across runs: one row per condition, mean and
    stddev over seeds for each scalar metric. Computes missing reports."""
    rows: dict[str, dict] = {}
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        report_path = run_dir / "metrics" / "report.json"
        if report_path.exists():
            report = json.loads(report_path.read_text(encoding="utf-8"))
        else:
            report = write_all_metrics(run_dir)
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        population = manifest.get("config", {}).get("population", {})
        condition = "{condition}/{complexity}/n{size}".format(
            condition=population.get("condition", "?"),
            complexity=population.get("complexity", "?"),
            size=population.get("size", "?"),
        )
        row = rows.setdefault(condition, {"runs": [], "samples": {}})
        row["runs"].append(str(run_dir))
        for metric in _AGGREGATE_METRICS:
            value = _dig(report, metric)
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                row["samples"].setdefault(metric, []).append(float(value))

    table: dict[str, dict] = {}
    for condition in sorted(rows):
        samples = rows[condition]["samples"]
        metrics = {}
        for metric in _AGGREGATE_METRICS:
            xs = samples.get(metric, [])
            if not xs:
                metrics[metric] = {"mean": None, "stddev": None, "n": 0}
            else:
                arr = np.asarray(xs)
                metrics[metric] = {
                    "mean": round(float(arr.mean()), 12),
                    "stddev": round(float(arr.std()), 12),
                    "n": len(xs),
                }
        table[condition] = {"runs": sorted(rows[condition]["runs"]), "metrics": metrics}
    return {"conditions": table}
