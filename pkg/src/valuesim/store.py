"""Run persistence: an append-only event log plus the run directory around it.

Every run writes one directory:

    <run_dir>/
      manifest.json        run id, seed, config (API key env var name only)
      events.jsonl         the complete event stream, one JSON object per line
      personas.json        elicited profiles
      snapshots/           periodic agent-state dumps
      metrics/             analysis outputs (written later by the analyzer)

The event stream is the source of truth; agent state and metrics are both
reconstructable from it. Events carry no wall-clock timestamps, so a rerun
with the same seed produces a byte-identical events.jsonl.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .backend import RecordedCall
from .errors import (
    CorruptLineError,
    IllegalPhaseError,
    MissingEventsError,
    OutputDirNotEmptyError,
    RunClosedError,
    SchemaVersionMismatchError,
    StoreError,
)

SCHEMA_VERSION = 1

EVENT_KINDS = frozenset(
    {
        "PersonaBuilt",
        "Invite",
        "InviteOutcome",
        "ConversationStart",
        "Turn",
        "ConversationEnd",
        "MemoryMerge",
        "ImpressionUpdate",
        "SelfPerceptionUpdate",
        "Survey",
        "RuleProposed",
        "RuleComment",
        "BackendCall",
        "Warning",
    }
)

# Phases an event kind may legally appear in; None means any phase.
_ALLOWED_PHASES: dict[str, frozenset[str] | None] = {
    "PersonaBuilt": frozenset({"setup"}),
    "Invite": frozenset({"invite"}),
    "InviteOutcome": frozenset({"resolve"}),
    "ConversationStart": frozenset({"converse"}),
    "Turn": frozenset({"converse"}),
    "ConversationEnd": frozenset({"converse"}),
    "MemoryMerge": frozenset({"converse"}),
    "ImpressionUpdate": frozenset({"converse"}),
    "SelfPerceptionUpdate": frozenset({"converse"}),
    "Survey": frozenset({"survey"}),
    "RuleProposed": frozenset({"propose"}),
    "RuleComment": frozenset({"comment"}),
    "BackendCall": None,
    "Warning": None,
}


@dataclass(frozen=True)
class Event:
    seq: int
    round: int
    phase: str
    kind: str
    payload: dict
    schema_version: int = SCHEMA_VERSION

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "round": self.round,
                "phase": self.phase,
                "kind": self.kind,
                "payload": self.payload,
                "schema_version": self.schema_version,
            },
            sort_keys=True,
            ensure_ascii=True,
            separators=(",", ":"),
        )


def _check_phase(seq: int, kind: str, phase: str) -> None:
    if kind not in EVENT_KINDS:
        raise StoreError(f"unknown event kind {kind!r}")
    allowed = _ALLOWED_PHASES[kind]
    if allowed is not None and phase not in allowed:
        raise IllegalPhaseError(seq, kind, phase)


class EventLog:
    """Append-only writer over events.jsonl with explicit flush barriers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._next_seq = 0
        self._closed = False

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def append(self, kind: str, payload: dict, round_index: int, phase: str) -> Event:
        if self._closed:
            raise RunClosedError("event log is finalized; no further appends")
        seq = self._next_seq
        _check_phase(seq, kind, phase)
        event = Event(seq=seq, round=round_index, phase=phase, kind=kind, payload=payload)
        self._fh.write(event.to_json_line() + "\n")
        self._next_seq += 1
        return event

    def barrier(self) -> None:
        """Phase boundary: everything logged so far reaches the OS."""
        if not self._closed:
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def finalize(self) -> None:
        if self._closed:
            return
        self.barrier()
        self._fh.close()
        self._closed = True

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.finalize()


def read_events(path: str | Path) -> list[Event]:
    """Load and validate an event stream.

    Checks: parseable lines, required fields, matching schema version,
    contiguous seq numbering from 0, and kind/phase legality.
    """
    path = Path(path)
    if not path.exists():
        raise MissingEventsError(f"no event log at {path}")
    events: list[Event] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLineError(lineno, f"not valid JSON: {exc}") from exc
            try:
                event = Event(
                    seq=raw["seq"],
                    round=raw["round"],
                    phase=raw["phase"],
                    kind=raw["kind"],
                    payload=raw["payload"],
                    schema_version=raw["schema_version"],
                )
            except (KeyError, TypeError) as exc:
                raise CorruptLineError(lineno, f"missing field: {exc}") from exc
            if event.schema_version != SCHEMA_VERSION:
                raise SchemaVersionMismatchError(event.schema_version, SCHEMA_VERSION)
            if event.seq != len(events):
                raise CorruptLineError(
                    lineno, f"seq {event.seq} out of order (expected {len(events)})"
                )
            _check_phase(event.seq, event.kind, event.phase)
            events.append(event)
    return events


# --------------------------------------------------------------------------
# Run directory
# --------------------------------------------------------------------------


@dataclass
class RunManifest:
    run_id: str
    seed: int
    config: dict
    code_version: str = ""
    started_at: str = ""
    finished_at: str = ""
    stage_outcomes: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "config": self.config,
            "code_version": self.code_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "stage_outcomes": self.stage_outcomes,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            run_id=d["run_id"],
            seed=d["seed"],
            config=d["config"],
            code_version=d.get("code_version", ""),
            started_at=d.get("started_at", ""),
            finished_at=d.get("finished_at", ""),
            stage_outcomes=d.get("stage_outcomes", {}),
            schema_version=d["schema_version"],
        )


class RunWriter:
    """Creates and owns a run directory while a simulation is in flight."""

    def __init__(self, run_dir: str | Path, manifest: RunManifest, force: bool = False):
        self.run_dir = Path(run_dir)
        if self.run_dir.exists() and any(self.run_dir.iterdir()):
            if not force:
                raise OutputDirNotEmptyError(
                    f"{self.run_dir} already exists and is not empty (use --force to overwrite)"
                )
            for child in sorted(self.run_dir.rglob("*"), reverse=True):
                if child.is_file() or child.is_symlink():
                    child.unlink()
                else:
                    child.rmdir()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "snapshots").mkdir(exist_ok=True)
        (self.run_dir / "metrics").mkdir(exist_ok=True)
        self.manifest = manifest
        self._write_json("manifest.json", manifest.to_dict())
        self.events = EventLog(self.run_dir / "events.jsonl")

    def _write_json(self, name: str, payload: dict) -> None:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        (self.run_dir / name).write_text(text, encoding="utf-8")

    def write_personas(self, personas_json: str) -> None:
        (self.run_dir / "personas.json").write_text(personas_json, encoding="utf-8")

    def write_snapshot(self, label: str, payload: dict) -> None:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        (self.run_dir / "snapshots" / f"{label}.json").write_text(text, encoding="utf-8")

    @property
    def metrics_dir(self) -> Path:
        return self.run_dir / "metrics"

    def finalize(self, stage_outcomes: dict | None = None, finished_at: str = "") -> None:
        self.events.finalize()
        if stage_outcomes is not None:
            self.manifest.stage_outcomes = stage_outcomes
        self.manifest.finished_at = finished_at
        self._write_json("manifest.json", self.manifest.to_dict())


@dataclass
class LoadedRun:
    run_dir: Path
    manifest: RunManifest
    events: list[Event]
    personas_json: str | None = None


def load_run(run_dir: str | Path) -> LoadedRun:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise StoreError(f"no manifest at {manifest_path}")
    manifest = RunManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
    if manifest.schema_version != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(manifest.schema_version, SCHEMA_VERSION)
    events = read_events(run_dir / "events.jsonl")
    personas_path = run_dir / "personas.json"
    personas_json = personas_path.read_text(encoding="utf-8") if personas_path.exists() else None
    return LoadedRun(run_dir=run_dir, manifest=manifest, events=events, personas_json=personas_json)


# --------------------------------------------------------------------------
# Replay primitives
# --------------------------------------------------------------------------


def extract_backend_calls(events: Iterable[Event]) -> list[RecordedCall]:
    calls: list[RecordedCall] = []
    for e in events:
        if e.kind == "BackendCall":
            calls.append(
                RecordedCall(
                    seq=e.seq,
                    tag=e.payload["request_tag"],
                    request_hash=e.payload["request_hash"],
                    response_text=e.payload["response_text"],
                )
            )
    return calls


def first_divergence(original: list[Event], replayed: list[Event]) -> tuple[int, str] | None:
    """Compare two event streams; return (seq, description) of the first
    mismatch, or None if identical."""
    for a, b in zip(original, replayed):
        if a != b:
            for field_name in ("kind", "round", "phase", "payload"):
                av, bv = getattr(a, field_name), getattr(b, field_name)
                if av != bv:
                    return a.seq, f"{field_name} differs: recorded {av!r}, replayed {bv!r}"
            return a.seq, "event differs"
    if len(original) != len(replayed):
        seq = min(len(original), len(replayed))
        return seq, (
            f"stream length differs: recorded {len(original)} events, "
            f"replayed {len(replayed)}"
        )
    return None
