"""Exception hierarchy shared across the simulator."""

from __future__ import annotations


class ValuesimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(ValuesimError):
    """Invalid or inconsistent run configuration."""


# --- corpus / persona ---------------------------------------------------


class CorpusError(ValuesimError):
    """Problems loading or validating the dilemma corpus."""


class DuplicateIdError(CorpusError):
    def __init__(self, dilemma_id: str):
        super().__init__(f"duplicate dilemma id: {dilemma_id!r}")
        self.dilemma_id = dilemma_id


class UnknownValueNameError(CorpusError):
    def __init__(self, name: str):
        super().__init__(f"unknown value name: {name!r}")
        self.name = name


class UncoveredValueError(CorpusError):
    def __init__(self, missing: list[str]):
        super().__init__(f"values with no dilemma coverage: {', '.join(missing)}")
        self.missing = missing


class InfeasibleSpecError(ValuesimError):
    """The population spec cannot be satisfied under the adjacency rules."""


class ElicitationError(ValuesimError):
    """Persona elicitation could not produce any kept narrative."""


# --- backend ------------------------------------------------------------


class BackendError(ValuesimError):
    """Base class for chat-completion backend failures."""


class BackendTimeoutError(BackendError):
    pass


class HttpStatusError(BackendError):
    def __init__(self, status_code: int, body: str = ""):
        super().__init__(f"backend returned HTTP {status_code}")
        self.status_code = status_code
        self.body = body


class RetriesExhaustedError(BackendError):
    pass


class MalformedResponseError(BackendError):
    """Response body did not match the chat-completions wire schema."""


class EmptyCompletionError(BackendError):
    """Backend returned blank completion text."""


class UnparsableScoreError(ValuesimError):
    """Judge reply contained no usable in-range score after one retry."""


class ParseFailedTwiceError(ValuesimError):
    """Structured completion failed to parse even after a format reminder."""


# --- store / replay -----------------------------------------------------


class StoreError(ValuesimError):
    pass


class RunClosedError(StoreError):
    """Append attempted after the event log was finalized."""


class OutputDirNotEmptyError(StoreError):
    """Refusing to clobber an existing run directory without force."""


class SchemaVersionMismatchError(StoreError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"event schema version {found} (expected {expected})")
        self.found = found
        self.expected = expected


class CorruptLineError(StoreError):
    def __init__(self, seq: int, reason: str):
        super().__init__(f"corrupt event record at seq {seq}: {reason}")
        self.seq = seq
        self.reason = reason


class MissingEventsError(StoreError):
    """Run directory has no event log."""


class IllegalPhaseError(StoreError):
    def __init__(self, seq: int, kind: str, phase: str):
        super().__init__(f"event {kind} at seq {seq} is illegal in phase {phase!r}")
        self.seq = seq


class DivergenceError(ValuesimError):
    """Replay diverged from the recorded run."""

    def __init__(self, seq: int, detail: str = ""):
        msg = f"replay diverged at seq {seq}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.seq = seq


# --- analysis -----------------------------------------------------------


class AnalysisError(ValuesimError):
    pass


class MissingPopulationError(AnalysisError):
    """Event log has no persona records to build graph nodes from."""


class DegenerateLabelsError(AnalysisError):
    """Assortativity is undefined when every node carries the same label."""


class NoEligibleConversationsError(AnalysisError):
    """No conversation with at least two turns to measure continuity on."""


class TooFewSurveysError(AnalysisError):
    """Drift needs at least two surveys for the agent."""


class SurveyEmptyError(ValuesimError):
    """Every survey pair was skipped; no scores can be computed."""
