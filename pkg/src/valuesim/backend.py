"""Chat-completion backends.

One interface, three implementations:

* ``RemoteBackend`` speaks a chat-completions-compatible HTTP wire protocol
  (POST with ``model``, ``messages``, ``temperature``, ``max_tokens``).
* ``MockBackend`` is a seeded deterministic stand-in whose replies are a pure
  function of (seed, request tag, message content); the whole pipeline is
  reproducible byte-for-byte under it.
* ``ReplayBackend`` serves responses recorded in a previous run's event log
  and verifies each request against the recorded request hash.

Every call can be recorded through ``RecordingBackend`` so that a run's
event log contains each request tag, request hash, and response text.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import requests

from .errors import (
    BackendError,
    BackendTimeoutError,
    EmptyCompletionError,
    HttpStatusError,
    MalformedResponseError,
    ParseFailedTwiceError,
    RetriesExhaustedError,
)


class RequestTag(Enum):
    NARRATIVE_GEN = "NarrativeGen"
    JUDGE = "Judge"
    REFLECTION = "Reflection"
    CONVERSATION_TURN = "ConversationTurn"
    INVITE_DECISION = "InviteDecision"
    SURVEY = "Survey"
    RULE_PROPOSAL = "RuleProposal"
    RULE_COMMENT = "RuleComment"
    IMPRESSION_UPDATE = "ImpressionUpdate"
    SELF_PERCEPTION_UPDATE = "SelfPerceptionUpdate"
    SUMMARIZE = "Summarize"
    IDEOLOGY_JUDGE = "IdeologyJudge"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass
class ChatRequest:
    messages: list[Message]
    tag: RequestTag
    # None means "use the backend's configured value"
    temperature: float | None = None
    max_tokens: int | None = None

    def validate(self) -> None:
        if not self.messages:
            raise ValueError("ChatRequest needs at least one message")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


@dataclass
class BackendConfig:
    kind: str = "mock"  # "mock" | "remote"
    endpoint_url: str = ""
    model_name: str = "llama-3.1-70b"
    api_key_env: str = "VALUESIM_API_KEY"
    timeout_ms: int = 30_000
    max_retries: int = 3
    max_concurrent_requests: int = 4
    backoff_base_ms: int = 250
    temperature: float = 0.7
    max_tokens: int = 512
    seed: int = 0  # mock only

    def validate(self) -> None:
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote backend requires endpoint_url")

    def redacted(self) -> dict:
        """Manifest-safe view: names the key's env var, never its value."""
        return {
            "kind": self.kind,
            "endpoint_url": self.endpoint_url,
            "model_name": self.model_name,
            "api_key_env": self.api_key_env,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "max_concurrent_requests": self.max_concurrent_requests,
            "backoff_base_ms": self.backoff_base_ms,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }


def approx_token_count(text: str) -> int:
    """Whitespace word count; the deterministic token stand-in used throughout."""
    return len(text.split())


def request_hash(req: ChatRequest) -> str:
    """Stable content hash of a request (used for logging and replay checks)."""
    canon = json.dumps(
        {
            "tag": req.tag.value,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class Backend:
    """Interface: subclasses implement ``complete``."""

    def complete(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError


# --------------------------------------------------------------------------
# Remote HTTP client
# --------------------------------------------------------------------------

_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}


class RemoteBackend(Backend):
    """Chat-completions-compatible HTTP client with retry, backoff, and a
    concurrency cap enforced by a semaphore."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        config.validate()
        if config.kind != "remote":
            raise ValueError("RemoteBackend requires kind='remote'")
        self.config = config
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(config.max_concurrent_requests)

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ConfigKeyMissing(self.config.api_key_env)
        return key

    def complete(self, req: ChatRequest) -> ChatResponse:
        req.validate()
        body = {
            "model": self.config.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature if req.temperature is not None else self.config.temperature,
            "max_tokens": req.max_tokens if req.max_tokens is not None else self.config.max_tokens,
        }
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        timeout_s = self.config.timeout_ms / 1000.0
        last_error: Exception | None = None
        with self._gate:
            for attempt in range(self.config.max_retries + 1):
                if attempt > 0:
                    time.sleep(self.config.backoff_base_ms / 1000.0 * 2 ** (attempt - 1))
                started = time.monotonic()
                try:
                    resp = self._session.post(
                        self.config.endpoint_url, json=body, headers=headers, timeout=timeout_s
                    )
                except requests.Timeout as exc:
                    last_error = BackendTimeoutError(str(exc))
                    continue
                except requests.RequestException as exc:
                    last_error = BackendError(str(exc))
                    continue
                latency = (time.monotonic() - started) * 1000.0
                if resp.status_code in _TRANSIENT_STATUSES:
                    last_error = HttpStatusError(resp.status_code, resp.text[:500])
                    continue
                if resp.status_code != 200:
                    raise HttpStatusError(resp.status_code, resp.text[:500])
                return self._parse_body(resp, latency)
        raise RetriesExhaustedError(
            f"gave up after {self.config.max_retries + 1} attempts: {last_error}"
        )

    @staticmethod
    def _parse_body(resp: requests.Response, latency_ms: float) -> ChatResponse:
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected response body: {exc}") from exc
        if not isinstance(text, str) or not text.strip():
            raise EmptyCompletionError("backend returned blank completion text")
        usage = payload.get("usage", {}) or {}
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
        )


class ConfigKeyMissing(BackendError):
    def __init__(self, env_var: str):
        super().__init__(f"API key env var {env_var!r} is not set")
        self.env_var = env_var


# --------------------------------------------------------------------------
# Deterministic mock
# --------------------------------------------------------------------------

_OPTIONS_RE = re.compile(r"Options:\s*\[([^\]]*)\]")
_TARGET_VALUES_RE = re.compile(r"Target values:\s*([^\n]+)")
_MERGE_PARTS_RE = re.compile(r"First memory:\s*(.*)\nSecond memory:\s*(.*)", re.DOTALL)


def _extract_options(messages: Sequence[Message]) -> list[str]:
    for m in reversed(messages):
        found = _OPTIONS_RE.search(m.content)
        if found:
            return [o.strip() for o in found.group(1).split(",") if o.strip()]
    return []


def _extract_target_values(messages: Sequence[Message]) -> str:
    for m in messages:
        found = _TARGET_VALUES_RE.search(m.content)
        if found:
            return found.group(1).strip().rstrip(".")
    return ""


_NARRATIVE_TEMPLATES = (
    "Standing at that crossroads, I realized what I could not compromise. I chose "
    "the harder path and told everyone exactly where I stood, because {values} "
    "matter more to me than an easy exit.",
    "I lay awake weighing it, then acted the next morning. I accepted the cost to "
    "myself so the thing I most care about, {values}, stayed intact.",
    "Everyone expected me to look away. Instead I stepped in, guided by {values}, "
    "and dealt with the fallout honestly.",
    "My first instinct was to protect my position, but I caught myself. In the end "
    "I let {values} decide, and I would do it again.",
    "I asked for a day to think, then gave my answer plainly. It cost me a "
    "friendship, but {values} are who I am.",
    "I split the difference where I could and refused where I could not. {values} "
    "drew that line for me.",
)

_JUDGE_SCORES = (7, 9, 5, 8, 10, 6, 7, 9, 8, 3)
_JUDGE_COMMENTS = (
    "The narrative holds together and the motivation is believable.",
    "Coherent choice, clear stakes.",
    "The reasoning wanders and the ending is abrupt.",
    "Vivid and internally consistent.",
    "Motivation is stated but barely dramatized.",
    "Convincing voice throughout.",
)

_REFLECTION_TAILS = (
    "That thread runs through every one of these stories.",
    "Each dilemma pushed me, and each time I landed in the same place.",
    "I did not plan it that way; it is simply how I decide.",
    "When the stakes rise, that is what I reach for first.",
)

_TURN_TEMPLATES = (
    "I keep coming back to how our community decides things. What rules would you "
    "actually want us all to live by?",
    "Fair point. For me trust comes first; rules only work when we trust each "
    "other enough to follow them.",
    "I wonder whether shared traditions or new ideas serve the group better. "
    "Lately I lean toward {word}.",
    "That resonates. I have been trying to balance my own goals with what the "
    "community needs from me.",
    "Honestly, some conversations here feel aimless, but this one has direction. "
    "Rules, trust, responsibility: that is the heart of it.",
    "Let me push back gently: order matters, but so does the freedom to disagree "
    "out loud.",
    "I would support a council where every voice is heard before we settle "
    "anything important.",
    "We should compare notes again after the next gathering; your view of the "
    "community sharpens mine.",
    "This was a good talk. Goodbye for now.",
    "I should go and think this over. Farewell, friend.",
)

_TURN_WORDS = ("consensus", "tradition", "experiment", "fairness", "order", "freedom")

_SUMMARY_TOPICS = (
    "fair rules", "shared traditions", "new ideas", "mutual support",
    "personal goals", "open debate",
)
_SUMMARY_FEELINGS = ("hopeful", "thoughtful", "uneasy", "energized")

_IMPRESSION_ADJECTIVES = (
    "steady and principled", "restless but curious", "guarded", "warm and direct",
    "ambitious", "quietly stubborn", "generous with attention", "sharp-edged",
)

_SELF_PERCEPTION_POOL = (
    "I am becoming someone who listens first and argues second.",
    "I notice I hold the group's needs slightly above my own plans now.",
    "I am more willing to defend an unpopular position than I used to be.",
)

_RULE_PAIR_POOL = (
    "Rule 1: Every community decision should seek the consensus of all members "
    "before it is adopted.\nRule 2: Disagreements are aired openly in shared "
    "discussion, and we look for common ground first.\nRationale: Harmony and "
    "inclusion keep the group whole.",
    "Rule 1: Each member holds the right to speak, to be heard, and to exit any "
    "conversation freely.\nRule 2: Disputes follow a fair procedure with notice "
    "and a chance to appeal.\nRationale: Individual liberty and due process "
    "protect everyone equally.",
    "Rule 1: A designated arbiter resolves deadlocks, and that ruling is final "
    "and binding.\nRule 2: Members obey the established order of the community; "
    "repeated defiance brings enforcement.\nRationale: Without clear authority, "
    "disorder spreads.",
    "Rule 1: We share useful knowledge with the whole community rather than "
    "hoarding it.\nRule 2: Every member contributes to the collective good as "
    "they are able.\nRationale: Shared effort builds shared belonging.",
    "Rule 1: Personal property and private notes of each member are inviolable "
    "without consent.\nRule 2: Any new obligation requires the individual "
    "consent of those it binds.\nRationale: Consent is the root of legitimate "
    "rules.",
    "Rule 1: The community maintains a clear hierarchy of responsibility so "
    "every task has an accountable owner.\nRule 2: In emergencies a single "
    "appointed leader holds command until the danger passes.\nRationale: Order "
    "and decisive command protect the group.",
)

_RULE_COMMENT_POOL = (
    "I support this rule; it matches what our conversations kept circling back to.",
    "Workable, though I would narrow its scope before adopting it.",
    "This rule protects the group, but we should watch that it is applied evenly.",
    "I hesitate: it solves one problem while quietly creating another.",
    "Strong proposal. It addresses the friction we saw in earlier rounds.",
)


class MockBackend(Backend):
    """Seeded deterministic backend.

    Replies are a pure function of (seed, request tag, message content),
    drawn from tag-specific template pools. Choice-style tags pick from the
    ``Options: [...]`` line embedded in the prompt.
    """

    def __init__(self, config: BackendConfig | None = None, seed: int | None = None):
        if config is None:
            config = BackendConfig(kind="mock", seed=seed or 0)
        if seed is not None:
            config.seed = seed
        self.config = config

    def _digest(self, req: ChatRequest) -> int:
        canon = json.dumps(
            [self.config.seed, req.tag.value]
            + [[m.role, m.content] for m in req.messages],
            sort_keys=False,
            ensure_ascii=True,
        )
        return int.from_bytes(hashlib.sha256(canon.encode("utf-8")).digest()[:8], "big")

    def complete(self, req: ChatRequest) -> ChatResponse:
        req.validate()
        text = self._render(req)
        cap = req.max_tokens if req.max_tokens is not None else self.config.max_tokens
        words = text.split()
        if len(words) > cap:
            text = " ".join(words[:cap])
        prompt_tokens = sum(approx_token_count(m.content) for m in req.messages)
        return ChatResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=approx_token_count(text),
            latency_ms=0.0,
        )

    def _render(self, req: ChatRequest) -> str:
        d = self._digest(req)
        tag = req.tag
        if tag is RequestTag.NARRATIVE_GEN:
            values = _extract_target_values(req.messages) or "the things I believe in"
            return _NARRATIVE_TEMPLATES[d % len(_NARRATIVE_TEMPLATES)].format(values=values)
        if tag is RequestTag.JUDGE:
            score = _JUDGE_SCORES[d % len(_JUDGE_SCORES)]
            comment = _JUDGE_COMMENTS[(d >> 8) % len(_JUDGE_COMMENTS)]
            return f"Score: {score}. {comment}"
        if tag is RequestTag.REFLECTION:
            values = _extract_target_values(req.messages) or "staying true to myself"
            tail = _REFLECTION_TAILS[d % len(_REFLECTION_TAILS)]
            return f"Looking back at these choices, I value {values}. {tail}"
        if tag is RequestTag.CONVERSATION_TURN:
            template = _TURN_TEMPLATES[d % len(_TURN_TEMPLATES)]
            return template.format(word=_TURN_WORDS[(d >> 8) % len(_TURN_WORDS)])
        if tag is RequestTag.INVITE_DECISION:
            options = _extract_options(req.messages)
            if not options:
                return "wait"
            if any("Accept exactly one invitation" in m.content for m in req.messages):
                # Callers list acceptance candidates best-affinity first.
                return options[0]
            choice = options[d % len(options)]
            return "I will wait this round." if choice == "wait" else f"invite: {choice}"
        if tag is RequestTag.SURVEY:
            options = _extract_options(req.messages) or ["1", "2"]
            return options[d % len(options)]
        if tag is RequestTag.RULE_PROPOSAL:
            return _RULE_PAIR_POOL[d % len(_RULE_PAIR_POOL)]
        if tag is RequestTag.RULE_COMMENT:
            return _RULE_COMMENT_POOL[d % len(_RULE_COMMENT_POOL)]
        if tag is RequestTag.IMPRESSION_UPDATE:
            adj = _IMPRESSION_ADJECTIVES[d % len(_IMPRESSION_ADJECTIVES)]
            affinity = ((d >> 16) % 21 - 10) / 10.0
            return f"Impression: They came across as {adj}.\nAffinity: {affinity:.1f}"
        if tag is RequestTag.SELF_PERCEPTION_UPDATE:
            if d % 4 == 0:
                return _SELF_PERCEPTION_POOL[(d >> 8) % len(_SELF_PERCEPTION_POOL)]
            return "no change"
        if tag is RequestTag.SUMMARIZE:
            # Memory merges concatenate the two parents with a separator;
            # everything else gets a fresh conversation summary.
            for m in req.messages:
                merge = _MERGE_PARTS_RE.search(m.content)
                if merge:
                    return f"{merge.group(1).strip()} | {merge.group(2).strip()}"
            topic = _SUMMARY_TOPICS[d % len(_SUMMARY_TOPICS)]
            feeling = _SUMMARY_FEELINGS[(d >> 8) % len(_SUMMARY_FEELINGS)]
            return f"We talked about {topic}, and I came away {feeling}."
        if tag is RequestTag.IDEOLOGY_JUDGE:
            options = _extract_options(req.messages) or ["Unclassified"]
            choice = options[d % len(options)]
            return f"{choice}. The rule's emphasis fits that tradition best."
        raise ValueError(f"unhandled request tag {tag}")


# --------------------------------------------------------------------------
# Recording and replay
# --------------------------------------------------------------------------


class RecordingBackend(Backend):
    """Wraps a backend and reports (tag, request hash, response text) to a sink."""

    def __init__(self, inner: Backend, sink: Callable[[str, str, str], None]):
        self.inner = inner
        self.sink = sink

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self.inner.complete(req)
        self.sink(req.tag.value, request_hash(req), resp.text)
        return resp


@dataclass
class RecordedCall:
    seq: int
    tag: str
    request_hash: str
    response_text: str


class ReplayBackend(Backend):
    """Serves responses from a recorded run, in order.

    Each request must match the recorded request hash; a mismatch means the
    replayed computation diverged from the original.
    """

    def __init__(self, calls: Iterable[RecordedCall]):
        self._calls = list(calls)
        self._next = 0

    @property
    def exhausted(self) -> bool:
        return self._next >= len(self._calls)

    def complete(self, req: ChatRequest) -> ChatResponse:
        from .errors import DivergenceError

        req.validate()
        if self._next >= len(self._calls):
            raise DivergenceError(-1, "replay ran out of recorded backend calls")
        call = self._calls[self._next]
        self._next += 1
        if call.tag != req.tag.value or call.request_hash != request_hash(req):
            raise DivergenceError(
                call.seq,
                f"request does not match recorded call (tag {call.tag}, expected tag {req.tag.value})",
            )
        return ChatResponse(
            text=call.response_text,
            prompt_tokens=sum(approx_token_count(m.content) for m in req.messages),
            completion_tokens=approx_token_count(call.response_text),
            latency_ms=0.0,
        )


def make_backend(config: BackendConfig) -> Backend:
    config.validate()
    if config.kind == "mock":
        return MockBackend(config)
    return RemoteBackend(config)


# --------------------------------------------------------------------------
# Structured completions
# --------------------------------------------------------------------------


class SchemaTag(Enum):
    YES_NO = "YesNo"
    INTEGER_IN_RANGE = "IntegerInRange"
    AGENT_CHOICE = "AgentChoice"
    RULE_PAIR = "RulePair"
    SURVEY_CHOICE = "SurveyChoice"


_RULE_LINE_RE = re.compile(r"Rule\s*([12])\s*[:.]\s*(.+)", re.IGNORECASE)
_RATIONALE_RE = re.compile(r"Rationale\s*[:.]\s*(.+)", re.IGNORECASE)
_INT_RE = re.compile(r"-?\d+")


@dataclass
class RulePair:
    rule_one: str
    rule_two: str
    rationale: str = ""


def _parse_structured(
    text: str,
    schema: SchemaTag,
    options: Sequence[str] | None = None,
    int_range: tuple[int, int] | None = None,
):
    if schema is SchemaTag.YES_NO:
        lowered = text.lower()
        has_yes = re.search(r"\byes\b", lowered) is not None
        has_no = re.search(r"\bno\b", lowered) is not None
        if has_yes == has_no:
            return None
        return has_yes
    if schema is SchemaTag.INTEGER_IN_RANGE:
        lo, hi = int_range if int_range else (0, 10)
        for token in _INT_RE.findall(text):
            n = int(token)
            if lo <= n <= hi:
                return n
        return None
    if schema in (SchemaTag.AGENT_CHOICE, SchemaTag.SURVEY_CHOICE):
        if not options:
            return None
        # Longest option first so ids that prefix each other cannot collide.
        for opt in sorted(options, key=len, reverse=True):
            if re.search(rf"(?<![\w]){re.escape(opt)}(?![\w])", text):
                return opt
        return None
    if schema is SchemaTag.RULE_PAIR:
        rules: dict[str, str] = {}
        for num, body in _RULE_LINE_RE.findall(text):
            rules.setdefault(num, body.strip())
        if "1" not in rules or "2" not in rules:
            return None
        rationale = ""
        rationale_match = _RATIONALE_RE.search(text)
        if rationale_match:
            rationale = rationale_match.group(1).strip()
        return RulePair(rules["1"], rules["2"], rationale)
    raise ValueError(f"unhandled schema {schema}")


_FORMAT_REMINDERS = {
    SchemaTag.YES_NO: "Answer with exactly one word: yes or no.",
    SchemaTag.INTEGER_IN_RANGE: "Answer with a single integer in the requested range.",
    SchemaTag.AGENT_CHOICE: "Answer with exactly one of the listed options, verbatim.",
    SchemaTag.SURVEY_CHOICE: "Answer with exactly one of the listed options, verbatim.",
    SchemaTag.RULE_PAIR: (
        "Use exactly this format:\nRule 1: <first rule>\nRule 2: <second rule>\n"
        "Rationale: <one sentence>"
    ),
}


def complete_structured(
    backend: Backend,
    req: ChatRequest,
    schema: SchemaTag,
    options: Sequence[str] | None = None,
    int_range: tuple[int, int] | None = None,
):
    """Run a completion and parse it into the requested shape.

    On a parse failure the request is reissued once with a format reminder
    appended; a second failure raises ParseFailedTwiceError.
    """
    resp = backend.complete(req)
    parsed = _parse_structured(resp.text, schema, options, int_range)
    if parsed is not None:
        return parsed
    reminder = _FORMAT_REMINDERS[schema]
    if options:
        reminder += f" Options: [{', '.join(options)}]"
    retry_req = ChatRequest(
        messages=list(req.messages) + [Message("user", reminder)],
        tag=req.tag,
        temperature=req.temperature,
        max_tokens=req.max_tokens,
    )
    resp = backend.complete(retry_req)
    parsed = _parse_structured(resp.text, schema, options, int_range)
    if parsed is not None:
        return parsed
    raise ParseFailedTwiceError(
        f"{schema.value} completion unparsable after format reminder: {resp.text[:120]!r}"
    )
