"""Model gateway: three role-tagged prompt builders and two backends.

The knowledge, code, and reflection roles share one completion interface.
The live backend speaks the common chat-completion HTTP protocol (POST to
a configurable path, system+user message pair, bearer credential from the
KP_LLM_API_KEY environment variable). The scripted backend replays canned
responses per role, which makes whole simulations deterministic in tests.
"""

import json
import os
import time
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from os import PathLike
from typing import Callable

import requests

from .errors import InvalidConfig, ProtocolError, ScriptExhausted, TransportError
from .memory import MemoryEntry, Overview
from .plan import GRAMMAR

API_KEY_ENV = "KP_LLM_API_KEY"
DEFAULT_COMPLETIONS_PATH = "/v1/chat/completions"
NO_EXAMPLES_SENTINEL = "No prior examples available."


class Role(str, Enum):
    KNOWLEDGE = "knowledge"
    CODE = "code"
    REFLECTION = "reflection"


#: Code generation wants near-determinism; analysis and reflection benefit
#: from some sampling variety.
DEFAULT_TEMPERATURES = {
    Role.KNOWLEDGE: 0.7,
    Role.CODE: 0.2,
    Role.REFLECTION: 0.7,
}

DEFAULT_MAX_TOKENS = {
    Role.KNOWLEDGE: 512,
    Role.CODE: 256,
    Role.REFLECTION: 256,
}


@dataclass(frozen=True)
class ChatRequest:
    role: Role
    system_prompt: str
    user_prompt: str
    temperature: float
    max_tokens: int

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend: str  # "live" or "scripted"
    latency: float


# --- prompt builders --------------------------------------------------------

_KNOWLEDGE_SYSTEM = (
    "You are a sponsored search advertising analyst. You study keyword "
    "performance tables and recommend which keywords a campaign should stop "
    "bidding on."
)

_CODE_SYSTEM = (
    "You translate advertising analysis into programs in a small keyword "
    "pruning plan language. You output program text and nothing else."
)

_REFLECTION_SYSTEM = (
    "You write short post-mortems that connect an advertising action to the "
    "reward observed the next day."
)


def _render_example(index: int, entry: MemoryEntry) -> str:
    return (
        f"Example {index} (reward {entry.reward}):\n"
        f"Overview:\n{entry.overview.text}\n"
        f"Plan:\n{entry.plan_text}\n"
        f"Reflection:\n{entry.reflection}"
    )


def build_knowledge_prompt(
    overview: Overview, examples: list[MemoryEntry], toolset_doc: str
) -> ChatRequest:
    """Fixed section order: task framing, tool documentation, example blocks
    oldest-to-newest, current overview, output instructions."""
    ordered = sorted(examples, key=lambda e: e.inserted_at)
    if ordered:
        example_text = "\n\n".join(
            _render_example(i, entry) for i, entry in enumerate(ordered, start=1)
        )
    else:
        example_text = NO_EXAMPLES_SENTINEL
    user = (
        "Task: review the campaign overview below and write a short analysis "
        "of which keywords look weak and which pruning tactic fits. Your "
        "analysis will drive a pruning program written in the plan language "
        "documented next.\n\n"
        f"Tool documentation:\n{toolset_doc}\n\n"
        f"Prior examples:\n{example_text}\n\n"
        f"Current overview:\n{overview.text}\n\n"
        "Output instructions: respond with plain-text reasoning only. Name "
        "the metrics worth acting on and the kind of pruning (filter, rank, "
        "or score) you recommend."
    )
    return ChatRequest(
        role=Role.KNOWLEDGE,
        system_prompt=_KNOWLEDGE_SYSTEM,
        user_prompt=user,
        temperature=DEFAULT_TEMPERATURES[Role.KNOWLEDGE],
        max_tokens=DEFAULT_MAX_TOKENS[Role.KNOWLEDGE],
    )


def build_code_prompt(knowledge: str, grammar: str = GRAMMAR) -> ChatRequest:
    user = (
        "Write a pruning plan that acts on the analysis below.\n\n"
        f"Plan language grammar:\n{grammar}\n\n"
        f"Analysis:\n{knowledge}\n\n"
        "Output instructions: output the plan text alone, one statement per "
        "line, with no commentary and no code fences."
    )
    return ChatRequest(
        role=Role.CODE,
        system_prompt=_CODE_SYSTEM,
        user_prompt=user,
        temperature=DEFAULT_TEMPERATURES[Role.CODE],
        max_tokens=DEFAULT_MAX_TOKENS[Role.CODE],
    )


def build_repair_prompt(knowledge: str, failed_plan: str, error_text: str) -> ChatRequest:
    """The repair prompt embeds the failed plan verbatim plus the rendered
    error (which itself carries the grammar reminder)."""
    user = (
        "The previous pruning plan failed to execute. Produce a corrected "
        "plan.\n\n"
        f"Analysis:\n{knowledge}\n\n"
        f"Failed plan:\n{failed_plan}\n\n"
        f"Error:\n{error_text}\n\n"
        "Output instructions: output the corrected plan text alone, one "
        "statement per line, with no commentary and no code fences."
    )
    return ChatRequest(
        role=Role.CODE,
        system_prompt=_CODE_SYSTEM,
        user_prompt=user,
        temperature=DEFAULT_TEMPERATURES[Role.CODE],
        max_tokens=DEFAULT_MAX_TOKENS[Role.CODE],
    )


def build_reflection_prompt(overview: Overview, plan_text: str, reward: Decimal) -> ChatRequest:
    user = (
        "Campaign overview:\n"
        f"{overview.text}\n\n"
        f"Executed plan:\n{plan_text}\n\n"
        f"Observed reward: {reward}\n\n"
        "Output instructions: in 120 words or fewer, explain what the plan "
        "did and whether the reward justifies repeating or adjusting it on "
        "similar campaigns."
    )
    return ChatRequest(
        role=Role.REFLECTION,
        system_prompt=_REFLECTION_SYSTEM,
        user_prompt=user,
        temperature=DEFAULT_TEMPERATURES[Role.REFLECTION],
        max_tokens=DEFAULT_MAX_TOKENS[Role.REFLECTION],
    )


# --- backends ----------------------------------------------------------------


class ScriptedBackend:
    """Replays canned responses per role, consumed in order.

    With repeat=False each response is consumed exactly once and running
    out raises ScriptExhausted; with repeat=True the per-role sequences
    cycle forever. Every request handled is recorded for inspection.
    """

    # cursor state makes concurrent completion order-dependent
    concurrency_safe = False

    def __init__(self, responses: dict[Role, list[str]] | None = None, repeat: bool = False):
        self._responses = {role: list((responses or {}).get(role, ())) for role in Role}
        self._cursors = {role: 0 for role in Role}
        self.repeat = repeat
        self.requests: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path: str | PathLike, repeat: bool = False) -> "ScriptedBackend":
        """Load newline-delimited JSON records {role_tag, text}."""
        responses: dict[Role, list[str]] = {role: [] for role in Role}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    role = Role(record["role_tag"])
                    text = record["text"]
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise InvalidConfig(f"{path}: line {line_no}: bad script record: {exc}") from exc
                if not isinstance(text, str):
                    raise InvalidConfig(f"{path}: line {line_no}: text must be a string")
                responses[role].append(text)
        return cls(responses, repeat=repeat)

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        queue = self._responses[request.role]
        cursor = self._cursors[request.role]
        if cursor >= len(queue):
            if not (self.repeat and queue):
                raise ScriptExhausted(request.role.value)
            cursor = 0
        self._cursors[request.role] = cursor + 1
        return ChatResponse(text=queue[cursor], backend="scripted", latency=0.0)

    def remaining(self, role: Role) -> int:
        return max(0, len(self._responses[role]) - self._cursors[role])


_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class LiveBackend:
    """HTTP chat-completion client with bounded retries.

    Transient failures (connection errors, timeouts, retryable statuses)
    back off 0.5s/1s/2s before giving up with TransportError. A 2xx answer
    that does not carry choices[0].message.content is a ProtocolError.
    """

    concurrency_safe = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        timeout_secs: float = 30.0,
        max_retries: int = 3,
        path: str = DEFAULT_COMPLETIONS_PATH,
        api_key: str | None = None,
        session: requests.Session | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise InvalidConfig("llm.endpoint is required for the live backend")
        self.url = endpoint.rstrip("/") + path
        self.model = model
        self.timeout_secs = timeout_secs
        self.max_retries = max_retries
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._session = session or requests.Session()
        self._sleep = sleeper

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        started = time.monotonic()
        last_failure = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = self._session.post(
                    self.url, json=body, headers=headers, timeout=self.timeout_secs
                )
            except requests.RequestException as exc:
                last_failure = f"transport failure: {exc}"
                continue
            if response.status_code in _RETRYABLE_STATUSES:
                last_failure = f"retryable status {response.status_code}"
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"completion endpoint answered {response.status_code}: "
                    f"{response.text[:200]}"
                )
            return ChatResponse(
                text=self._extract_text(response),
                backend="live",
                latency=time.monotonic() - started,
            )
        raise TransportError(
            f"completion endpoint unreachable after {self.max_retries} retries "
            f"({last_failure})"
        )

    @staticmethod
    def _extract_text(response) -> str:
        try:
            data = response.json()
        except ValueError as exc:
            raise ProtocolError(f"completion body is not JSON: {exc}") from exc
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(
                "completion body lacks choices[0].message.content"
            ) from None
        if not isinstance(text, str):
            raise ProtocolError("completion content is not a string")
        return text


def complete(request: ChatRequest, backend) -> ChatResponse:
    """Dispatch a request to whichever backend is configured."""
    return backend.complete(request)
