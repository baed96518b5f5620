"""Provider-agnostic chat completion gateway.

One ``Gateway`` fronts several providers (OpenAI-compatible, Anthropic,
Google, plus a scripted mock for tests). Conversation history is stored in a
model-agnostic form and rendered into each provider's wire format only when a
request is built, so the active model can change mid-conversation.
"""

from __future__ import annotations

import json
import logging
import os
import string
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
ANTHROPIC_VERSION = "2023-06-01"
ANTHROPIC_MAX_TOKENS = 1024

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"


class GatewayError(Exception):
    pass


class UnknownProvider(GatewayError):
    pass


class MalformedModelRef(GatewayError):
    pass


class ProviderHttpError(GatewayError):
    def __init__(self, status: int, detail: str = ""):
        self.status = status
        super().__init__(f"provider returned HTTP {status}" + (f": {detail}" if detail else ""))


class ProviderUnavailable(GatewayError):
    pass


class CompletionTimeout(GatewayError):
    pass


class EmptyCompletion(GatewayError):
    pass


class MalformedProviderResponse(GatewayError):
    pass


class EmptyContext(GatewayError):
    pass


class MockScriptMiss(GatewayError):
    pass


# ---------------------------------------------------------------------------
# conversation model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelRef:
    provider: str
    model: str

    @classmethod
    def parse(cls, raw: str) -> "ModelRef":
        """Parse "provider:model"; the provider part is lowercased."""
        if not isinstance(raw, str) or ":" not in raw:
            raise MalformedModelRef(f"expected provider:model, got {raw!r}")
        provider, _, model = raw.partition(":")
        provider = provider.strip().lower()
        model = model.strip()
        if not provider or not model:
            raise MalformedModelRef(f"expected provider:model, got {raw!r}")
        return cls(provider, model)

    def canonical(self) -> str:
        return f"{self.provider}:{self.model}"


@dataclass(frozen=True)
class ChatTurn:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT):
            raise ValueError(f"bad role {self.role!r}")
        if self.role != ROLE_SYSTEM and not self.content:
            raise ValueError(f"{self.role} turn must have content")


@dataclass
class Conversation:
    """Ordered model-agnostic history; switching models keeps the turns."""

    active_model: ModelRef
    turns: list[ChatTurn] = field(default_factory=list)

    def append_turn(self, turn: ChatTurn) -> None:
        non_system = [t for t in self.turns if t.role != ROLE_SYSTEM]
        if turn.role == ROLE_SYSTEM:
            if self.turns:
                raise ValueError("system turn only allowed at the head")
        elif turn.role == ROLE_USER:
            if non_system and non_system[-1].role == ROLE_USER:
                raise ValueError("user turns must alternate with assistant turns")
        else:
            if not non_system or non_system[-1].role != ROLE_USER:
                raise ValueError("assistant turn requires a preceding user turn")
        self.turns.append(turn)

    def append_exchange(self, question: str, answer: str) -> None:
        self.append_turn(ChatTurn(ROLE_USER, question))
        self.append_turn(ChatTurn(ROLE_ASSISTANT, answer))

    def clear_history(self) -> None:
        self.turns.clear()

    def switch_model(self, model: ModelRef) -> None:
        self.active_model = model


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[ChatTurn, ...]
    kind: str  # "rag-answer" | "graph-extract"


def _load_template(name: str) -> string.Template:
    text = resources.files("ctirag.prompts").joinpath(name).read_text(encoding="utf-8")
    return string.Template(text)


def build_rag_prompt(question: str, context: str, history: Conversation | None = None) -> PromptBundle:
    """System instructions, prior history in order, then one user turn that
    embeds the context and the question verbatim."""
    if not question:
        raise ValueError("question must be non-empty")
    system = ChatTurn(ROLE_SYSTEM, _load_template("rag_system.txt").substitute().strip())
    final = ChatTurn(
        ROLE_USER,
        _load_template("rag_user.txt").substitute(context=context, question=question).strip(),
    )
    prior = tuple(t for t in history.turns if t.role != ROLE_SYSTEM) if history else ()
    return PromptBundle(messages=(system, *prior, final), kind="rag-answer")


def build_graph_prompt(context: str) -> PromptBundle:
    """Single-call extraction prompt over the full retrieved context."""
    if not context:
        raise EmptyContext("graph extraction needs a non-empty context")
    user = ChatTurn(ROLE_USER, _load_template("graph_extract.txt").substitute(context=context).strip())
    return PromptBundle(messages=(user,), kind="graph-extract")


# ---------------------------------------------------------------------------
# provider adapters: ChatTurn list -> wire request, wire response -> text
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProviderSpec:
    name: str
    adapter: str  # "openai-chat" | "anthropic-messages" | "google-generate" | "mock"
    base_url: str = ""
    api_key_env: str | None = None


def default_registry() -> dict[str, ProviderSpec]:
    return {
        "openai": ProviderSpec("openai", "openai-chat", "https://api.openai.com/v1", "OPENAI_API_KEY"),
        "groq": ProviderSpec("groq", "openai-chat", "https://api.groq.com/openai/v1", "GROQ_API_KEY"),
        "anthropic": ProviderSpec(
            "anthropic", "anthropic-messages", "https://api.anthropic.com", "ANTHROPIC_API_KEY"
        ),
        "google": ProviderSpec(
            "google", "google-generate", "https://generativelanguage.googleapis.com", "GOOGLE_API_KEY"
        ),
    }


def _api_key(spec: ProviderSpec) -> str:
    return os.environ.get(spec.api_key_env, "") if spec.api_key_env else ""


def _openai_request(spec: ProviderSpec, model: ModelRef, messages):
    url = spec.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    key = _api_key(spec)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": model.model,
        "messages": [{"role": t.role, "content": t.content} for t in messages],
    }
    return url, headers, body


def _openai_parse(payload) -> str:
    try:
        return payload["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedProviderResponse(f"unexpected completion payload: {exc}") from exc


def _anthropic_request(spec: ProviderSpec, model: ModelRef, messages):
    url = spec.base_url.rstrip("/") + "/v1/messages"
    headers = {
        "Content-Type": "application/json",
        "anthropic-version": ANTHROPIC_VERSION,
    }
    key = _api_key(spec)
    if key:
        headers["x-api-key"] = key
    system = "\n\n".join(t.content for t in messages if t.role == ROLE_SYSTEM)
    body = {
        "model": model.model,
        "max_tokens": ANTHROPIC_MAX_TOKENS,
        "messages": [
            {"role": t.role, "content": t.content} for t in messages if t.role != ROLE_SYSTEM
        ],
    }
    if system:
        body["system"] = system
    return url, headers, body


def _anthropic_parse(payload) -> str:
    try:
        blocks = payload["content"]
        return "".join(b.get("text", "") for b in blocks if b.get("type") == "text")
    except (KeyError, TypeError) as exc:
        raise MalformedProviderResponse(f"unexpected completion payload: {exc}") from exc


def _google_request(spec: ProviderSpec, model: ModelRef, messages):
    url = spec.base_url.rstrip("/") + f"/v1beta/models/{model.model}:generateContent"
    headers = {"Content-Type": "application/json"}
    key = _api_key(spec)
    if key:
        headers["x-goog-api-key"] = key
    system = "\n\n".join(t.content for t in messages if t.role == ROLE_SYSTEM)
    contents = [
        {"role": "model" if t.role == ROLE_ASSISTANT else "user", "parts": [{"text": t.content}]}
        for t in messages
        if t.role != ROLE_SYSTEM
    ]
    body: dict = {"contents": contents}
    if system:
        body["systemInstruction"] = {"parts": [{"text": system}]}
    return url, headers, body


def _google_parse(payload) -> str:
    try:
        parts = payload["candidates"][0]["content"]["parts"]
        return "".join(p.get("text", "") for p in parts)
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedProviderResponse(f"unexpected completion payload: {exc}") from exc


ADAPTERS = {
    "openai-chat": (_openai_request, _openai_parse),
    "anthropic-messages": (_anthropic_request, _anthropic_parse),
    "google-generate": (_google_request, _google_parse),
}


def build_provider_request(spec: ProviderSpec, model: ModelRef, messages) -> tuple[str, dict, dict]:
    """Render messages into the provider's wire format without sending."""
    try:
        build, _ = ADAPTERS[spec.adapter]
    except KeyError:
        raise UnknownProvider(f"no adapter {spec.adapter!r}") from None
    return build(spec, model, tuple(messages))


# ---------------------------------------------------------------------------
# scripted mock provider
# ---------------------------------------------------------------------------


@dataclass
class MockEntry:
    match: str
    responses: list[str]
    model: str | None = None
    cursor: int = 0


class MockProvider:
    """Deterministic scripted provider for tests and offline runs.

    The script is a list of ``{"match", "response"|"responses", "model"?}``
    entries. The first entry whose ``match`` is a substring of the last user
    turn (and whose optional ``model`` equals the requested model) answers;
    multi-response entries are consumed in order, repeating the last one.
    ``{{last_user}}`` in a response echoes the last user turn.
    """

    def __init__(self, script: list[dict]):
        self._entries = []
        for raw in script:
            responses = raw.get("responses")
            if responses is None:
                responses = [raw["response"]]
            self._entries.append(
                MockEntry(match=raw.get("match", ""), responses=list(responses), model=raw.get("model"))
            )
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, model: ModelRef, messages) -> str:
        last_user = next((t.content for t in reversed(tuple(messages)) if t.role == ROLE_USER), "")
        with self._lock:
            for entry in self._entries:
                if entry.model is not None and entry.model != model.model:
                    continue
                if entry.match in last_user:
                    response = entry.responses[min(entry.cursor, len(entry.responses) - 1)]
                    entry.cursor += 1
                    return response.replace("{{last_user}}", last_user)
        raise MockScriptMiss(f"no script entry matches last user turn {last_user[:80]!r}")


# ---------------------------------------------------------------------------
# gateway
# ---------------------------------------------------------------------------


def _requests_transport(url: str, headers: dict, body: dict, timeout: float):
    response = requests.post(url, headers=headers, json=body, timeout=timeout)
    try:
        payload = response.json()
    except ValueError:
        payload = None
    return response.status_code, payload


class Gateway:
    """Thread-safe completion front end over the provider registry."""

    def __init__(
        self,
        registry: dict[str, ProviderSpec] | None = None,
        transport=None,
        timeout: float = DEFAULT_TIMEOUT,
        mock_script: str | Path | list | None = None,
    ):
        self._registry = dict(registry) if registry is not None else default_registry()
        self._transport = transport or _requests_transport
        self._timeout = timeout
        self._mock: MockProvider | None = None
        if mock_script is not None:
            self.register_mock(mock_script)

    def register_mock(self, script: str | Path | list) -> None:
        if isinstance(script, (str, Path)):
            self._mock = MockProvider.from_file(script)
        else:
            self._mock = MockProvider(script)
        self._registry["mock"] = ProviderSpec("mock", "mock")

    def knows_provider(self, provider: str) -> bool:
        return provider in self._registry

    def complete(self, model: ModelRef, messages, timeout: float | None = None) -> str:
        """Run one chat completion and return the provider's text verbatim."""
        if not messages:
            raise ValueError("messages must be non-empty")
        spec = self._registry.get(model.provider)
        if spec is None:
            raise UnknownProvider(f"provider {model.provider!r} is not registered")

        if spec.adapter == "mock":
            text = self._mock.complete(model, messages)
        else:
            url, headers, body = build_provider_request(spec, model, messages)
            status, payload = self._send_with_retry(url, headers, body, timeout or self._timeout)
            if status >= 400:
                raise ProviderHttpError(status, detail=_short(payload))
            _, parse = ADAPTERS[spec.adapter]
            text = parse(payload)

        if not text or not text.strip():
            raise EmptyCompletion(f"{model.canonical()} returned an empty completion")
        return text

    def _send_with_retry(self, url, headers, body, timeout):
        # one retry on transport failure, none on HTTP errors
        for attempt in (0, 1):
            try:
                return self._transport(url, headers, body, timeout)
            except requests.Timeout as exc:
                if attempt:
                    raise CompletionTimeout(str(exc)) from exc
            except requests.RequestException as exc:
                if attempt:
                    raise ProviderUnavailable(str(exc)) from exc
            logger.warning("transport failure contacting %s, retrying once", url)
        raise AssertionError("unreachable")


def _short(payload) -> str:
    if payload is None:
        return ""
    text = json.dumps(payload) if not isinstance(payload, str) else payload
    return text[:200]
