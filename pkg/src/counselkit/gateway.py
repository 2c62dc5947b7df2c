"""Single boundary for all model calls.

Every completion the engine consumes goes through :class:`LlmGateway`, which
dispatches to a provider (scripted for offline runs, remote over HTTP) and
appends exactly one :class:`ProviderCallRecord` to the session's trace.

Structured stages use a plain ``key: value`` line protocol so completions can
be parsed deterministically and failures surface as :class:`ParseError`,
never as silent defaults.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .errors import ConfigurationError, ParseError, ProviderError

logger = logging.getLogger(__name__)

STAGES = (
    "detect",
    "evaluate_attitude",
    "plan_generate",
    "plan_adjust",
    "profile_update",
    "record_update",
    "retrieve_labels",
    "personalize",
    "respond",
    "evaluate_transcript",
)

STANCES = ("resistant", "guarded", "neutral", "receptive")
ATTITUDES = ("positive", "neutral", "negative")


@dataclass(frozen=True)
class PromptBundle:
    """One fully-assembled prompt, ready for a provider."""

    stage: str
    system_text: str
    user_text: str
    params: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if not self.system_text:
            raise ValueError("system_text must be non-empty")


@dataclass(frozen=True)
class ProviderCallRecord:
    turn_index: int
    stage: str
    prompt_digest: str
    completion_digest: str
    latency_ms: int
    provider_id: str

    def to_dict(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "stage": self.stage,
            "prompt_digest": self.prompt_digest,
            "completion_digest": self.completion_digest,
            "latency_ms": self.latency_ms,
            "provider_id": self.provider_id,
        }


# -- digests -----------------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def text_digest(text: str) -> str:
    return f"{fnv1a64(text.encode('utf-8')):016x}"


def bundle_digest(bundle: PromptBundle) -> str:
    """Stable 64-bit hex over stage||system||user||sorted params."""
    parts = [bundle.stage, bundle.system_text, bundle.user_text]
    parts.extend(f"{k}={bundle.params[k]}" for k in sorted(bundle.params))
    return text_digest("||".join(parts))


# -- call trace ---------------------------------------------------------------


class CallTrace:
    """Append-only per-session record of provider calls.

    Single-writer: the owning session sets the current turn index and appends
    records; turn indices must be non-decreasing.
    """

    def __init__(self, sink: Callable[[ProviderCallRecord], None] | None = None):
        self.records: list[ProviderCallRecord] = []
        self._sink = sink
        self._turn_index = 0

    def set_turn(self, turn_index: int) -> None:
        if turn_index < self._turn_index:
            raise ValueError("turn_index must be non-decreasing within a trace")
        self._turn_index = turn_index

    @property
    def turn_index(self) -> int:
        return self._turn_index

    def record(self, stage: str, prompt_digest: str, completion_digest: str,
               latency_ms: int, provider_id: str) -> ProviderCallRecord:
        rec = ProviderCallRecord(
            turn_index=self._turn_index,
            stage=stage,
            prompt_digest=prompt_digest,
            completion_digest=completion_digest,
            latency_ms=latency_ms,
            provider_id=provider_id,
        )
        self.records.append(rec)
        if self._sink is not None:
            self._sink(rec)
        return rec

    def calls_for_turn(self, turn_index: int) -> list[ProviderCallRecord]:
        return [r for r in self.records if r.turn_index == turn_index]


# -- providers ----------------------------------------------------------------


class Provider(Protocol):
    provider_id: str

    def complete(self, bundle: PromptBundle) -> str: ...


@dataclass(frozen=True)
class ScriptEntry:
    """Matches a stage plus an optional substring of the user text."""

    stage: str
    completion: str
    contains: str | None = None

    def matches(self, bundle: PromptBundle) -> bool:
        if self.stage != bundle.stage:
            return False
        return self.contains is None or self.contains in bundle.user_text


@dataclass(frozen=True)
class ScriptedProviderScript:
    entries: tuple[ScriptEntry, ...] = ()
    default_completion: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedProviderScript":
        entries = tuple(
            ScriptEntry(stage=e["stage"], completion=e["completion"], contains=e.get("contains"))
            for e in data.get("entries", ())
        )
        return cls(entries=entries, default_completion=data.get("default"))

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProviderScript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        data: dict = {
            "entries": [
                {"stage": e.stage, "completion": e.completion,
                 **({"contains": e.contains} if e.contains is not None else {})}
                for e in self.entries
            ]
        }
        if self.default_completion is not None:
            data["default"] = self.default_completion
        return data

    def completion_for(self, bundle: PromptBundle) -> str:
        for entry in self.entries:
            if entry.matches(bundle):
                return entry.completion
        if self.default_completion is not None:
            return self.default_completion
        raise ConfigurationError(
            f"scripted provider has no entry for stage {bundle.stage!r} and no default"
        )


class ScriptedProvider:
    """Deterministic offline provider: pure function of the prompt bundle."""

    provider_id = "scripted"

    def __init__(self, script: ScriptedProviderScript):
        self.script = script

    def complete(self, bundle: PromptBundle) -> str:
        return self.script.completion_for(bundle)


class RemoteProvider:
    """Chat-completion endpoint speaking JSON over HTTP.

    Configured from the environment: COUNSELKIT_ENDPOINT, COUNSELKIT_API_KEY,
    COUNSELKIT_MODEL, COUNSELKIT_TIMEOUT_S. Retries 3 attempts with
    exponential backoff starting at 500 ms.
    """

    provider_id = "remote"
    max_attempts = 3
    backoff_s = 0.5

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 model: str | None = None, timeout_s: float | None = None,
                 transport: Callable[[dict], str] | None = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint or os.environ.get("COUNSELKIT_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("COUNSELKIT_API_KEY", "")
        self.model = model or os.environ.get("COUNSELKIT_MODEL", "")
        self.timeout_s = timeout_s if timeout_s is not None else float(
            os.environ.get("COUNSELKIT_TIMEOUT_S", "30"))
        self._transport = transport or self._http_transport
        self._sleep = sleeper
        if transport is None and not self.endpoint:
            raise ConfigurationError("remote provider requires COUNSELKIT_ENDPOINT")

    def _http_transport(self, payload: dict) -> str:
        import requests

        resp = requests.post(
            self.endpoint,
            json=payload,
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=self.timeout_s,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def complete(self, bundle: PromptBundle) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
        }
        for key, value in bundle.params.items():
            payload[key] = value
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                return self._transport(payload)
            except Exception as exc:  # transport errors become retriable
                last_error = exc
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
        raise ProviderError(
            f"remote provider failed after {self.max_attempts} attempts: {last_error}",
            attempts=self.max_attempts,
        )


class LlmGateway:
    """Dispatches bundles to a provider and traces every call."""

    def __init__(self, provider: Provider, trace: CallTrace, clock=None):
        self.provider = provider
        self.trace = trace
        self._clock = clock

    def _now_ms(self) -> float:
        if self._clock is not None:
            return self._clock.now().timestamp() * 1000.0
        return time.monotonic() * 1000.0

    def complete(self, bundle: PromptBundle) -> str:
        started = self._now_ms()
        completion = self.provider.complete(bundle)
        latency_ms = max(0, int(self._now_ms() - started))
        self.trace.record(
            stage=bundle.stage,
            prompt_digest=bundle_digest(bundle),
            completion_digest=text_digest(completion),
            latency_ms=latency_ms,
            provider_id=self.provider.provider_id,
        )
        return completion


# -- structured completion protocol -------------------------------------------

_KV_LINE = re.compile(r"^([a-z][a-z0-9_]*)\s*:\s*(.*)$")
_FENCE = re.compile(r"```(?:[a-z]*\n)?(.*?)```", re.DOTALL)


def format_kv_block(pairs: Sequence[tuple[str, str]]) -> str:
    """Render ordered key/value pairs in the line protocol."""
    return "\n".join(f"{key}: {value}" for key, value in pairs)


def parse_kv_lines(text: str) -> list[tuple[str, str]]:
    """Extract ordered ``key: value`` pairs; raises ParseError when none exist."""
    fenced = _FENCE.search(text)
    body = fenced.group(1) if fenced else text
    pairs = []
    for line in body.splitlines():
        match = _KV_LINE.match(line.strip())
        if match:
            pairs.append((match.group(1), match.group(2).strip()))
    if not pairs:
        raise ParseError(f"no key: value lines found in completion: {text[:80]!r}")
    return pairs


def kv_map(pairs: Iterable[tuple[str, str]]) -> dict[str, str]:
    return dict(pairs)


def split_list(value: str, sep: str = ",") -> list[str]:
    return [part.strip() for part in value.split(sep) if part.strip()]


def _require(mapping: dict[str, str], key: str, stage: str) -> str:
    if key not in mapping:
        raise ParseError(f"stage {stage}: missing required key {key!r}")
    return mapping[key]


def _decimal(value: str, key: str, lo: float, hi: float) -> float:
    try:
        number = float(value)
    except ValueError as exc:
        raise ParseError(f"{key}: not a decimal: {value!r}") from exc
    if not lo <= number <= hi:
        raise ParseError(f"{key}: {number} outside [{lo}, {hi}]")
    return number


def _flag(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("yes", "true", "1"):
        return True
    if lowered in ("no", "false", "0", ""):
        return False
    raise ParseError(f"expected yes/no flag, got {value!r}")


def parse_structured(stage: str, completion: str) -> dict:
    """Parse a completion into the record shape its stage declares.

    detect / evaluate_attitude / evaluate_transcript get typed, range-checked
    fields; the remaining structured stages return the raw key/value map.
    """
    if stage == "respond":
        raise ParseError("respond stage carries free text, not a structured block")
    mapping = kv_map(parse_kv_lines(completion))
    if stage == "detect":
        stance = _require(mapping, "stance", stage)
        if stance not in STANCES:
            raise ParseError(f"stance: {stance!r} not one of {STANCES}")
        return {
            "emotion": _require(mapping, "emotion", stage),
            "intensity": _decimal(_require(mapping, "intensity", stage), "intensity", 0.0, 1.0),
            "stance": stance,
            "risk": _flag(mapping.get("risk", "no")),
        }
    if stage == "evaluate_attitude":
        attitude = _require(mapping, "attitude", stage)
        if attitude not in ATTITUDES:
            raise ParseError(f"attitude: {attitude!r} not one of {ATTITUDES}")
        return {
            "attitude": attitude,
            "confidence": _decimal(_require(mapping, "confidence", stage), "confidence", 0.0, 1.0),
        }
    if stage == "evaluate_transcript":
        raw = _require(mapping, "score", stage)
        try:
            score = int(raw)
        except ValueError as exc:
            raise ParseError(f"score: not an integer: {raw!r}") from exc
        if not 1 <= score <= 7:
            raise ParseError(f"score: {score} outside [1, 7]")
        return {"score": score, "justification": mapping.get("justification", "")}
    return mapping
