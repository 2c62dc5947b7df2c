"""Behavioral engagement metrics and the rubric-based transcript evaluator.

Session length comes from idle-gap segmentation: any gap over the threshold
(default 8 minutes) splits the message stream, and the summed segment
durations give the active session length. Informativeness is the exact
product avg-words-per-response x entropy-bits x rounds, with entropy taken
base-2 over the word-frequency distribution of the client's messages
(lowercased, whitespace-tokenized).
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from zoneinfo import ZoneInfo

from .clock import parse_ts
from .errors import ParseError, ProviderError
from .gateway import LlmGateway, parse_structured
from .textutil import tokenize
from . import prompts

logger = logging.getLogger(__name__)

DEFAULT_IDLE_THRESHOLD_MIN = 8.0

RUBRIC_DIMENSIONS = (
    "information gathering",
    "plans & interventions",
    "topic stability",
    "memory",
    "conversation continuity",
    "empathy",
    "follow-up",
    "positive feedback",
    "social skills",
    "self-disclosure",
    "personalization",
    "proactive assessment",
)


@dataclass(frozen=True)
class Message:
    role: str  # "client" | "agent"
    text: str
    ts: str


@dataclass(frozen=True)
class Segment:
    start: str
    end: str
    message_count: int

    @property
    def duration_min(self) -> float:
        return (parse_ts(self.end) - parse_ts(self.start)).total_seconds() / 60.0


@dataclass(frozen=True)
class EngagementMetrics:
    segments: tuple[Segment, ...]
    session_length_min: float
    rounds: int
    avg_words_per_response: float
    information_entropy_bits: float
    informativeness: float

    def to_dict(self) -> dict:
        return {
            "segments": [
                {"start": s.start, "end": s.end, "message_count": s.message_count}
                for s in self.segments
            ],
            "session_length_min": self.session_length_min,
            "rounds": self.rounds,
            "avg_words_per_response": self.avg_words_per_response,
            "information_entropy_bits": self.information_entropy_bits,
            "informativeness": self.informativeness,
        }


def segment(messages: list[Message], idle_threshold_min: float = DEFAULT_IDLE_THRESHOLD_MIN) -> list[Segment]:
    """Split time-ordered messages wherever an idle gap exceeds the threshold."""
    if not messages:
        return []
    segments: list[Segment] = []
    start = 0
    for i in range(1, len(messages)):
        gap_min = (parse_ts(messages[i].ts) - parse_ts(messages[i - 1].ts)).total_seconds() / 60.0
        if gap_min > idle_threshold_min:
            segments.append(Segment(messages[start].ts, messages[i - 1].ts, i - start))
            start = i
    segments.append(Segment(messages[start].ts, messages[-1].ts, len(messages) - start))
    return segments


def token_distribution(client_messages: list[Message]) -> Counter:
    counts: Counter = Counter()
    for message in client_messages:
        counts.update(tokenize(message.text))
    return counts


def shannon_entropy_bits(counts: Counter) -> float:
    total = sum(counts.values())
    if total == 0:
        return 0.0
    entropy = 0.0
    for count in counts.values():
        p = count / total
        entropy -= p * math.log2(p)
    return entropy


def count_rounds(messages: list[Message]) -> int:
    """Client messages that received an agent reply before the next client message."""
    rounds = 0
    for i, message in enumerate(messages):
        if message.role != "client":
            continue
        for later in messages[i + 1:]:
            if later.role == "client":
                break
            if later.role == "agent":
                rounds += 1
                break
    return rounds


def compute_metrics(messages: list[Message],
                    idle_threshold_min: float = DEFAULT_IDLE_THRESHOLD_MIN) -> EngagementMetrics:
    """Engagement metrics over one time-ordered message stream."""
    client_messages = [m for m in messages if m.role == "client"]
    segments = tuple(segment(messages, idle_threshold_min))
    session_length = sum(s.duration_min for s in segments)
    if not client_messages:
        return EngagementMetrics(segments, session_length, 0, 0.0, 0.0, 0.0)
    rounds = count_rounds(messages)
    total_words = sum(len(tokenize(m.text)) for m in client_messages)
    avg_words = total_words / len(client_messages)
    entropy = shannon_entropy_bits(token_distribution(client_messages))
    informativeness = avg_words * entropy * rounds
    return EngagementMetrics(
        segments=segments,
        session_length_min=session_length,
        rounds=rounds,
        avg_words_per_response=avg_words,
        information_entropy_bits=entropy,
        informativeness=informativeness,
    )


def group_by_day(messages: list[Message], tz: str = "UTC") -> dict[str, list[Message]]:
    """Bucket messages by calendar day in the configured timezone."""
    zone = ZoneInfo(tz)
    days: dict[str, list[Message]] = {}
    for message in messages:
        day = parse_ts(message.ts).astimezone(zone).date().isoformat()
        days.setdefault(day, []).append(message)
    return days


# -- transcript evaluation -------------------------------------------------------


@dataclass(frozen=True)
class RubricScore:
    dimension: str
    score: int
    justification: str

    def __post_init__(self):
        if not 1 <= self.score <= 7:
            raise ValueError(f"score {self.score} outside [1, 7]")


@dataclass
class EvaluationReport:
    scores: list[RubricScore] = field(default_factory=list)
    unscored: list[tuple[str, str]] = field(default_factory=list)


def evaluate_transcript(gateway: LlmGateway, messages: list[Message],
                        dimensions: tuple[str, ...] = RUBRIC_DIMENSIONS,
                        guidance: dict[str, str] | None = None) -> EvaluationReport:
    """One provider call per rubric dimension; bad scores leave it unscored."""
    if not messages:
        raise ValueError("transcript is empty")
    transcript_text = "\n".join(f"{m.role}: {m.text}" for m in messages)
    guidance = guidance or {}
    report = EvaluationReport()
    for dimension in dimensions:
        bundle = prompts.transcript_eval_bundle(
            dimension, guidance.get(dimension, ""), transcript_text)
        try:
            completion = gateway.complete(bundle)
            fields = parse_structured("evaluate_transcript", completion)
        except (ParseError, ProviderError) as exc:
            logger.warning("dimension %r unscored: %s", dimension, exc)
            report.unscored.append((dimension, str(exc)))
            continue
        report.scores.append(RubricScore(dimension, fields["score"], fields["justification"]))
    return report
