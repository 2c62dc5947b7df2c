import math
import random
from collections import Counter
from datetime import datetime, timedelta, timezone

import pytest

from counselkit.analytics import (
    EvaluationReport,
    Message,
    RUBRIC_DIMENSIONS,
    compute_metrics,
    count_rounds,
    evaluate_transcript,
    group_by_day,
    segment,
    shannon_entropy_bits,
    token_distribution,
)
from counselkit.clock import ManualClock, format_ts
from counselkit.gateway import (
    CallTrace,
    LlmGateway,
    ScriptEntry,
    ScriptedProvider,
    ScriptedProviderScript,
)

BASE = datetime(2025, 1, 1, tzinfo=timezone.utc)


def ts(minutes):
    return format_ts(BASE + timedelta(minutes=minutes))


def msgs_at(minute_marks, role="client"):
    return [Message(role, f"m{i}", ts(m)) for i, m in enumerate(minute_marks)]


class TestSegmentation:
    def test_gap_over_threshold_splits(self):
        segments = segment(msgs_at([0, 3, 20]), idle_threshold_min=8)
        assert len(segments) == 2
        assert segments[0].message_count == 2
        assert segments[1].message_count == 1
        total = sum(s.duration_min for s in segments)
        assert total == pytest.approx(3.0)

    def test_all_gaps_within_threshold_one_segment(self):
        segments = segment(msgs_at([0, 5, 10]), idle_threshold_min=8)
        assert len(segments) == 1
        assert segments[0].duration_min == pytest.approx(10.0)

    def test_single_message_zero_duration(self):
        segments = segment(msgs_at([42]))
        assert len(segments) == 1
        assert segments[0].duration_min == 0.0

    def test_empty_input_empty_segments(self):
        assert segment([]) == []

    def test_exactly_threshold_gap_does_not_split(self):
        segments = segment(msgs_at([0, 8]), idle_threshold_min=8)
        assert len(segments) == 1

    def test_idempotence(self):
        messages = msgs_at([0, 2, 15, 16, 40])
        segments = segment(messages, idle_threshold_min=8)
        offset = 0
        for seg in segments:
            inner = messages[offset:offset + seg.message_count]
            assert segment(inner, idle_threshold_min=8) == [seg]
            offset += seg.message_count


class TestRounds:
    def test_replied_client_message_counts(self):
        messages = [
            Message("client", "q1", ts(0)),
            Message("agent", "a1", ts(1)),
            Message("client", "q2", ts(2)),
        ]
        assert count_rounds(messages) == 1

    def test_every_replied_message_counts(self):
        messages = [
            Message("client", "q1", ts(0)), Message("agent", "a1", ts(1)),
            Message("client", "q2", ts(2)), Message("agent", "a2", ts(3)),
        ]
        assert count_rounds(messages) == 2


class TestComputeMetrics:
    def test_spec_case_a_a_b_b(self):
        messages = [Message("client", "a a b b", ts(0)), Message("agent", "mm", ts(1))]
        metrics = compute_metrics(messages)
        assert metrics.avg_words_per_response == 4.0
        assert metrics.information_entropy_bits == pytest.approx(1.0)
        assert metrics.rounds == 1
        assert metrics.informativeness == pytest.approx(4.0)

    def test_repeated_single_token_gives_zero_entropy_and_informativeness(self):
        messages = [Message("client", "same same same", ts(0)), Message("agent", "r", ts(1))]
        metrics = compute_metrics(messages)
        assert metrics.information_entropy_bits == 0.0
        assert metrics.informativeness == 0.0

    def test_two_messages_uniform_four_tokens(self):
        # 12 + 20 = 32 tokens, 8 of each of 4 kinds: entropy exactly 2 bits.
        words = ["w", "x", "y", "z"]
        first = " ".join(words * 3)        # 12 tokens
        second = " ".join(words * 5)       # 20 tokens
        messages = [
            Message("client", first, ts(0)), Message("agent", "r1", ts(1)),
            Message("client", second, ts(2)), Message("agent", "r2", ts(3)),
        ]
        metrics = compute_metrics(messages)
        assert metrics.avg_words_per_response == pytest.approx(16.0)
        assert metrics.information_entropy_bits == pytest.approx(2.0)
        assert metrics.rounds == 2
        assert metrics.informativeness == pytest.approx(64.0)

    def test_zero_client_messages_all_zero(self):
        metrics = compute_metrics([Message("agent", "hello", ts(0))])
        assert metrics.rounds == 0
        assert metrics.avg_words_per_response == 0.0
        assert metrics.informativeness == 0.0

    def test_informativeness_identity_holds(self):
        rng = random.Random(3)
        for _ in range(50):
            messages = random_transcript(rng)
            metrics = compute_metrics(messages)
            assert metrics.informativeness == (
                metrics.avg_words_per_response * metrics.information_entropy_bits * metrics.rounds
            )

    def test_token_count_conservation(self):
        messages = [Message("client", "a b c", ts(0)), Message("client", "a a", ts(1))]
        distribution = token_distribution(messages)
        assert sum(distribution.values()) == 5

    def test_entropy_bounds_and_uniform_equality(self):
        rng = random.Random(9)
        for _ in range(100):
            counts = Counter({f"t{i}": rng.randint(1, 9) for i in range(rng.randint(1, 12))})
            entropy = shannon_entropy_bits(counts)
            assert -1e-12 <= entropy <= math.log2(len(counts)) + 1e-12
        uniform = Counter({f"t{i}": 4 for i in range(8)})
        assert shannon_entropy_bits(uniform) == pytest.approx(3.0)


VOCAB = ["alpha", "beta", "gamma", "delta", "echo", "foxtrot", "golf", "hotel"]


def random_transcript(rng):
    messages = []
    minute = 0
    for _ in range(rng.randint(1, 8)):
        text = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 12)))
        messages.append(Message("client", text, ts(minute)))
        minute += rng.randint(0, 3)
        if rng.random() < 0.9:
            messages.append(Message("agent", "reply", ts(minute)))
            minute += rng.randint(0, 3)
    return messages


def oracle_metrics(messages):
    """Brute-force recomputation: tokenize, histogram, entropy, product."""
    client = [m for m in messages if m.role == "client"]
    if not client:
        return 0.0
    rounds = 0
    for i, m in enumerate(messages):
        if m.role != "client":
            continue
        j = i + 1
        while j < len(messages) and messages[j].role != "client":
            if messages[j].role == "agent":
                rounds += 1
                break
            j += 1
    tokens = []
    for m in client:
        tokens.extend(m.text.lower().split())
    avg_words = len(tokens) / len(client)
    histogram = {}
    for token in tokens:
        histogram[token] = histogram.get(token, 0) + 1
    entropy = 0.0
    for count in histogram.values():
        p = count / len(tokens)
        entropy -= p * math.log2(p)
    return avg_words * entropy * rounds


def test_informativeness_matches_oracle_on_200_random_transcripts():
    rng = random.Random(20250102)
    for _ in range(200):
        messages = random_transcript(rng)
        expected = oracle_metrics(messages)
        got = compute_metrics(messages).informativeness
        if expected == 0.0:
            assert got == 0.0
        else:
            assert abs(got - expected) / abs(expected) <= 1e-9


class TestGroupByDay:
    def test_messages_bucket_by_utc_day(self):
        messages = [
            Message("client", "a", "2025-01-01T23:59:00.000Z"),
            Message("client", "b", "2025-01-02T00:01:00.000Z"),
        ]
        days = group_by_day(messages)
        assert sorted(days) == ["2025-01-01", "2025-01-02"]

    def test_timezone_shifts_the_day(self):
        messages = [Message("client", "a", "2025-01-01T23:30:00.000Z")]
        assert list(group_by_day(messages, tz="Asia/Shanghai")) == ["2025-01-02"]


class TestEvaluateTranscript:
    def transcript(self):
        return [Message("client", "hi", ts(0)), Message("agent", "hello", ts(1))]

    def make_gateway(self, entries=(), default=None):
        script = ScriptedProviderScript(entries=tuple(entries), default_completion=default)
        trace = CallTrace()
        return LlmGateway(ScriptedProvider(script), trace, ManualClock()), trace

    def test_all_dimensions_scored(self):
        gateway, trace = self.make_gateway(default="score: 6\njustification: fine")
        report = evaluate_transcript(gateway, self.transcript())
        assert len(report.scores) == 12
        assert all(s.score == 6 for s in report.scores)
        assert {s.dimension for s in report.scores} == set(RUBRIC_DIMENSIONS)
        assert len(trace.records) == 12

    def test_out_of_range_score_leaves_dimension_unscored(self):
        gateway, _ = self.make_gateway(default="score: 9")
        report = evaluate_transcript(gateway, self.transcript())
        assert report.scores == []
        assert len(report.unscored) == 12

    def test_empty_transcript_is_precondition_error(self):
        gateway, _ = self.make_gateway(default="score: 5")
        with pytest.raises(ValueError):
            evaluate_transcript(gateway, [])

    def test_one_bad_dimension_does_not_stop_the_run(self):
        gateway, _ = self.make_gateway(
            entries=(ScriptEntry("evaluate_transcript", "score: 9", contains="memory"),),
            default="score: 4\njustification: ok",
        )
        report = evaluate_transcript(gateway, self.transcript())
        assert len(report.scores) == 11
        assert [d for d, _ in report.unscored] == ["memory"]
