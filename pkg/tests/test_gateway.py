import string

import pytest
from hypothesis import given, strategies as st

from counselkit.clock import ManualClock
from counselkit.errors import ConfigurationError, ParseError, ProviderError
from counselkit.gateway import (
    CallTrace,
    LlmGateway,
    PromptBundle,
    RemoteProvider,
    ScriptEntry,
    ScriptedProvider,
    ScriptedProviderScript,
    bundle_digest,
    format_kv_block,
    parse_kv_lines,
    parse_structured,
    text_digest,
)


def bundle(stage="respond", system="sys", user="user", params=None):
    return PromptBundle(stage, system, user, params or {})


class TestPromptBundle:
    def test_rejects_unknown_stage(self):
        with pytest.raises(ValueError):
            bundle(stage="nonsense")

    def test_rejects_empty_system_text(self):
        with pytest.raises(ValueError):
            bundle(system="")

    def test_digest_is_stable_and_param_order_free(self):
        a = bundle(params={"temperature": "0.2", "max_tokens": "800"})
        b = bundle(params={"max_tokens": "800", "temperature": "0.2"})
        assert bundle_digest(a) == bundle_digest(b)
        assert len(bundle_digest(a)) == 16
        assert bundle_digest(a) != bundle_digest(bundle(user="other"))


class TestScriptedProvider:
    def test_returns_configured_completion(self):
        script = ScriptedProviderScript(entries=(ScriptEntry("respond", "Hello"),))
        assert ScriptedProvider(script).complete(bundle()) == "Hello"

    def test_empty_script_default_path(self):
        provider = ScriptedProvider(ScriptedProviderScript(default_completion="ok"))
        assert provider.complete(bundle()) == "ok"

    def test_first_match_wins(self):
        script = ScriptedProviderScript(entries=(
            ScriptEntry("respond", "specific", contains="magic"),
            ScriptEntry("respond", "generic"),
        ))
        provider = ScriptedProvider(script)
        assert provider.complete(bundle(user="some magic words")) == "specific"
        assert provider.complete(bundle(user="plain words")) == "generic"

    def test_no_match_without_default_is_configuration_error(self):
        provider = ScriptedProvider(ScriptedProviderScript(entries=(ScriptEntry("detect", "x"),)))
        with pytest.raises(ConfigurationError):
            provider.complete(bundle(stage="respond"))

    def test_identical_bundle_gives_identical_completion_digest(self):
        script = ScriptedProviderScript(default_completion="stable")
        provider = ScriptedProvider(script)
        trace = CallTrace()
        gateway = LlmGateway(provider, trace, ManualClock())
        gateway.complete(bundle())
        gateway.complete(bundle())
        first, second = trace.records
        assert first.completion_digest == second.completion_digest
        assert first.prompt_digest == second.prompt_digest

    def test_roundtrip_from_dict(self):
        script = ScriptedProviderScript.from_dict({
            "default": "d",
            "entries": [{"stage": "respond", "completion": "c", "contains": "x"}],
        })
        assert script.default_completion == "d"
        assert script.entries[0].contains == "x"


class TestCallTrace:
    def test_every_call_appends_exactly_one_record(self):
        trace = CallTrace()
        gateway = LlmGateway(ScriptedProvider(ScriptedProviderScript(default_completion="ok")),
                             trace, ManualClock())
        for _ in range(5):
            gateway.complete(bundle())
        assert len(trace.records) == 5

    def test_turn_index_must_not_decrease(self):
        trace = CallTrace()
        trace.set_turn(3)
        with pytest.raises(ValueError):
            trace.set_turn(2)

    def test_sink_receives_records(self):
        seen = []
        trace = CallTrace(sink=seen.append)
        gateway = LlmGateway(ScriptedProvider(ScriptedProviderScript(default_completion="ok")),
                             trace, ManualClock())
        gateway.complete(bundle())
        assert seen == trace.records


class TestRemoteProviderRetries:
    def test_succeeds_after_transient_failures(self):
        calls = {"n": 0}
        sleeps = []

        def flaky(payload):
            calls["n"] += 1
            if calls["n"] < 3:
                raise OSError("connection reset")
            return "recovered"

        provider = RemoteProvider(transport=flaky, sleeper=sleeps.append, model="m")
        assert provider.complete(bundle()) == "recovered"
        assert calls["n"] == 3
        assert sleeps == [0.5, 1.0]

    def test_exhausted_retries_raise_provider_error_with_attempts(self):
        def always_down(payload):
            raise OSError("down")

        provider = RemoteProvider(transport=always_down, sleeper=lambda s: None, model="m")
        with pytest.raises(ProviderError) as exc_info:
            provider.complete(bundle())
        assert exc_info.value.attempts == 3

    def test_requires_endpoint_when_no_transport(self, monkeypatch):
        monkeypatch.delenv("COUNSELKIT_ENDPOINT", raising=False)
        with pytest.raises(ConfigurationError):
            RemoteProvider()


class TestStructuredParsing:
    def test_evaluate_attitude_fields(self):
        fields = parse_structured("evaluate_attitude", "attitude: negative\nconfidence: 0.9")
        assert fields == {"attitude": "negative", "confidence": 0.9}

    def test_detect_fields(self):
        fields = parse_structured("detect", "emotion: sadness\nintensity: 0.8\nstance: receptive")
        assert fields == {"emotion": "sadness", "intensity": 0.8, "stance": "receptive", "risk": False}

    def test_detect_risk_yes(self):
        fields = parse_structured("detect", "emotion: fear\nintensity: 0.2\nstance: guarded\nrisk: yes")
        assert fields["risk"] is True

    def test_unparseable_text_is_a_parse_error(self):
        with pytest.raises(ParseError):
            parse_structured("detect", "no fields here")

    def test_missing_required_key(self):
        with pytest.raises(ParseError):
            parse_structured("evaluate_attitude", "attitude: positive")

    def test_out_of_range_value(self):
        with pytest.raises(ParseError):
            parse_structured("evaluate_attitude", "attitude: positive\nconfidence: 1.5")
        with pytest.raises(ParseError):
            parse_structured("evaluate_transcript", "score: 9")

    def test_transcript_score(self):
        fields = parse_structured("evaluate_transcript", "score: 6\njustification: ok")
        assert fields == {"score": 6, "justification": "ok"}

    def test_fenced_block_is_extracted(self):
        completion = "Sure, here you go:\n```\nattitude: positive\nconfidence: 0.7\n```\nHope that helps."
        fields = parse_structured("evaluate_attitude", completion)
        assert fields["attitude"] == "positive"

    def test_respond_has_no_structured_protocol(self):
        with pytest.raises(ParseError):
            parse_structured("respond", "anything")

    def test_free_stage_returns_raw_map(self):
        fields = parse_structured("profile_update", "demographics: 29yo designer")
        assert fields == {"demographics": "29yo designer"}


KEY_ALPHABET = string.ascii_lowercase + string.digits + "_"
keys = st.text(alphabet=KEY_ALPHABET, min_size=1, max_size=12).filter(lambda s: s[0].isalpha())
values = st.text(
    alphabet=string.ascii_letters + string.digits + " .,;-",
    min_size=0, max_size=30,
).map(str.strip)


@given(pairs=st.lists(st.tuples(keys, values), min_size=1, max_size=8))
def test_kv_roundtrip_identity(pairs):
    assert parse_kv_lines(format_kv_block(pairs)) == pairs


def test_text_digest_known_stability():
    # FNV-1a must not drift across runs or platforms.
    assert text_digest("") == f"{0xCBF29CE484222325:016x}"
    assert text_digest("a") == text_digest("a")
    assert text_digest("a") != text_digest("b")
