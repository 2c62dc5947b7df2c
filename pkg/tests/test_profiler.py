import pytest
from hypothesis import given, strategies as st

from counselkit.clock import ManualClock
from counselkit.config import EngineConfig
from counselkit.errors import ProviderError
from counselkit.gateway import (
    CallTrace,
    LlmGateway,
    ScriptEntry,
    ScriptedProvider,
    ScriptedProviderScript,
)
from counselkit.profiler import (
    PROFILE_FIELDS,
    CaseConceptualization,
    ContextWindow,
    CounselingRecord,
    Profiler,
    phase_for_completeness,
)


def make_profiler(entries=(), default="nothing useful", config=None):
    script = ScriptedProviderScript(entries=tuple(entries), default_completion=default)
    trace = CallTrace()
    gateway = LlmGateway(ScriptedProvider(script), trace, ManualClock())
    return Profiler(gateway, config or EngineConfig()), trace


def ctx():
    return ContextWindow()


class TestContextWindow:
    def test_holds_at_most_capacity(self):
        window = ContextWindow(capacity=10)
        for i in range(15):
            window.push("client", f"m{i}", "2025-01-01T00:00:00.000Z")
        assert len(window.messages) == 10
        assert window.messages[0].text == "m5"

    def test_snapshot_is_independent(self):
        window = ContextWindow()
        window.push("client", "one", "t")
        snap = window.snapshot()
        window.push("agent", "two", "t")
        assert len(snap.messages) == 1


class TestCompleteness:
    def test_empty_profile_is_zero(self):
        assert CaseConceptualization().completeness == 0.0

    def test_single_field_is_point_one(self):
        assert CaseConceptualization(demographics="29yo").completeness == pytest.approx(0.1)

    @given(filled=st.sets(st.sampled_from(PROFILE_FIELDS)))
    def test_completeness_is_filled_count_over_ten(self, filled):
        profile = CaseConceptualization(**{name: "x" for name in filled})
        assert profile.completeness == len(filled) / 10

    def test_roundtrip_dict(self):
        profile = CaseConceptualization(demographics="a", client_goals="b", version=3)
        again = CaseConceptualization.from_dict(profile.to_dict())
        assert again == profile


class TestUpdateDocuments:
    def test_filling_one_field_bumps_version_and_completeness(self):
        profiler, _ = make_profiler([
            ScriptEntry("profile_update", "demographics: 29yo designer"),
        ])
        profile, record = profiler.update_documents("hi", ctx(), CaseConceptualization(),
                                                    CounselingRecord(), "s1")
        assert profile.completeness == pytest.approx(0.1)
        assert profile.version == 1

    def test_no_fields_supplied_leaves_documents_unchanged(self):
        profiler, _ = make_profiler()  # default completion parses but carries no known fields
        before_profile = CaseConceptualization(demographics="kept", version=4)
        before_record = CounselingRecord(version=2)
        profile, record = profiler.update_documents("hi", ctx(), before_profile, before_record, "s1")
        assert profile == before_profile
        assert record == before_record

    def test_unparseable_completion_keeps_version(self):
        profiler, _ = make_profiler(default="!!! ???")
        before = CaseConceptualization(version=1, demographics="x")
        profile, _ = profiler.update_documents("hi", ctx(), before, CounselingRecord(), "s1")
        assert profile == before

    def test_identical_value_does_not_bump_version(self):
        profiler, _ = make_profiler([
            ScriptEntry("profile_update", "demographics: same"),
        ])
        before = CaseConceptualization(demographics="same", version=7)
        profile, _ = profiler.update_documents("hi", ctx(), before, CounselingRecord(), "s1")
        assert profile.version == 7

    def test_exactly_two_provider_calls_per_update(self):
        profiler, trace = make_profiler()
        profiler.update_documents("hi", ctx(), CaseConceptualization(), CounselingRecord(), "s1")
        assert len(trace.records) == 2
        assert [r.stage for r in trace.records] == ["profile_update", "record_update"]

    def test_record_update_builds_session_record_and_summary(self):
        profiler, _ = make_profiler([
            ScriptEntry("record_update",
                        "key_topics: stress, sleep\nhomework: keep a log\n"
                        "cumulative_summary: Explored stress and sleep"),
        ])
        _, record = profiler.update_documents("hi", ctx(), CaseConceptualization(),
                                              CounselingRecord(), "s1")
        assert record.version == 1
        session = record.record_for("s1")
        assert session.key_topics == ["stress", "sleep"]
        assert session.homework == ["keep a log"]
        assert record.cumulative_summary == "Explored stress and sleep"

    def test_summary_regenerated_when_record_changes_without_one(self):
        profiler, _ = make_profiler([
            ScriptEntry("record_update", "key_topics: grief"),
        ])
        _, record = profiler.update_documents("hi", ctx(), CaseConceptualization(),
                                              CounselingRecord(cumulative_summary="old"), "s1")
        assert record.cumulative_summary != "old"
        assert "grief" in record.cumulative_summary

    def test_scripted_fill_of_seven_fields_gives_point_seven(self):
        seven = PROFILE_FIELDS[:7]
        profile = CaseConceptualization()
        record = CounselingRecord()
        for name in seven:
            profiler, _ = make_profiler([
                ScriptEntry("profile_update", f"{name}: filled value"),
            ])
            profile, record = profiler.update_documents("hi", ctx(), profile, record, "s1")
        assert profile.completeness == pytest.approx(0.7)
        assert profile.version == 7


class FailingProvider:
    provider_id = "failing"

    def complete(self, bundle):
        raise ProviderError("down", attempts=3)


class TestDeterminePhase:
    def profile_at(self, completeness_tenths):
        return CaseConceptualization(**{name: "x" for name in PROFILE_FIELDS[:completeness_tenths]})

    def test_zero_completeness_is_initial(self):
        profiler, _ = make_profiler()
        decision = profiler.determine_phase(self.profile_at(0), CounselingRecord(), 1, "initial", 0)
        assert decision.phase == "initial"

    def test_exactly_at_threshold_is_middle(self):
        profiler, trace = make_profiler()
        decision = profiler.determine_phase(self.profile_at(7), CounselingRecord(), 1, "initial", 0)
        assert decision.phase == "middle"
        assert len(trace.records) == 0  # min_sessions gate blocks the ending check

    def test_just_below_threshold_is_initial(self):
        profiler, _ = make_profiler()
        decision = profiler.determine_phase(self.profile_at(6), CounselingRecord(), 9, "initial", 0)
        assert decision.phase == "initial"

    def test_ending_requires_sessions_and_yes(self):
        profiler, _ = make_profiler([
            ScriptEntry("profile_update", "goals_substantially_achieved: yes"),
        ])
        decision = profiler.determine_phase(self.profile_at(8), CounselingRecord(), 3, "middle", 5)
        assert decision.phase == "ending"

    def test_no_answer_stays_middle(self):
        profiler, _ = make_profiler([
            ScriptEntry("profile_update", "goals_substantially_achieved: no"),
        ])
        decision = profiler.determine_phase(self.profile_at(8), CounselingRecord(), 3, "middle", 5)
        assert decision.phase == "middle"

    def test_provider_failure_holds_current_phase(self):
        gateway = LlmGateway(FailingProvider(), CallTrace(), ManualClock())
        profiler = Profiler(gateway, EngineConfig())
        decision = profiler.determine_phase(self.profile_at(8), CounselingRecord(), 3, "middle", 5)
        assert decision.phase == "middle"

    def test_no_automatic_regression(self):
        profiler, _ = make_profiler()
        decision = profiler.determine_phase(self.profile_at(0), CounselingRecord(), 3, "middle", 5)
        assert decision.phase == "middle"

    def test_explicit_regression_sets_flag(self):
        decision = Profiler.regress_phase("initial", 9, "revisit assessment")
        assert decision.phase == "initial"
        assert decision.regression is True

    def test_phase_for_completeness_rule(self):
        assert phase_for_completeness(0.0, 0.7) == "initial"
        assert phase_for_completeness(0.69, 0.7) == "initial"
        assert phase_for_completeness(0.7, 0.7) == "middle"
