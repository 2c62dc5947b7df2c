import pytest

from counselkit.clock import ManualClock
from counselkit.config import EngineConfig
from counselkit.gateway import ScriptEntry, ScriptedProvider, ScriptedProviderScript
from counselkit.orchestrator import Engine
from counselkit.storage import Store


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        print(f"\n[acceptance] {report.nodeid.split('::')[-1]}: {'PASS' if report.passed else 'FAIL'}")


FULL_PIPELINE_ENTRIES = [
    ScriptEntry("detect", "emotion: sadness\nintensity: 0.4\nstance: receptive\nrisk: no"),
    ScriptEntry("evaluate_attitude", "attitude: positive\nconfidence: 0.9"),
    ScriptEntry("plan_generate", "statement: Build a workable relationship with work stress",
                contains="target: goal"),
    ScriptEntry("plan_generate",
                "item: Explore current stressors\nitem: Identify coping resources\nitem: Agree on one practice",
                contains="target: agenda"),
    ScriptEntry("plan_generate",
                "action: clarifying question :: Ask what part of work feels heaviest\n"
                "action: validation :: Validate the effort the client is already making\n"
                "action: reframing :: Offer a gentler reading of one stressful moment",
                contains="target: actions"),
    ScriptEntry("plan_adjust", "statement: Reduce immediate distress before deeper work"),
    ScriptEntry("profile_update", "goals_substantially_achieved: no", contains="task: ending_check"),
    ScriptEntry("profile_update", "presenting_problem: work stress"),
    ScriptEntry("record_update",
                "key_topics: work stress\nhomework: note one stressful moment\n"
                "cumulative_summary: Explored work stress and early coping ideas"),
    ScriptEntry("retrieve_labels", "functions: emotional awareness\nkeywords: stress, work"),
    ScriptEntry("personalize", "empathy_language: words of affirmation"),
    ScriptEntry("respond", "I hear how heavy work has been feeling lately."),
    ScriptEntry("evaluate_transcript", "score: 6\njustification: steady and well managed"),
]


def make_full_script(extra_entries=(), default=None):
    return ScriptedProviderScript(
        entries=tuple(extra_entries) + tuple(FULL_PIPELINE_ENTRIES),
        default_completion=default,
    )


@pytest.fixture
def full_script():
    return make_full_script()


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def engine(tmp_path, full_script, clock):
    return Engine(
        store=Store(tmp_path / "store"),
        provider=ScriptedProvider(full_script),
        config=EngineConfig(),
        clock=clock,
    )


def make_engine(tmp_path, script, clock=None, config=None, provider=None, subdir="store"):
    return Engine(
        store=Store(tmp_path / subdir),
        provider=provider or ScriptedProvider(script),
        config=config or EngineConfig(),
        clock=clock or ManualClock(),
    )
