import pytest

from counselkit.config import EngineConfig, load_config
from counselkit.errors import ConfigurationError


def test_defaults():
    config = EngineConfig()
    assert config.escalation_thresholds == (1, 2, 3)
    assert config.middle_threshold == 0.7
    assert config.min_sessions == 3
    assert config.intensity_threshold == 0.7
    assert config.idle_threshold_min == 8.0
    assert config.auto_close_min == 30.0
    assert config.retrieval_k == 1
    assert config.min_score == 0.05
    assert config.personalize_cadence == 5
    assert config.max_agenda_items == 5


def test_load_full_key_value_file(tmp_path):
    path = tmp_path / "engine.conf"
    path.write_text(
        "# engine tuning\n"
        "escalation_thresholds=1/1/1\n"
        "middle_threshold=0.5\n"
        "min_sessions=2\n"
        "intensity_threshold=0.8\n"
        "idle_threshold_min=6\n"
        "auto_close_min=15\n"
        "retrieval_k=3\n"
        "min_score=0.1\n"
        "personalize_cadence=4\n"
        "max_agenda_items=7\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.escalation_thresholds == (1, 1, 1)
    assert config.middle_threshold == 0.5
    assert config.min_sessions == 2
    assert config.intensity_threshold == 0.8
    assert config.idle_threshold_min == 6.0
    assert config.auto_close_min == 15.0
    assert config.retrieval_k == 3
    assert config.min_score == 0.1
    assert config.personalize_cadence == 4
    assert config.max_agenda_items == 7


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "engine.conf"
    path.write_text("mystery_knob=1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_bad_value_rejected_with_line(tmp_path):
    path = tmp_path / "engine.conf"
    path.write_text("min_sessions=three\n", encoding="utf-8")
    with pytest.raises(ConfigurationError) as exc_info:
        load_config(path)
    assert ":1:" in str(exc_info.value)


def test_threshold_ordering_enforced():
    with pytest.raises(ConfigurationError):
        EngineConfig(escalation_thresholds=(3, 2, 1))


def test_no_path_returns_defaults():
    assert load_config(None) == EngineConfig()
