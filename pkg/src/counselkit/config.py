"""Engine configuration.

All tunable thresholds live here and can be overridden from a plain
``key=value`` file (one setting per line, ``#`` comments allowed).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigurationError


@dataclass(frozen=True)
class EngineConfig:
    # Planner: consecutive confident-negative verdicts that trigger an
    # action / session / goal layer adjustment.  1/1/1 escalates every
    # negative straight to the goal layer.
    escalation_thresholds: tuple[int, int, int] = (1, 2, 3)
    # Profiler phase control.
    middle_threshold: float = 0.7
    min_sessions: int = 3
    # Empathy strategy selection.
    intensity_threshold: float = 0.7
    guidance_intensity_max: float = 0.3
    # Analytics segmentation and session lifecycle.
    idle_threshold_min: float = 8.0
    auto_close_min: float = 30.0
    # Knowledge retrieval.
    retrieval_k: int = 1
    min_score: float = 0.05
    # Preference updates, agenda sizing, context window.
    personalize_cadence: int = 5
    max_agenda_items: int = 5
    context_capacity: int = 10
    timezone: str = "UTC"

    def __post_init__(self):
        a, s, g = self.escalation_thresholds
        if not (1 <= a <= s <= g):
            raise ConfigurationError(
                f"escalation thresholds must satisfy 1 <= action <= session <= goal, got {a}/{s}/{g}"
            )


_INT_FIELDS = {"min_sessions", "retrieval_k", "personalize_cadence", "max_agenda_items", "context_capacity"}
_FLOAT_FIELDS = {
    "middle_threshold",
    "intensity_threshold",
    "guidance_intensity_max",
    "idle_threshold_min",
    "auto_close_min",
    "min_score",
}


def load_config(path: str | Path | None = None, base: EngineConfig | None = None) -> EngineConfig:
    """Parse a key=value config file on top of defaults (or ``base``)."""
    config = base or EngineConfig()
    if path is None:
        return config
    overrides = {}
    known = {f.name for f in fields(EngineConfig)}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ConfigurationError(f"{path}:{line_no}: unknown setting {key!r}")
        try:
            if key == "escalation_thresholds":
                parts = [int(p) for p in value.split("/")]
                if len(parts) != 3:
                    raise ValueError("expected action/session/goal")
                overrides[key] = tuple(parts)
            elif key in _INT_FIELDS:
                overrides[key] = int(value)
            elif key in _FLOAT_FIELDS:
                overrides[key] = float(value)
            else:
                overrides[key] = value
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{line_no}: bad value for {key}: {exc}") from exc
    return replace(config, **overrides)
