"""Client profiling: case conceptualization, counseling records, phase control.

Two professional documents are maintained from conversation context. Their
completeness drives the therapy phase: assessment first, active intervention
once the conceptualization is filled in, consolidation once an explicit
achievement check passes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .config import EngineConfig
from .errors import ParseError, ProviderError
from .gateway import LlmGateway, kv_map, parse_kv_lines, split_list
from . import prompts

logger = logging.getLogger(__name__)

PHASES = ("initial", "middle", "ending")

PROFILE_FIELDS = (
    "demographics",
    "presenting_problem",
    "problem_history",
    "family_dynamics",
    "social_context",
    "strengths_resources",
    "risk_factors",
    "clinical_hypotheses",
    "client_goals",
    "preferences_summary",
)


@dataclass(frozen=True)
class ContextMessage:
    role: str  # "client" | "agent"
    text: str
    ts: str


@dataclass
class ContextWindow:
    """The most recent messages preceding the current one (capacity 10)."""

    capacity: int = 10
    messages: list[ContextMessage] = field(default_factory=list)

    def push(self, role: str, text: str, ts: str) -> None:
        self.messages.append(ContextMessage(role, text, ts))
        if len(self.messages) > self.capacity:
            del self.messages[: len(self.messages) - self.capacity]

    def snapshot(self) -> "ContextWindow":
        return ContextWindow(capacity=self.capacity, messages=list(self.messages))

    def render(self) -> str:
        return "\n".join(f"{m.role}: {m.text}" for m in self.messages)


@dataclass
class CaseConceptualization:
    demographics: str = ""
    presenting_problem: str = ""
    problem_history: str = ""
    family_dynamics: str = ""
    social_context: str = ""
    strengths_resources: str = ""
    risk_factors: str = ""
    clinical_hypotheses: str = ""
    client_goals: str = ""
    preferences_summary: str = ""
    version: int = 0

    @property
    def completeness(self) -> float:
        filled = sum(1 for name in PROFILE_FIELDS if getattr(self, name))
        return filled / len(PROFILE_FIELDS)

    def summary(self) -> str:
        lines = [f"{name}: {getattr(self, name)}" for name in PROFILE_FIELDS if getattr(self, name)]
        return "\n".join(lines) if lines else "(no profile information yet)"

    def to_dict(self) -> dict:
        data = {name: getattr(self, name) for name in PROFILE_FIELDS}
        data["version"] = self.version
        data["completeness"] = self.completeness
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CaseConceptualization":
        kwargs = {name: data.get(name, "") for name in PROFILE_FIELDS}
        return cls(version=data.get("version", 0), **kwargs)


@dataclass
class SessionRecord:
    session_id: str
    key_topics: list[str] = field(default_factory=list)
    interventions: list[str] = field(default_factory=list)
    client_responses_summary: str = ""
    progress_markers: list[str] = field(default_factory=list)
    homework: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "key_topics": list(self.key_topics),
            "interventions": list(self.interventions),
            "client_responses_summary": self.client_responses_summary,
            "progress_markers": list(self.progress_markers),
            "homework": list(self.homework),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionRecord":
        return cls(
            session_id=data["session_id"],
            key_topics=list(data.get("key_topics", [])),
            interventions=list(data.get("interventions", [])),
            client_responses_summary=data.get("client_responses_summary", ""),
            progress_markers=list(data.get("progress_markers", [])),
            homework=list(data.get("homework", [])),
        )


@dataclass
class CounselingRecord:
    session_records: list[SessionRecord] = field(default_factory=list)
    cumulative_summary: str = ""
    version: int = 0

    def record_for(self, session_id: str) -> SessionRecord | None:
        for record in self.session_records:
            if record.session_id == session_id:
                return record
        return None

    def to_dict(self) -> dict:
        return {
            "session_records": [r.to_dict() for r in self.session_records],
            "cumulative_summary": self.cumulative_summary,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CounselingRecord":
        return cls(
            session_records=[SessionRecord.from_dict(r) for r in data.get("session_records", [])],
            cumulative_summary=data.get("cumulative_summary", ""),
            version=data.get("version", 0),
        )


@dataclass(frozen=True)
class PhaseDecision:
    phase: str
    rationale: str
    decided_turn: int
    regression: bool = False


def phase_for_completeness(completeness: float, middle_threshold: float) -> str:
    """The zero-history phase rule: assessment until the profile fills in."""
    return "initial" if completeness < middle_threshold else "middle"


_RECORD_LIST_FIELDS = ("key_topics", "interventions", "progress_markers", "homework")


class Profiler:
    def __init__(self, gateway: LlmGateway, config: EngineConfig | None = None):
        self.gateway = gateway
        self.config = config or EngineConfig()

    # -- document updates ------------------------------------------------------

    def update_documents(
        self,
        msg: str,
        ctx: ContextWindow,
        profile: CaseConceptualization,
        record: CounselingRecord,
        session_id: str,
    ) -> tuple[CaseConceptualization, CounselingRecord]:
        """Run both update stages and merge results field-wise.

        A field changes only when the completion supplies a non-empty value;
        versions bump iff something changed. Parse failures leave the
        document untouched. Always issues exactly two provider calls.
        """
        profile_completion = self.gateway.complete(prompts.profile_update_bundle(msg, ctx, profile))
        record_completion = self.gateway.complete(prompts.record_update_bundle(msg, ctx, record, session_id))

        new_profile = self._merge_profile(profile, profile_completion)
        new_record = self._merge_record(record, record_completion, session_id)
        return new_profile, new_record

    def _merge_profile(self, profile: CaseConceptualization, completion: str) -> CaseConceptualization:
        try:
            mapping = kv_map(parse_kv_lines(completion))
        except ParseError as exc:
            logger.warning("profile update unparseable, keeping previous version: %s", exc)
            return profile
        updates = {
            name: value
            for name, value in mapping.items()
            if name in PROFILE_FIELDS and value and value != getattr(profile, name)
        }
        if not updates:
            return profile
        return replace(profile, version=profile.version + 1, **updates)

    def _merge_record(self, record: CounselingRecord, completion: str, session_id: str) -> CounselingRecord:
        try:
            mapping = kv_map(parse_kv_lines(completion))
        except ParseError as exc:
            logger.warning("record update unparseable, keeping previous version: %s", exc)
            return record

        current = record.record_for(session_id)
        updated = SessionRecord.from_dict(current.to_dict()) if current else SessionRecord(session_id=session_id)
        changed = False
        for name in _RECORD_LIST_FIELDS:
            if mapping.get(name):
                values = split_list(mapping[name])
                if values and values != getattr(updated, name):
                    setattr(updated, name, values)
                    changed = True
        if mapping.get("client_responses_summary") and mapping["client_responses_summary"] != updated.client_responses_summary:
            updated.client_responses_summary = mapping["client_responses_summary"]
            changed = True

        new_summary = mapping.get("cumulative_summary", "")
        if not changed and (not new_summary or new_summary == record.cumulative_summary):
            return record

        records = [SessionRecord.from_dict(r.to_dict()) for r in record.session_records]
        if current is None:
            records.append(updated)
        else:
            records = [updated if r.session_id == session_id else r for r in records]
        if not new_summary:
            # Session content changed but no summary supplied: regenerate a
            # deterministic one so the cumulative view never goes stale.
            new_summary = self._render_cumulative(records)
        return CounselingRecord(
            session_records=records,
            cumulative_summary=new_summary,
            version=record.version + 1,
        )

    @staticmethod
    def _render_cumulative(records: list[SessionRecord]) -> str:
        lines = []
        for i, rec in enumerate(records, start=1):
            topics = ", ".join(rec.key_topics) if rec.key_topics else "general discussion"
            lines.append(f"Session {i}: {topics}")
        return "\n".join(lines)

    # -- phase control -----------------------------------------------------------

    def determine_phase(
        self,
        profile: CaseConceptualization,
        record: CounselingRecord,
        session_count: int,
        current_phase: str,
        turn_index: int,
    ) -> PhaseDecision:
        completeness = profile.completeness
        threshold = self.config.middle_threshold
        if completeness < threshold:
            computed = "initial"
            rationale = f"profile completeness {completeness:.1f} below {threshold}"
        elif session_count < self.config.min_sessions or current_phase == "ending":
            computed = "middle"
            rationale = f"profile complete enough ({completeness:.1f}); consolidation gate not met"
        else:
            try:
                completion = self.gateway.complete(
                    prompts.ending_check_bundle(record.cumulative_summary))
                answer = kv_map(parse_kv_lines(completion)).get("goals_substantially_achieved", "no")
            except (ProviderError, ParseError) as exc:
                logger.warning("ending check unavailable, holding phase: %s", exc)
                return PhaseDecision(current_phase, "ending check unavailable; holding phase", turn_index)
            if answer.strip().lower() == "yes":
                computed = "ending"
                rationale = "documented progress indicates goals substantially achieved"
            else:
                computed = "middle"
                rationale = "goals not yet substantially achieved"
        # Phases only move forward; regression is an explicit action.
        if PHASES.index(computed) < PHASES.index(current_phase):
            return PhaseDecision(current_phase, "holding phase (no automatic regression)", turn_index)
        return PhaseDecision(computed, rationale, turn_index)

    @staticmethod
    def regress_phase(to_phase: str, turn_index: int, reason: str) -> PhaseDecision:
        """Explicitly revisit an earlier phase. Never triggered automatically."""
        if to_phase not in PHASES:
            raise ValueError(f"unknown phase {to_phase!r}")
        return PhaseDecision(to_phase, reason, turn_index, regression=True)
