"""Session lifecycle and the per-turn pipeline tying all modules together.

Full-mode turns run: detect -> attitude + plan step -> retrieval -> response
composition -> reply, then post-turn document updates, cadence-gated
preference updates, and phase control. Ablated (baseline) turns are a single
respond call over the raw history with the plain supportive-counselor prompt.

A provider failure anywhere in a turn degrades that turn: the client gets a
fixed fallback reply, a degraded_turn event is logged, and no plan or
document mutation from the failed turn is committed. Sessions never crash on
provider failure.
"""

from __future__ import annotations

import logging
import secrets
import threading
from dataclasses import dataclass, field

from . import empathy, knowledge
from .analytics import EngagementMetrics, Message, compute_metrics
from .clock import SystemClock, format_ts, parse_ts
from .config import EngineConfig
from .empathy import ExpectationAdapters, PersonaConfig, PreferenceProfile, TurnAssessment
from .errors import ConflictError, NotFoundError
from .gateway import CallTrace, LlmGateway, PromptBundle, Provider
from .knowledge import KnowledgePack
from .planner import ActionItem, EscalationState, Planner, PlanRevision, TherapyPlan
from .profiler import (
    CaseConceptualization,
    ContextWindow,
    CounselingRecord,
    Profiler,
    phase_for_completeness,
)
from .storage import Store
from . import prompts

logger = logging.getLogger(__name__)

MODES = ("ca_plus", "baseline")

GREETING_CA_PLUS = (
    "Hello, I'm {name}. This is a space to talk through whatever is on your mind, "
    "at your own pace. What brings you here today?"
)
GREETING_BASELINE = "Hello! I'm here to support you. What's on your mind today?"

# Fixed and marked; never model-generated.
DEGRADED_REPLY = (
    "[degraded] I'm sorry, I'm having trouble forming a proper reply right now. "
    "Your message is saved. Please give me a moment and then share that again."
)
CLOSING_FALLBACK = "Thank you for today's session. Take good care of yourself until next time."
HOMEWORK_MARKER = "Homework:"


@dataclass
class SessionState:
    session_id: str
    client_id: str
    mode: str
    persona_id: str
    plan: TherapyPlan | None
    escalation: EscalationState | None
    ctx: ContextWindow
    turn_index: int
    started_at: str
    status: str  # open | idle_closed | ended
    phase: str
    last_activity: str

    def snapshot(self, transcript: list[Message], prior_action: ActionItem | None) -> dict:
        return {
            "session_id": self.session_id,
            "client_id": self.client_id,
            "mode": self.mode,
            "persona_id": self.persona_id,
            "status": self.status,
            "turn_index": self.turn_index,
            "started_at": self.started_at,
            "phase": self.phase,
            "ctx": [(m.role, m.text, m.ts) for m in self.ctx.messages],
            "transcript": [(m.role, m.text, m.ts) for m in transcript],
            "plan": self.plan.to_dict() if self.plan else None,
            "escalation": self.escalation.to_dict() if self.escalation else None,
            "prior_action": prior_action.to_dict() if prior_action else None,
        }

    def summary(self) -> dict:
        return {
            "session_id": self.session_id,
            "client_id": self.client_id,
            "mode": self.mode,
            "persona_id": self.persona_id,
            "status": self.status,
            "turn_index": self.turn_index,
            "started_at": self.started_at,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class TurnResult:
    agent_text: str
    action_executed: ActionItem | None
    assessment: TurnAssessment | None
    revisions: list[PlanRevision]
    knowledge_used: str | None
    risk_flag: bool
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "agent_text": self.agent_text,
            "action_executed": self.action_executed.to_dict() if self.action_executed else None,
            "assessment": self.assessment.to_dict() if self.assessment else None,
            "revisions": [r.to_dict() for r in self.revisions],
            "knowledge_used": self.knowledge_used,
            "risk_flag": self.risk_flag,
            "degraded": self.degraded,
        }


@dataclass
class LiveSession:
    state: SessionState
    gateway: LlmGateway
    trace: CallTrace
    transcript: list[Message] = field(default_factory=list)
    prior_action: ActionItem | None = None
    opened_with_recap: bool = False

    def snapshot(self) -> dict:
        return self.state.snapshot(self.transcript, self.prior_action)


class Engine:
    """Owns sessions, wiring each one to its own trace and the shared store."""

    def __init__(self, store: Store, provider: Provider, config: EngineConfig | None = None,
                 clock=None, personas: dict[str, PersonaConfig] | None = None,
                 pack: KnowledgePack | None = None):
        self.store = store
        self.provider = provider
        self.config = config or EngineConfig()
        self.clock = clock or SystemClock()
        self.personas = personas or dict(empathy.DEFAULT_PERSONAS)
        self.pack = pack if pack is not None else self._load_pack()
        self._sessions: dict[str, LiveSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _load_pack(self) -> KnowledgePack | None:
        path = self.store.pack_path()
        if path.exists():
            return KnowledgePack.load(path)
        return None

    def install_pack(self, pack: KnowledgePack) -> None:
        pack.save(self.store.pack_path())
        self.pack = pack

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    # -- clients ---------------------------------------------------------------

    def create_client(self, display_name: str, client_id: str | None = None,
                      token: str | None = None) -> dict:
        client_id = client_id or f"c{secrets.token_hex(4)}"
        token = token or secrets.token_hex(16)
        return self.store.create_client(
            display_name, client_id, token, format_ts(self.clock.now()))

    # -- session lifecycle -------------------------------------------------------

    def open_session(self, client_id: str, mode: str = "ca_plus",
                     persona_id: str = "ellis") -> LiveSession:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.store.get_client(client_id)
        persona = self._persona(persona_id) if mode == "ca_plus" else None
        self._reject_or_autoclose_open_sessions(client_id)

        existing = self.store.list_sessions(client_id)
        session_id = f"{client_id}-s{len(existing) + 1}"
        self.store.register_session(client_id, session_id)
        now = format_ts(self.clock.now())

        log = self.store.event_log(client_id, session_id)
        trace = CallTrace(sink=self.store.trace_sink(client_id, session_id))
        gateway = LlmGateway(self.provider, trace, self.clock)
        state = SessionState(
            session_id=session_id, client_id=client_id, mode=mode,
            persona_id=persona_id if mode == "ca_plus" else "",
            plan=None, escalation=None,
            ctx=ContextWindow(capacity=self.config.context_capacity),
            turn_index=0, started_at=now, status="open",
            phase="initial", last_activity=now,
        )
        live = LiveSession(state=state, gateway=gateway, trace=trace)
        log.append("system_note", {
            "note": "session_opened", "client_id": client_id, "mode": mode,
            "persona_id": state.persona_id,
        }, now)

        if mode == "baseline":
            self._say(live, GREETING_BASELINE, now)
        else:
            profile, record, _ = self._load_documents(client_id)
            state.phase = phase_for_completeness(profile.completeness, self.config.middle_threshold)
            planner = Planner(gateway, self.config)
            state.plan = planner.init_plan(profile, state.ctx, turn_index=0, phase=state.phase)
            state.escalation = EscalationState()
            if record.cumulative_summary:
                opening = self._recap_message(live, persona, record)
                live.opened_with_recap = True
            else:
                opening = GREETING_CA_PLUS.format(name=persona.display_name)
            self._say(live, opening, now)
            self._save_plan_doc(live)

        self._sessions[session_id] = live
        return live

    def _reject_or_autoclose_open_sessions(self, client_id: str) -> None:
        for session_id in self.store.list_sessions(client_id):
            live = self._restore_or_live(session_id)
            if live.state.status != "open":
                continue
            idle_min = (self.clock.now() - parse_ts(live.state.last_activity)).total_seconds() / 60.0
            if idle_min > self.config.auto_close_min:
                self._finalize(live, status="idle_closed", reason="idle timeout")
            else:
                raise ConflictError(f"client {client_id} already has open session {session_id}")

    def _recap_message(self, live: LiveSession, persona: PersonaConfig,
                       record: CounselingRecord) -> str:
        system_text = self._persona_system(persona)
        bundle = prompts.recap_bundle(system_text, record.cumulative_summary, persona.display_name)
        try:
            return live.gateway.complete(bundle)
        except Exception as exc:
            logger.warning("recap generation failed, using greeting: %s", exc)
            return GREETING_CA_PLUS.format(name=persona.display_name)

    def _persona(self, persona_id: str) -> PersonaConfig:
        if persona_id not in self.personas:
            raise NotFoundError(f"no persona {persona_id}")
        return self.personas[persona_id]

    def _persona_system(self, persona: PersonaConfig) -> str:
        return (
            f"{empathy.S_FOUNDATION} {persona.foundation_prompt}\n\n"
            f"{empathy.S_STYLE} {persona.style_prompt}"
        )

    # -- message handling -----------------------------------------------------------

    def handle_message(self, session_id: str, text: str) -> TurnResult:
        with self._lock(session_id):
            live = self._restore_or_live(session_id)
            if live.state.status != "open":
                raise ConflictError(f"session {session_id} is {live.state.status}")
            if live.state.mode == "baseline":
                return self._baseline_turn(live, text)
            return self._ca_plus_turn(live, text)

    def _baseline_turn(self, live: LiveSession, text: str) -> TurnResult:
        state = live.state
        now = format_ts(self.clock.now())
        live.trace.set_turn(state.turn_index)
        self._log(live, "client_msg", {"text": text}, now)
        state.ctx.push("client", text, now)
        live.transcript.append(Message("client", text, now))

        history = "\n".join(f"{m.role}: {m.text}" for m in live.transcript)
        bundle = PromptBundle("respond", prompts.BASELINE_SYSTEM_PROMPT, history, prompts.DEFAULT_PARAMS)
        degraded_stage = None
        try:
            agent_text = live.gateway.complete(bundle)
        except Exception as exc:
            logger.warning("baseline respond failed, degrading turn: %s", exc)
            agent_text, degraded_stage = DEGRADED_REPLY, "respond"

        self._say(live, agent_text, now)
        if degraded_stage:
            self._log(live, "degraded_turn", {"stage": degraded_stage}, now)
        state.turn_index += 1
        state.last_activity = now
        return TurnResult(agent_text, None, None, [], None, False, degraded=degraded_stage is not None)

    def _ca_plus_turn(self, live: LiveSession, text: str) -> TurnResult:
        state = live.state
        now = format_ts(self.clock.now())
        turn = state.turn_index
        live.trace.set_turn(turn)
        ctx_prior = state.ctx.snapshot()
        self._log(live, "client_msg", {"text": text}, now)
        state.ctx.push("client", text, now)
        live.transcript.append(Message("client", text, now))

        persona = self._persona(state.persona_id)
        planner = Planner(live.gateway, self.config)
        profiler = Profiler(live.gateway, self.config)
        profile, record, prefs = self._load_documents(state.client_id)

        stage = "detect"
        try:
            assessment = empathy.detect(live.gateway, text, ctx_prior)

            stage = "evaluate_attitude"
            verdict = planner.evaluate_attitude(text, live.prior_action, ctx_prior)

            stage = "plan_step"
            outcome = planner.step(text, verdict, state.plan, state.escalation, ctx_prior, turn)

            stage = "retrieve"
            query = knowledge.build_query(
                live.gateway, ctx_prior, profile, outcome.action.directive,
                persona.approach, state.phase)
            results = knowledge.retrieve(
                query, self.pack or KnowledgePack(),
                k=self.config.retrieval_k, min_score=self.config.min_score)
            top = results[0] if results else None

            stage = "respond"
            blend = empathy.select_strategy(
                assessment, self.config.intensity_threshold, self.config.guidance_intensity_max)
            bundle = empathy.compose_response_prompt(
                persona, ExpectationAdapters.ca_plus(), blend, outcome.action.directive,
                top, prefs, ctx_prior, profile.summary(), text)
            agent_text = live.gateway.complete(bundle)

            stage = "profile_update"
            new_profile, new_record = profiler.update_documents(
                text, ctx_prior, profile, record, state.session_id)

            stage = "personalize"
            new_prefs = prefs
            if empathy.should_update_preferences(turn + 1, self.config.personalize_cadence):
                new_prefs = empathy.update_preferences(live.gateway, ctx_prior, prefs)

            stage = "determine_phase"
            session_count = len(self.store.list_sessions(state.client_id))
            decision = profiler.determine_phase(
                new_profile, new_record, session_count, state.phase, turn)
        except Exception as exc:
            logger.warning("turn %d degraded at stage %s: %s", turn, stage, exc)
            self._say(live, DEGRADED_REPLY, now)
            self._log(live, "degraded_turn", {"stage": stage, "error": str(exc)}, now)
            state.turn_index += 1
            state.last_activity = now
            return TurnResult(DEGRADED_REPLY, None, None, [], None, False, degraded=True)

        # Commit: nothing above mutated shared state.
        state.plan = outcome.plan
        state.escalation = outcome.escalation
        live.prior_action = outcome.action
        for revision in outcome.revisions:
            self._log(live, "plan_revision", revision.to_dict(), now)
        if decision.phase != state.phase:
            self._log(live, "phase_change", {
                "from": state.phase, "to": decision.phase, "rationale": decision.rationale,
            }, now)
            state.phase = decision.phase
            state.plan.goal.phase = decision.phase
        self._say(live, agent_text, now)
        self._save_documents(state.client_id, profile, new_profile, record, new_record, prefs, new_prefs)
        self._save_plan_doc(live)
        state.turn_index += 1
        state.last_activity = now
        knowledge_used = top.entry.entry_id if (top and blend.mode != "empathy_first") else None
        return TurnResult(
            agent_text=agent_text,
            action_executed=outcome.action,
            assessment=assessment,
            revisions=outcome.revisions,
            knowledge_used=knowledge_used,
            risk_flag=assessment.risk_flag,
        )

    # -- closing ------------------------------------------------------------------

    def close_session(self, session_id: str, reason: str = "client_request") -> dict:
        with self._lock(session_id):
            live = self._restore_or_live(session_id)
            state = live.state
            if state.status != "open":
                raise ConflictError(f"session {session_id} is {state.status}")
            now = format_ts(self.clock.now())
            closing_message = None
            if state.mode == "ca_plus":
                live.trace.set_turn(state.turn_index)
                persona = self._persona(state.persona_id)
                profile, record, prefs = self._load_documents(state.client_id)
                session_record = record.record_for(state.session_id)
                notes = ", ".join(session_record.key_topics) if session_record and session_record.key_topics \
                    else "(no recorded topics)"
                try:
                    summary_text = live.gateway.complete(
                        prompts.closing_bundle(self._persona_system(persona), state.ctx, notes))
                except Exception as exc:
                    logger.warning("closing summary failed, using fallback: %s", exc)
                    summary_text = CLOSING_FALLBACK
                homework = session_record.homework if session_record and session_record.homework \
                    else ["Reflect on what we discussed today and note anything that shifts."]
                closing_message = summary_text + "\n\n" + HOMEWORK_MARKER + "\n" + \
                    "\n".join(f"- {item}" for item in homework)
                self._say(live, closing_message, now)
                try:
                    new_prefs = empathy.update_preferences(live.gateway, state.ctx, prefs)
                    if new_prefs.version != prefs.version:
                        self._save_doc(state.client_id, "preferences", new_prefs.to_dict())
                except Exception as exc:
                    logger.warning("session-end preference update failed: %s", exc)
            self._finalize(live, status="ended", reason=reason)
            return {
                "session_id": session_id,
                "status": live.state.status,
                "turns": state.turn_index,
                "closing_message": closing_message,
            }

    def _finalize(self, live: LiveSession, status: str, reason: str) -> None:
        now = format_ts(self.clock.now())
        self._log(live, "system_note", {"note": "session_closed", "status": status, "reason": reason}, now)
        live.state.status = status
        live.state.last_activity = now

    def sweep_idle(self) -> list[str]:
        """Close every open session idle past the auto-close threshold."""
        closed = []
        for client_id in self.store.list_clients():
            for session_id in self.store.list_sessions(client_id):
                live = self._restore_or_live(session_id)
                if live.state.status != "open":
                    continue
                idle_min = (self.clock.now() - parse_ts(live.state.last_activity)).total_seconds() / 60.0
                if idle_min > self.config.auto_close_min:
                    self._finalize(live, status="idle_closed", reason="idle timeout")
                    closed.append(session_id)
        return closed

    # -- reads ------------------------------------------------------------------------

    def get_session(self, session_id: str) -> LiveSession:
        return self._restore_or_live(session_id)

    def transcript(self, session_id: str) -> list[Message]:
        return list(self._restore_or_live(session_id).transcript)

    def session_metrics(self, session_id: str) -> EngagementMetrics:
        live = self._restore_or_live(session_id)
        return compute_metrics(live.transcript, self.config.idle_threshold_min)

    def profile_bundle(self, client_id: str) -> dict:
        self.store.get_client(client_id)
        profile, record, prefs = self._load_documents(client_id)
        return {
            "profile": profile.to_dict(),
            "record": record.to_dict(),
            "preferences": prefs.to_dict(),
        }

    def load_session(self, session_id: str) -> LiveSession:
        """Reconstruct session state purely from storage (ignores the live cache)."""
        return self._restore(session_id)

    # -- persistence helpers -------------------------------------------------------------

    def _log(self, live: LiveSession, kind: str, payload: dict, ts: str) -> None:
        self.store.event_log(live.state.client_id, live.state.session_id).append(kind, payload, ts)

    def _say(self, live: LiveSession, text: str, ts: str) -> None:
        self._log(live, "agent_msg", {"text": text}, ts)
        live.state.ctx.push("agent", text, ts)
        live.transcript.append(Message("agent", text, ts))

    def _load_documents(self, client_id: str) -> tuple[CaseConceptualization, CounselingRecord, PreferenceProfile]:
        profile_doc = self.store.load_document(client_id, "profile")
        record_doc = self.store.load_document(client_id, "record")
        prefs_doc = self.store.load_document(client_id, "preferences")
        profile = CaseConceptualization.from_dict(profile_doc.body) if profile_doc else CaseConceptualization()
        record = CounselingRecord.from_dict(record_doc.body) if record_doc else CounselingRecord()
        prefs = PreferenceProfile.from_dict(prefs_doc.body) if prefs_doc else PreferenceProfile()
        return profile, record, prefs

    def _save_doc(self, client_id: str, kind: str, body: dict) -> None:
        existing = self.store.load_document(client_id, kind)
        version = existing.version + 1 if existing else 1
        self.store.save_document(client_id, kind, version, body, format_ts(self.clock.now()))

    def _save_documents(self, client_id, profile, new_profile, record, new_record, prefs, new_prefs) -> None:
        if new_profile.version != profile.version:
            self._save_doc(client_id, "profile", new_profile.to_dict())
        if new_record.version != record.version:
            self._save_doc(client_id, "record", new_record.to_dict())
        if new_prefs.version != prefs.version:
            self._save_doc(client_id, "preferences", new_prefs.to_dict())

    def _save_plan_doc(self, live: LiveSession) -> None:
        state = live.state
        self._save_doc(state.client_id, "plan", {
            "session_id": state.session_id,
            "plan": state.plan.to_dict() if state.plan else None,
            "escalation": state.escalation.to_dict() if state.escalation else None,
            "phase": state.phase,
            "prior_action": live.prior_action.to_dict() if live.prior_action else None,
        })

    # -- restoration ------------------------------------------------------------------------

    def _restore_or_live(self, session_id: str) -> LiveSession:
        if session_id in self._sessions:
            return self._sessions[session_id]
        live = self._restore(session_id)
        self._sessions[session_id] = live
        return live

    def _restore(self, session_id: str) -> LiveSession:
        client_id = self.store.client_for_session(session_id)
        log = self.store.event_log(client_id, session_id)
        events = log.read_all()
        if not events:
            raise NotFoundError(f"session {session_id} has an empty log")
        opening = events[0]
        if opening.kind != "system_note" or opening.payload.get("note") != "session_opened":
            raise NotFoundError(f"session {session_id} log has no opening note")

        mode = opening.payload["mode"]
        persona_id = opening.payload.get("persona_id", "")
        ctx = ContextWindow(capacity=self.config.context_capacity)
        transcript: list[Message] = []
        turn_index = 0
        status = "open"
        last_activity = opening.ts
        for event in events:
            last_activity = event.ts
            if event.kind == "client_msg":
                ctx.push("client", event.payload["text"], event.ts)
                transcript.append(Message("client", event.payload["text"], event.ts))
                turn_index += 1
            elif event.kind == "agent_msg":
                ctx.push("agent", event.payload["text"], event.ts)
                transcript.append(Message("agent", event.payload["text"], event.ts))
            elif event.kind == "system_note" and event.payload.get("note") == "session_closed":
                status = event.payload.get("status", "ended")

        plan = None
        escalation = None
        prior_action = None
        phase = "initial"
        if mode == "ca_plus":
            plan_doc = self.store.load_document(client_id, "plan")
            if plan_doc and plan_doc.body.get("session_id") == session_id:
                body = plan_doc.body
                plan = TherapyPlan.from_dict(body["plan"]) if body.get("plan") else None
                escalation = EscalationState.from_dict(body["escalation"]) if body.get("escalation") else None
                phase = body.get("phase", "initial")
                if body.get("prior_action"):
                    prior_action = ActionItem(**body["prior_action"])
            else:
                profile = self._load_documents(client_id)[0]
                phase = phase_for_completeness(profile.completeness, self.config.middle_threshold)

        trace = CallTrace(sink=self.store.trace_sink(client_id, session_id))
        existing_trace = self.store.read_trace(client_id, session_id)
        if existing_trace:
            trace.set_turn(existing_trace[-1]["turn_index"])
        state = SessionState(
            session_id=session_id, client_id=client_id, mode=mode, persona_id=persona_id,
            plan=plan, escalation=escalation, ctx=ctx, turn_index=turn_index,
            started_at=opening.ts, status=status, phase=phase, last_activity=last_activity,
        )
        return LiveSession(
            state=state,
            gateway=LlmGateway(self.provider, trace, self.clock),
            trace=trace,
            transcript=transcript,
            prior_action=prior_action,
        )
