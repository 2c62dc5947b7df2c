"""Three-layer therapy planning with top-down generation and bottom-up escalation.

A goal spans the therapy; an agenda structures the session; an action sequence
holds concrete single-turn moves with a cursor pointing at the move currently
in play. Positive or neutral reactions advance the cursor (generating the next
sequence when one runs out); confident negative reactions escalate by
consecutive count: first regenerate the actions, then the agenda, then adjust
the goal itself.

Each escalation revises exactly one layer in place (same id, revision + 1) and
logs one PlanRevision; layers below it are freshly derived under new ids with
their revision counters carried over, so the revision log stays an exact
per-layer change count. step() never mutates its inputs: callers adopt the
returned plan, which makes a mid-escalation provider failure all-or-nothing.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace

from .config import EngineConfig
from .errors import ParseError, PlanError
from .gateway import LlmGateway, kv_map, parse_kv_lines, parse_structured
from .profiler import CaseConceptualization, ContextWindow, phase_for_completeness
from . import prompts

logger = logging.getLogger(__name__)

LAYERS = ("action", "session", "goal")


@dataclass
class TherapyGoal:
    goal_id: str
    statement: str
    phase: str
    created_turn: int
    revision: int = 0


@dataclass
class SessionAgenda:
    agenda_id: str
    parent_goal_id: str
    items: list[str]
    revision: int = 0


@dataclass(frozen=True)
class ActionItem:
    technique: str
    directive: str

    def to_dict(self) -> dict:
        return {"technique": self.technique, "directive": self.directive}


@dataclass
class ActionSequence:
    seq_id: str
    parent_agenda_id: str
    actions: list[ActionItem]
    cursor: int = 0
    revision: int = 0

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.actions)


@dataclass(frozen=True)
class AttitudeVerdict:
    attitude: str
    confidence: float


NEUTRAL_VERDICT = AttitudeVerdict("neutral", 0.0)


@dataclass
class EscalationState:
    consecutive_negatives: int = 0
    last_agenda_adjust_turn: int = -1
    last_goal_adjust_turn: int = -1

    def to_dict(self) -> dict:
        return {
            "consecutive_negatives": self.consecutive_negatives,
            "last_agenda_adjust_turn": self.last_agenda_adjust_turn,
            "last_goal_adjust_turn": self.last_goal_adjust_turn,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EscalationState":
        return cls(
            consecutive_negatives=data.get("consecutive_negatives", 0),
            last_agenda_adjust_turn=data.get("last_agenda_adjust_turn", -1),
            last_goal_adjust_turn=data.get("last_goal_adjust_turn", -1),
        )


@dataclass(frozen=True)
class PlanRevision:
    turn_index: int
    layer: str
    reason: str
    before_revision: int
    after_revision: int

    def to_dict(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "layer": self.layer,
            "reason": self.reason,
            "before_revision": self.before_revision,
            "after_revision": self.after_revision,
        }


@dataclass
class TherapyPlan:
    goal: TherapyGoal
    agenda: SessionAgenda
    actions: ActionSequence
    revisions: list[PlanRevision] = field(default_factory=list)
    steps_taken: int = 0
    next_agenda_no: int = 2
    next_seq_no: int = 2

    def mint_agenda_id(self) -> str:
        agenda_id = f"agenda-{self.next_agenda_no}"
        self.next_agenda_no += 1
        return agenda_id

    def mint_seq_id(self) -> str:
        seq_id = f"seq-{self.next_seq_no}"
        self.next_seq_no += 1
        return seq_id

    @property
    def current_action(self) -> ActionItem:
        return self.actions.actions[self.actions.cursor]

    def to_dict(self) -> dict:
        return {
            "goal": {
                "goal_id": self.goal.goal_id,
                "statement": self.goal.statement,
                "phase": self.goal.phase,
                "created_turn": self.goal.created_turn,
                "revision": self.goal.revision,
            },
            "agenda": {
                "agenda_id": self.agenda.agenda_id,
                "parent_goal_id": self.agenda.parent_goal_id,
                "items": list(self.agenda.items),
                "revision": self.agenda.revision,
            },
            "actions": {
                "seq_id": self.actions.seq_id,
                "parent_agenda_id": self.actions.parent_agenda_id,
                "actions": [a.to_dict() for a in self.actions.actions],
                "cursor": self.actions.cursor,
                "revision": self.actions.revision,
            },
            "revisions": [r.to_dict() for r in self.revisions],
            "steps_taken": self.steps_taken,
            "next_agenda_no": self.next_agenda_no,
            "next_seq_no": self.next_seq_no,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TherapyPlan":
        goal = TherapyGoal(**data["goal"])
        agenda = SessionAgenda(**data["agenda"])
        actions_data = dict(data["actions"])
        actions_data["actions"] = [ActionItem(**a) for a in actions_data["actions"]]
        actions = ActionSequence(**actions_data)
        revisions = [PlanRevision(**r) for r in data.get("revisions", [])]
        return cls(
            goal=goal,
            agenda=agenda,
            actions=actions,
            revisions=revisions,
            steps_taken=data.get("steps_taken", 0),
            next_agenda_no=data.get("next_agenda_no", 2),
            next_seq_no=data.get("next_seq_no", 2),
        )


@dataclass(frozen=True)
class StepOutcome:
    action: ActionItem
    plan: TherapyPlan
    escalation: EscalationState
    revisions: list[PlanRevision]


class Planner:
    def __init__(self, gateway: LlmGateway, config: EngineConfig | None = None):
        self.gateway = gateway
        self.config = config or EngineConfig()

    # -- generation helpers ----------------------------------------------------

    def _generate_goal_statement(self, profile: CaseConceptualization, phase: str,
                                 ctx: ContextWindow) -> str:
        bundle = prompts.goal_bundle(profile.summary(), phase, ctx)
        for attempt in range(2):
            completion = self.gateway.complete(bundle)
            try:
                statement = kv_map(parse_kv_lines(completion)).get("statement", "").strip()
            except ParseError:
                statement = ""
            if statement:
                return statement
        raise PlanError("goal generation produced an empty statement twice")

    def _generate_agenda_items(self, goal_statement: str, ctx: ContextWindow) -> list[str]:
        bundle = prompts.agenda_bundle(goal_statement, self.config.max_agenda_items, ctx)
        for attempt in range(2):
            completion = self.gateway.complete(bundle)
            try:
                pairs = parse_kv_lines(completion)
            except ParseError:
                pairs = []
            items = [value for key, value in pairs if key == "item" and value.strip()]
            if items:
                return items[: self.config.max_agenda_items]
        raise PlanError("agenda generation produced no items twice")

    def _generate_actions(self, agenda_items: list[str], ctx: ContextWindow) -> list[ActionItem]:
        bundle = prompts.actions_bundle(agenda_items, ctx)
        for attempt in range(2):
            completion = self.gateway.complete(bundle)
            try:
                pairs = parse_kv_lines(completion)
            except ParseError:
                pairs = []
            actions: list[ActionItem] = []
            for key, value in pairs:
                if key != "action":
                    continue
                technique, sep, directive = value.partition("::")
                if not sep:
                    technique, directive = "counseling move", value
                technique, directive = technique.strip(), directive.strip()
                if directive:
                    actions.append(ActionItem(technique=technique or "counseling move", directive=directive))
            if actions:
                return actions
        raise PlanError("action generation produced no usable moves twice")

    # -- operations --------------------------------------------------------------

    def init_plan(self, profile: CaseConceptualization, ctx: ContextWindow,
                  turn_index: int = 0, phase: str | None = None) -> TherapyPlan:
        """Top-down derivation: goal, agenda from goal, actions from agenda."""
        if phase is None:
            phase = phase_for_completeness(profile.completeness, self.config.middle_threshold)
        statement = self._generate_goal_statement(profile, phase, ctx)
        goal = TherapyGoal(goal_id="goal-1", statement=statement, phase=phase, created_turn=turn_index)
        items = self._generate_agenda_items(statement, ctx)
        agenda = SessionAgenda(agenda_id="agenda-1", parent_goal_id=goal.goal_id, items=items)
        actions = self._generate_actions(items, ctx)
        seq = ActionSequence(seq_id="seq-1", parent_agenda_id=agenda.agenda_id, actions=actions)
        return TherapyPlan(goal=goal, agenda=agenda, actions=seq)

    def evaluate_attitude(self, fb: str, prior_action: ActionItem | None,
                          ctx: ContextWindow) -> AttitudeVerdict:
        """Judge the client's reaction to the previous move.

        Before any move has been made there is nothing to evaluate: returns
        neutral without a provider call. Parse failures fail open to neutral.
        """
        if prior_action is None:
            return NEUTRAL_VERDICT
        completion = self.gateway.complete(prompts.attitude_bundle(fb, prior_action.directive, ctx))
        try:
            fields = parse_structured("evaluate_attitude", completion)
        except ParseError as exc:
            logger.warning("attitude completion unparseable, treating as neutral: %s", exc)
            return NEUTRAL_VERDICT
        return AttitudeVerdict(attitude=fields["attitude"], confidence=fields["confidence"])

    def step(self, msg: str, verdict: AttitudeVerdict, plan: TherapyPlan,
             escalation: EscalationState, ctx: ContextWindow, turn_index: int) -> StepOutcome:
        """Advance the plan one turn and return the move to execute."""
        plan = copy.deepcopy(plan)
        escalation = replace(escalation)
        revisions: list[PlanRevision] = []
        # Uncertain negative reads are treated as neutral to avoid plan churn.
        confident_negative = verdict.attitude == "negative" and verdict.confidence >= 0.5

        if confident_negative:
            escalation.consecutive_negatives += 1
            negatives = escalation.consecutive_negatives
            t_action, t_session, t_goal = self.config.escalation_thresholds
            if negatives >= t_goal:
                revisions.append(self._escalate_goal(plan, msg, ctx, turn_index))
                escalation.consecutive_negatives = 0
                escalation.last_goal_adjust_turn = turn_index
            elif negatives >= t_session:
                revisions.append(self._escalate_session(plan, ctx, turn_index))
                escalation.last_agenda_adjust_turn = turn_index
            elif negatives >= t_action:
                revisions.append(self._escalate_action(plan, ctx, turn_index))
            else:
                self._advance(plan, ctx)
        else:
            escalation.consecutive_negatives = 0
            self._advance(plan, ctx)

        plan.steps_taken += 1
        plan.revisions.extend(revisions)
        return StepOutcome(action=plan.current_action, plan=plan,
                           escalation=escalation, revisions=revisions)

    # -- internal transitions ------------------------------------------------------

    def _advance(self, plan: TherapyPlan, ctx: ContextWindow) -> None:
        # The very first step executes the initial sequence's first move.
        if plan.steps_taken == 0:
            return
        seq = plan.actions
        seq.cursor += 1
        if seq.exhausted:
            # Forward planning: a fresh sequence, no revision of agenda or goal.
            actions = self._generate_actions(plan.agenda.items, ctx)
            plan.actions = ActionSequence(
                seq_id=plan.mint_seq_id(),
                parent_agenda_id=plan.agenda.agenda_id,
                actions=actions,
                cursor=0,
                revision=seq.revision,
            )

    def _escalate_action(self, plan: TherapyPlan, ctx: ContextWindow, turn_index: int) -> PlanRevision:
        before = plan.actions.revision
        actions = self._generate_actions(plan.agenda.items, ctx)
        plan.actions = ActionSequence(
            seq_id=plan.actions.seq_id,
            parent_agenda_id=plan.agenda.agenda_id,
            actions=actions,
            cursor=0,
            revision=before + 1,
        )
        return PlanRevision(turn_index, "action", "negative reaction to current move",
                            before, before + 1)

    def _escalate_session(self, plan: TherapyPlan, ctx: ContextWindow, turn_index: int) -> PlanRevision:
        before = plan.agenda.revision
        items = self._generate_agenda_items(plan.goal.statement, ctx)
        actions = self._generate_actions(items, ctx)
        plan.agenda = SessionAgenda(
            agenda_id=plan.agenda.agenda_id,
            parent_goal_id=plan.goal.goal_id,
            items=items,
            revision=before + 1,
        )
        plan.actions = ActionSequence(
            seq_id=plan.mint_seq_id(),
            parent_agenda_id=plan.agenda.agenda_id,
            actions=actions,
            cursor=0,
            revision=plan.actions.revision,
        )
        return PlanRevision(turn_index, "session", "sustained negative reactions within session",
                            before, before + 1)

    def _escalate_goal(self, plan: TherapyPlan, fb: str, ctx: ContextWindow, turn_index: int) -> PlanRevision:
        before = plan.goal.revision
        completion = self.gateway.complete(prompts.adjust_goal_bundle(plan.goal.statement, fb, ctx))
        try:
            statement = kv_map(parse_kv_lines(completion)).get("statement", "").strip()
        except ParseError:
            statement = ""
        if not statement:
            raise PlanError("goal adjustment produced an empty statement")
        items = self._generate_agenda_items(statement, ctx)
        actions = self._generate_actions(items, ctx)
        plan.goal.statement = statement
        plan.goal.revision = before + 1
        plan.agenda = SessionAgenda(
            agenda_id=plan.mint_agenda_id(),
            parent_goal_id=plan.goal.goal_id,
            items=items,
            revision=plan.agenda.revision,
        )
        plan.actions = ActionSequence(
            seq_id=plan.mint_seq_id(),
            parent_agenda_id=plan.agenda.agenda_id,
            actions=actions,
            cursor=0,
            revision=plan.actions.revision,
        )
        return PlanRevision(turn_index, "goal", "persistent pattern change in client reactions",
                            before, before + 1)
