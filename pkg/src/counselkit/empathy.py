"""Per-turn emotional reading, strategy selection, persona, and prompt composition.

Each turn the client's message is read for emotion, intensity, and stance.
Severe negative emotion (or any risk flag) puts the turn in empathy-first
mode, which suppresses new guidance for that turn; a receptive, low-intensity
client gets guidance-forward; everything else blends both. The final respond
prompt is assembled in a fixed, sentinel-marked section order so tests can
assert exact containment.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ParseError
from .gateway import LlmGateway, kv_map, parse_kv_lines, split_list, PromptBundle
from .profiler import ContextWindow
from .knowledge import RetrievalResult
from . import prompts

logger = logging.getLogger(__name__)

# Emotions treated as negative-valence for strategy selection; anything the
# detect stage emits outside this table counts as neutral valence.
NEGATIVE_VALENCE = frozenset({"sadness", "anger", "fear", "anxiety", "shame", "disgust", "grief"})

MODES = ("empathy_first", "blended", "guidance_forward")

# Sentinel markers; each prompt section opens with one so containment is testable.
S_FOUNDATION = "[persona:foundation]"
S_STYLE = "[persona:style]"
S_ADAPTER_INFO = "[adapter:informational]"
S_ADAPTER_SERVICE = "[adapter:service_stance]"
S_ADAPTER_BURDEN = "[adapter:low_social_burden]"
S_ADAPTER_INTIMACY = "[adapter:intimacy_handling]"
S_EMPATHY = "[strategy:empathy]"
S_GUIDANCE = "[strategy:guidance]"
S_KNOWLEDGE = "[knowledge]"
S_PREFERENCES = "[preferences]"

ADAPTER_DIRECTIVES = {
    "informational": (
        f"{S_ADAPTER_INFO} Offer concrete information and evidence-based suggestions with "
        "more specificity and detail than a typical conversational reply; clients come to "
        "an AI counselor expecting substance."
    ),
    "service_stance": (
        f"{S_ADAPTER_SERVICE} Position yourself as a helpful, service-oriented assistant. "
        "Accept the client's directive style gracefully and defer on process while keeping "
        "therapeutic value intact."
    ),
    "low_social_burden": (
        f"{S_ADAPTER_BURDEN} Make explicit that asking for more, repeating, or venting at "
        "length costs nothing here; remove any sense that the client could be a bother."
    ),
    "intimacy_handling": (
        f"{S_ADAPTER_INTIMACY} Clients may disclose sensitive matters unusually early. "
        "Receive such disclosures steadily and without alarm, honoring privacy and "
        "professional boundaries."
    ),
}


@dataclass(frozen=True)
class TurnAssessment:
    primary_emotion: str
    intensity: float
    stance: str
    risk_flag: bool

    def to_dict(self) -> dict:
        return {
            "primary_emotion": self.primary_emotion,
            "intensity": self.intensity,
            "stance": self.stance,
            "risk_flag": self.risk_flag,
        }


NEUTRAL_ASSESSMENT = TurnAssessment("unknown", 0.0, "neutral", False)


@dataclass
class PreferenceProfile:
    learning_style: str = ""
    communication_preferences: str = ""
    topic_sensitivities: list[str] | tuple[str, ...] = ()
    empathy_language: str = ""
    boundaries: list[str] | tuple[str, ...] = ()
    version: int = 0

    def to_dict(self) -> dict:
        return {
            "learning_style": self.learning_style,
            "communication_preferences": self.communication_preferences,
            "topic_sensitivities": list(self.topic_sensitivities),
            "empathy_language": self.empathy_language,
            "boundaries": list(self.boundaries),
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PreferenceProfile":
        return cls(
            learning_style=data.get("learning_style", ""),
            communication_preferences=data.get("communication_preferences", ""),
            topic_sensitivities=tuple(data.get("topic_sensitivities", ())),
            empathy_language=data.get("empathy_language", ""),
            boundaries=tuple(data.get("boundaries", ())),
            version=data.get("version", 0),
        )

    def summary(self) -> str:
        parts = []
        if self.learning_style:
            parts.append(f"learning style: {self.learning_style}")
        if self.communication_preferences:
            parts.append(f"communication: {self.communication_preferences}")
        if self.topic_sensitivities:
            parts.append("sensitive topics: " + ", ".join(self.topic_sensitivities))
        if self.empathy_language:
            parts.append(f"empathy language: {self.empathy_language}")
        if self.boundaries:
            parts.append("boundaries: " + ", ".join(self.boundaries))
        return "; ".join(parts)


@dataclass(frozen=True)
class PersonaConfig:
    persona_id: str
    display_name: str
    foundation_prompt: str
    style_prompt: str
    approach: str

    def __post_init__(self):
        if not self.foundation_prompt or not self.style_prompt:
            raise ValueError("persona prompts must be non-empty")


# Shipped default: a persona in the mold of Albert Ellis, the founder of
# rational emotive behavior therapy.
ELLIS_PERSONA = PersonaConfig(
    persona_id="ellis",
    display_name="Dr. Ellis",
    foundation_prompt=(
        "You are a seasoned counselor working in the rational emotive behavior therapy "
        "tradition. You help clients notice the beliefs behind their distress, dispute "
        "rigid demands, and build more flexible, self-accepting thinking. You follow "
        "standard therapeutic ethics: no diagnoses, no medical claims, confidentiality, "
        "and unconditional positive regard. " + prompts.GROUNDING_GUARDRAIL
    ),
    style_prompt=(
        "Speak plainly and directly, with warmth under the bluntness. Use vivid, "
        "down-to-earth language, gentle humor, and the occasional memorable aphorism. "
        "Challenge ideas, never the person."
    ),
    approach="REBT",
)

DEFAULT_PERSONAS = {ELLIS_PERSONA.persona_id: ELLIS_PERSONA}


def load_personas(path: str | Path) -> dict[str, PersonaConfig]:
    """Load persona records (persona_id, display_name, prompts, approach) from JSON."""
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    personas = {}
    for record in records:
        persona = PersonaConfig(
            persona_id=record["persona_id"],
            display_name=record["display_name"],
            foundation_prompt=record["foundation_prompt"],
            style_prompt=record["style_prompt"],
            approach=record["approach"],
        )
        personas[persona.persona_id] = persona
    return personas


@dataclass(frozen=True)
class ExpectationAdapters:
    informational: bool
    service_stance: bool
    low_social_burden: bool
    intimacy_handling: bool

    @classmethod
    def ca_plus(cls) -> "ExpectationAdapters":
        return cls(True, True, True, True)

    @classmethod
    def baseline(cls) -> "ExpectationAdapters":
        return cls(False, False, False, False)

    def any_active(self) -> bool:
        return self.informational or self.service_stance or self.low_social_burden or self.intimacy_handling


@dataclass(frozen=True)
class StrategyBlend:
    mode: str
    empathy_directive: str
    guidance_directive: str

    def __post_init__(self):
        if self.mode == "empathy_first" and self.guidance_directive:
            raise ValueError("empathy_first suppresses guidance for the turn")


def detect(gateway: LlmGateway, msg: str, ctx: ContextWindow) -> TurnAssessment:
    """One detect-stage call; unparseable completions fall back to the neutral read."""
    completion = gateway.complete(prompts.detect_bundle(msg, ctx))
    try:
        from .gateway import parse_structured

        fields = parse_structured("detect", completion)
    except ParseError as exc:
        logger.warning("detect completion unparseable, using neutral assessment: %s", exc)
        return NEUTRAL_ASSESSMENT
    return TurnAssessment(
        primary_emotion=fields["emotion"],
        intensity=fields["intensity"],
        stance=fields["stance"],
        risk_flag=fields["risk"],
    )


def select_strategy(assessment: TurnAssessment, intensity_threshold: float = 0.7,
                    guidance_intensity_max: float = 0.3) -> StrategyBlend:
    """Pure mapping from the turn assessment to a strategy blend."""
    negative = assessment.primary_emotion.lower() in NEGATIVE_VALENCE
    if assessment.risk_flag or (negative and assessment.intensity >= intensity_threshold):
        return StrategyBlend(
            mode="empathy_first",
            empathy_directive=(
                "Lead entirely with validation and empathetic reflection of the client's "
                f"{assessment.primary_emotion}. Do not introduce new techniques or tasks this turn."
            ),
            guidance_directive="",
        )
    if assessment.stance == "receptive" and assessment.intensity < guidance_intensity_max:
        return StrategyBlend(
            mode="guidance_forward",
            empathy_directive="Acknowledge the client's state briefly before moving forward.",
            guidance_directive="The client is receptive: move the therapeutic work forward decisively.",
        )
    return StrategyBlend(
        mode="blended",
        empathy_directive=(
            f"Reflect the client's {assessment.primary_emotion} genuinely before guiding."
        ),
        guidance_directive="Balance emotional attunement with steady therapeutic progress.",
    )


def should_update_preferences(client_turns: int, cadence: int) -> bool:
    """True on every cadence-th client turn (turn count is 1-based here)."""
    return cadence > 0 and client_turns > 0 and client_turns % cadence == 0


def update_preferences(gateway: LlmGateway, ctx: ContextWindow,
                       prev: PreferenceProfile) -> PreferenceProfile:
    """One personalize-stage call, merged field-wise like the profiler documents."""
    completion = gateway.complete(prompts.personalize_bundle(ctx, prev.summary() or "(none)"))
    try:
        mapping = kv_map(parse_kv_lines(completion))
    except ParseError as exc:
        logger.warning("personalize completion unparseable, preferences unchanged: %s", exc)
        return prev
    updates: dict = {}
    for name in ("learning_style", "communication_preferences", "empathy_language"):
        value = mapping.get(name, "")
        if value and value != getattr(prev, name):
            updates[name] = value
    for name in ("topic_sensitivities", "boundaries"):
        if mapping.get(name):
            values = tuple(dict.fromkeys(split_list(mapping[name])))
            if values and values != tuple(getattr(prev, name)):
                updates[name] = values
    if not updates:
        return prev
    return replace(prev, version=prev.version + 1, **updates)


def compose_response_prompt(
    persona: PersonaConfig,
    adapters: ExpectationAdapters,
    blend: StrategyBlend,
    action_directive: str,
    knowledge: RetrievalResult | None,
    prefs: PreferenceProfile,
    ctx: ContextWindow,
    profile_summary: str,
    current_msg: str,
) -> PromptBundle:
    """Assemble the respond-stage bundle in the fixed section order.

    With no adapters active this is a baseline (ablated) turn: the system text
    is exactly the plain supportive-counselor prompt.
    """
    window = ctx.render()
    user_text = f"{window}\nclient: {current_msg}" if window else f"client: {current_msg}"
    if not adapters.any_active():
        return PromptBundle("respond", prompts.BASELINE_SYSTEM_PROMPT, user_text, prompts.DEFAULT_PARAMS)

    sections = [
        f"{S_FOUNDATION} {persona.foundation_prompt}",
        f"{S_STYLE} {persona.style_prompt}",
    ]
    if adapters.informational:
        sections.append(ADAPTER_DIRECTIVES["informational"])
    if adapters.service_stance:
        sections.append(ADAPTER_DIRECTIVES["service_stance"])
    if adapters.low_social_burden:
        sections.append(ADAPTER_DIRECTIVES["low_social_burden"])
    if adapters.intimacy_handling:
        sections.append(ADAPTER_DIRECTIVES["intimacy_handling"])
    if blend.empathy_directive:
        sections.append(f"{S_EMPATHY} {blend.empathy_directive}")
    if blend.mode != "empathy_first":
        guidance = blend.guidance_directive
        sections.append(f"{S_GUIDANCE} {guidance} This turn: {action_directive}".strip())
        if knowledge is not None:
            sections.append(
                f"{S_KNOWLEDGE} Guidance: {knowledge.entry.instruction}\n"
                f"Example exchange: {knowledge.entry.example_dialogue}"
            )
    prefs_summary = prefs.summary()
    if prefs_summary:
        sections.append(f"{S_PREFERENCES} Known client preferences: {prefs_summary}")
    if profile_summary:
        sections.append(f"Client picture so far:\n{profile_summary}")
    system_text = "\n\n".join(sections)
    return PromptBundle("respond", system_text, user_text, prompts.DEFAULT_PARAMS)
