"""Prompt templates for every pipeline stage.

Templates are fixed text so that identical inputs always produce identical
prompt digests. Structured stages instruct the model to reply in the
``key: value`` line protocol that parse_structured understands. User texts
open with a ``task:``/``target:`` marker line so scripted providers can match
individual calls by substring.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from .gateway import PromptBundle

if TYPE_CHECKING:  # only for annotations; avoids an import cycle
    from .profiler import CaseConceptualization, ContextWindow, CounselingRecord

DEFAULT_PARAMS = {"temperature": "0.2", "max_tokens": "800"}

# Verbatim ablation prompt for baseline sessions.
BASELINE_SYSTEM_PROMPT = (
    "You are a supportive counselor who helps users with their mental health concerns. "
    "Your goal is to:\n"
    "1. Respond empathetically to users' messages\n"
    "2. Provide helpful suggestions based on psychological principles\n"
    "3. Offer emotional support in difficult situations\n"
    "4. Maintain a positive and encouraging tone"
)

GROUNDING_GUARDRAIL = (
    "Ground every factual or statistical claim in the supplied guidance; when evidence "
    "is thin, say so plainly rather than asserting certainty."
)


def _ctx_text(ctx: "ContextWindow") -> str:
    rendered = ctx.render()
    return rendered if rendered else "(no prior messages)"


def detect_bundle(msg: str, ctx: "ContextWindow") -> PromptBundle:
    system = (
        "You read the emotional signals in a counseling client's latest message. "
        "Reply with exactly these lines:\n"
        "emotion: <primary emotion word>\n"
        "intensity: <0.0-1.0>\n"
        "stance: <resistant|guarded|neutral|receptive>\n"
        "risk: <yes|no>"
    )
    user = f"task: detect\ncontext:\n{_ctx_text(ctx)}\nmessage: {msg}"
    return PromptBundle("detect", system, user, DEFAULT_PARAMS)


def attitude_bundle(fb: str, action_directive: str, ctx: "ContextWindow") -> PromptBundle:
    system = (
        "You judge how a counseling client reacted to the counselor's previous move. "
        "Reply with exactly these lines:\n"
        "attitude: <positive|neutral|negative>\n"
        "confidence: <0.0-1.0>"
    )
    user = (
        f"task: evaluate_attitude\nprevious move: {action_directive}\n"
        f"context:\n{_ctx_text(ctx)}\nclient reply: {fb}"
    )
    return PromptBundle("evaluate_attitude", system, user, DEFAULT_PARAMS)


def goal_bundle(profile_summary: str, phase: str, ctx: "ContextWindow") -> PromptBundle:
    system = (
        "You are the planning component of a counseling agent. Draft one overarching "
        "therapeutic objective that can span multiple sessions. Reply with one line:\n"
        "statement: <objective>"
    )
    user = f"target: goal\nphase: {phase}\nprofile:\n{profile_summary}\ncontext:\n{_ctx_text(ctx)}"
    return PromptBundle("plan_generate", system, user, DEFAULT_PARAMS)


def agenda_bundle(goal_statement: str, max_items: int, ctx: "ContextWindow") -> PromptBundle:
    system = (
        "You are the planning component of a counseling agent. Break the therapy goal "
        f"into at most {max_items} agenda items for the current session. Reply with one "
        "line per item:\nitem: <agenda item>"
    )
    user = f"target: agenda\ngoal: {goal_statement}\ncontext:\n{_ctx_text(ctx)}"
    return PromptBundle("plan_generate", system, user, DEFAULT_PARAMS)


def actions_bundle(agenda_items: list[str], ctx: "ContextWindow") -> PromptBundle:
    system = (
        "You are the planning component of a counseling agent. Decompose the session "
        "agenda into 2-4 concrete single-turn therapeutic moves. Reply with one line per move:\n"
        "action: <technique> :: <directive for the responder>"
    )
    agenda = "\n".join(f"- {item}" for item in agenda_items)
    user = f"target: actions\nagenda:\n{agenda}\ncontext:\n{_ctx_text(ctx)}"
    return PromptBundle("plan_generate", system, user, DEFAULT_PARAMS)


def adjust_goal_bundle(goal_statement: str, fb: str, ctx: "ContextWindow") -> PromptBundle:
    system = (
        "You are the planning component of a counseling agent. The current therapy goal "
        "is not landing with the client. Revise it in light of their feedback. Reply with "
        "one line:\nstatement: <revised objective>"
    )
    user = f"target: goal_adjust\ncurrent goal: {goal_statement}\nclient feedback: {fb}\ncontext:\n{_ctx_text(ctx)}"
    return PromptBundle("plan_adjust", system, user, DEFAULT_PARAMS)


def profile_update_bundle(msg: str, ctx: "ContextWindow", profile: "CaseConceptualization") -> PromptBundle:
    from .profiler import PROFILE_FIELDS

    system = (
        "You maintain a clinical case conceptualization. From the latest exchange, emit "
        "only the fields you can now fill or improve, one per line as `field: value`. "
        "Known fields: " + ", ".join(PROFILE_FIELDS) + ". Emit nothing else."
    )
    user = (
        f"task: update_profile\ncurrent profile:\n{profile.summary()}\n"
        f"context:\n{_ctx_text(ctx)}\nmessage: {msg}"
    )
    return PromptBundle("profile_update", system, user, DEFAULT_PARAMS)


def record_update_bundle(msg: str, ctx: "ContextWindow", record: "CounselingRecord", session_id: str) -> PromptBundle:
    system = (
        "You maintain professional counseling records. Update the record for the current "
        "session, one field per line: key_topics, interventions, client_responses_summary, "
        "progress_markers, homework (lists comma-separated), plus cumulative_summary for "
        "the whole therapy so far. Emit only fields with new content."
    )
    user = (
        f"task: update_record\nsession: {session_id}\n"
        f"cumulative summary so far:\n{record.cumulative_summary or '(none)'}\n"
        f"context:\n{_ctx_text(ctx)}\nmessage: {msg}"
    )
    return PromptBundle("record_update", system, user, DEFAULT_PARAMS)


def ending_check_bundle(cumulative_summary: str) -> PromptBundle:
    system = (
        "You review counseling documentation and judge whether the client's therapy goals "
        "are substantially achieved. Reply with one line:\n"
        "goals_substantially_achieved: <yes|no>"
    )
    user = f"task: ending_check\ncumulative summary:\n{cumulative_summary or '(none)'}"
    return PromptBundle("profile_update", system, user, DEFAULT_PARAMS)


def retrieve_labels_bundle(ctx: "ContextWindow", profile_summary: str, action_directive: str,
                           approach: str, phase: str) -> PromptBundle:
    system = (
        "You pick retrieval labels for a counseling knowledge base. Given the conversation "
        "and the planned move, reply with exactly these lines:\n"
        "functions: <comma-separated therapeutic functions>\n"
        "keywords: <comma-separated content keywords>"
    )
    user = (
        f"task: retrieve_labels\napproach: {approach}\nphase: {phase}\n"
        f"planned move: {action_directive}\nprofile:\n{profile_summary}\ncontext:\n{_ctx_text(ctx)}"
    )
    return PromptBundle("retrieve_labels", system, user, DEFAULT_PARAMS)


def personalize_bundle(ctx: "ContextWindow", prefs_summary: str) -> PromptBundle:
    system = (
        "You track a counseling client's interaction preferences. From recent exchanges, "
        "emit only the fields you can improve, one per line: learning_style, "
        "communication_preferences, topic_sensitivities, empathy_language, boundaries "
        "(lists comma-separated)."
    )
    user = f"task: personalize\ncurrent preferences:\n{prefs_summary}\ncontext:\n{_ctx_text(ctx)}"
    return PromptBundle("personalize", system, user, DEFAULT_PARAMS)


def ingest_bundle(source_label: str, body: str) -> PromptBundle:
    system = (
        "You distill counseling literature into reusable guidance. For each distinct "
        "technique in the chapter, emit a block of lines:\n"
        "approach_tags: <comma-separated approaches, e.g. CBT, REBT>\n"
        "stage_tags: <comma-separated phases from initial, middle, ending>\n"
        "function_tags: <comma-separated therapeutic functions>\n"
        "key_points: <one-sentence essence>\n"
        "instruction: <how the counselor should apply it>\n"
        "example_dialogue: <short illustrative exchange>\n"
        "keywords: <comma-separated retrieval keywords>\n"
        "Separate blocks with a line containing only ---"
    )
    user = f"task: distill_chapter\nsource: {source_label}\nchapter body:\n{body}"
    return PromptBundle("plan_generate", system, user, DEFAULT_PARAMS)


def recap_bundle(system_text: str, cumulative_summary: str, display_name: str) -> PromptBundle:
    user = (
        "task: recap\nYou are opening a new session with a returning client. Briefly check in "
        "about what was discussed last time before inviting them to begin.\n"
        f"counselor: {display_name}\ncumulative summary:\n{cumulative_summary}"
    )
    return PromptBundle("respond", system_text, user, DEFAULT_PARAMS)


def closing_bundle(system_text: str, ctx: "ContextWindow", session_record_summary: str) -> PromptBundle:
    user = (
        "task: closing\nSummarize the session's main points warmly and concisely.\n"
        f"session notes:\n{session_record_summary}\ncontext:\n{_ctx_text(ctx)}"
    )
    return PromptBundle("respond", system_text, user, DEFAULT_PARAMS)


def transcript_eval_bundle(dimension: str, guidance: str, transcript_text: str) -> PromptBundle:
    system = (
        "You rate a counseling transcript on one dimension using a 1-7 scale "
        f"(7 best). Dimension: {dimension}. {guidance}\n"
        "Reply with exactly these lines:\nscore: <1-7>\njustification: <one sentence>"
    )
    user = f"task: evaluate_transcript\ndimension: {dimension}\ntranscript:\n{transcript_text}"
    return PromptBundle("evaluate_transcript", system, user, DEFAULT_PARAMS)
