// Pure HTML renderers. Every displayed fact is a field from an API response;
// the only locally-authored text is static labels.

import type { Metrics, Persona, SessionSummary, TranscriptMessage } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderMessages(messages: TranscriptMessage[], pending: boolean): string {
  const bubbles = messages
    .map(
      (m) =>
        `<div class="msg ${m.role}" data-role="${m.role}">${escapeHtml(m.text)}</div>`,
    )
    .join("");
  const typing = pending ? `<div class="msg agent typing" data-role="typing">...</div>` : "";
  return bubbles + typing;
}

export function renderRiskBanner(visible: boolean): string {
  if (!visible) return "";
  return (
    `<div class="banner risk" data-banner="risk">` +
    `If you are in immediate danger or thinking about harming yourself, please reach out ` +
    `to local emergency services or a crisis line right now. This assistant is not an ` +
    `emergency service.</div>`
  );
}

export function renderDisclosureBanner(): string {
  return (
    `<div class="banner disclosure" data-banner="disclosure">` +
    `You are talking with an AI counseling assistant, not a human counselor.</div>`
  );
}

export function renderRecapBadge(recap: boolean): string {
  if (!recap) return "";
  return `<span class="badge recap" data-badge="recap">continuing from last time</span>`;
}

export function renderMetrics(metrics: Metrics): string {
  const rows = [
    ["Rounds", String(metrics.rounds)],
    ["Session length (min)", String(metrics.session_length_min)],
    ["Avg words per response", String(metrics.avg_words_per_response)],
    ["Entropy (bits)", String(metrics.information_entropy_bits)],
    ["Informativeness", String(metrics.informativeness)],
  ]
    .map(
      ([label, value]) =>
        `<tr><td>${label}</td><td data-metric="${label}">${escapeHtml(value)}</td></tr>`,
    )
    .join("");
  const segments = metrics.segments
    .map(
      (s) =>
        `<li>${escapeHtml(s.start)} to ${escapeHtml(s.end)} (${s.message_count} messages)</li>`,
    )
    .join("");
  return (
    `<table class="metrics"><tbody>${rows}</tbody></table>` +
    `<ul class="segments">${segments}</ul>`
  );
}

export function renderPersonas(personas: Persona[]): string {
  return personas
    .map(
      (p) =>
        `<button class="persona" data-persona="${escapeHtml(p.persona_id)}">` +
        `${escapeHtml(p.display_name)} <small>${escapeHtml(p.approach)}</small></button>`,
    )
    .join("");
}

export function renderSessions(sessions: SessionSummary[]): string {
  if (!sessions.length) return `<p class="empty">No sessions yet.</p>`;
  return (
    `<ul class="sessions">` +
    sessions
      .map(
        (s) =>
          `<li data-session="${escapeHtml(s.session_id)}">${escapeHtml(s.session_id)} ` +
          `<small>${escapeHtml(s.mode)} / ${escapeHtml(s.status)} / ${s.turn_index} turns</small></li>`,
      )
      .join("") +
    `</ul>`
  );
}

export function renderError(message: string, retriable: boolean): string {
  const retry = retriable
    ? ` <button class="retry" data-action="retry">Retry</button>`
    : "";
  return `<div class="banner error" data-banner="error">${escapeHtml(message)}${retry}</div>`;
}
