// Chat view state and its transitions, kept pure so they are unit-testable.
// pending is true from send until the turn result arrives; the risk banner,
// once raised by a turn result, stays up for the rest of the session.

import type { TranscriptMessage, TurnResult } from "./api.js";

export interface ChatViewState {
  messages: TranscriptMessage[];
  pending: boolean;
  sessionStatus: string;
  riskBanner: boolean;
}

export function initialChatState(status = "open"): ChatViewState {
  return { messages: [], pending: false, sessionStatus: status, riskBanner: false };
}

export function beginSend(state: ChatViewState, text: string, ts: string): ChatViewState {
  return {
    ...state,
    messages: [...state.messages, { role: "client", text, ts }],
    pending: true,
  };
}

export function applyTurnResult(state: ChatViewState, result: TurnResult, ts: string): ChatViewState {
  return {
    ...state,
    messages: [...state.messages, { role: "agent", text: result.agent_text, ts }],
    pending: false,
    riskBanner: state.riskBanner || result.risk_flag,
  };
}

export function sendFailed(state: ChatViewState): ChatViewState {
  return { ...state, pending: false };
}

export function applyTranscript(state: ChatViewState, messages: TranscriptMessage[]): ChatViewState {
  // Screen ordering always equals API transcript ordering.
  return { ...state, messages: [...messages] };
}

export function sessionClosed(state: ChatViewState, status: string): ChatViewState {
  return { ...state, sessionStatus: status, pending: false };
}
