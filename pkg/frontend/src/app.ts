// Single-page chat client: register/login, persona selection, chat with
// whole-message polling, session history, and a per-session metrics panel.

import { ApiClient, ApiRequestError, SessionSummary } from "./api.js";
import {
  ChatViewState,
  applyTranscript,
  applyTurnResult,
  beginSend,
  initialChatState,
  sendFailed,
  sessionClosed,
} from "./state.js";
import {
  renderDisclosureBanner,
  renderError,
  renderMessages,
  renderMetrics,
  renderPersonas,
  renderRecapBadge,
  renderRiskBanner,
  renderSessions,
  escapeHtml,
} from "./render.js";

const CREDS_KEY = "counselkit.credentials";
const POLL_MS = 1000;

interface StoredCreds {
  client_id: string;
  token: string;
  display_name: string;
}

export class App {
  api: ApiClient;
  chat: ChatViewState = initialChatState();
  session: SessionSummary | null = null;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private lastFailedText: string | null = null;

  constructor(
    private root: HTMLElement,
    baseUrl: string,
    private storage: Pick<Storage, "getItem" | "setItem" | "removeItem">,
  ) {
    this.api = new ApiClient(baseUrl);
  }

  private creds(): StoredCreds | null {
    const raw = this.storage.getItem(CREDS_KEY);
    return raw ? (JSON.parse(raw) as StoredCreds) : null;
  }

  async boot(): Promise<void> {
    const creds = this.creds();
    if (!creds) {
      this.showAuth();
      return;
    }
    this.api.token = creds.token;
    await this.showPersonaSelect();
  }

  // -- auth -------------------------------------------------------------------

  showAuth(message = ""): void {
    this.root.innerHTML = `
      ${renderDisclosureBanner()}
      <section class="view auth" data-view="auth">
        <h1>Counseling sessions</h1>
        ${message ? renderError(message, false) : ""}
        <form data-form="register">
          <label>Display name <input name="display_name" required></label>
          <button type="submit" data-action="register">Register</button>
        </form>
        <form data-form="login">
          <label>Client id <input name="client_id" required></label>
          <label>Access token <input name="token" required></label>
          <button type="submit" data-action="login">Log in</button>
        </form>
      </section>`;
    this.query("[data-form=register]").addEventListener("submit", async (event) => {
      event.preventDefault();
      const name = (this.query("[name=display_name]") as HTMLInputElement).value.trim();
      if (!name) return;
      const creds = await this.api.register(name);
      this.storage.setItem(CREDS_KEY, JSON.stringify({ ...creds, display_name: name }));
      this.api.token = creds.token;
      await this.showPersonaSelect();
    });
    this.query("[data-form=login]").addEventListener("submit", async (event) => {
      event.preventDefault();
      const clientId = (this.query("[name=client_id]") as HTMLInputElement).value.trim();
      const token = (this.query("[name=token]") as HTMLInputElement).value.trim();
      this.storage.setItem(
        CREDS_KEY,
        JSON.stringify({ client_id: clientId, token, display_name: clientId }),
      );
      this.api.token = token;
      await this.showPersonaSelect();
    });
  }

  logout(): void {
    this.stopPolling();
    this.storage.removeItem(CREDS_KEY);
    this.api.token = null;
    this.session = null;
    this.showAuth();
  }

  // -- persona selection ---------------------------------------------------------

  async showPersonaSelect(): Promise<void> {
    const { personas } = await this.api.personas();
    this.root.innerHTML = `
      ${renderDisclosureBanner()}
      <section class="view personas" data-view="personas">
        <h1>Choose your counselor</h1>
        <div class="persona-list">${renderPersonas(personas)}</div>
        <label class="study-mode">
          <input type="checkbox" data-toggle="study-mode"> study mode (ablated baseline)
        </label>
        <nav>
          <button data-action="history">Session history</button>
          <button data-action="logout">Log out</button>
        </nav>
      </section>`;
    for (const button of Array.from(this.root.querySelectorAll("[data-persona]"))) {
      button.addEventListener("click", async () => {
        const personaId = (button as HTMLElement).dataset.persona!;
        const studyMode = (this.query("[data-toggle=study-mode]") as HTMLInputElement).checked;
        await this.openSession(studyMode ? "baseline" : "ca_plus", personaId);
      });
    }
    this.query("[data-action=history]").addEventListener("click", () => this.showHistory());
    this.query("[data-action=logout]").addEventListener("click", () => this.logout());
  }

  async openSession(mode: string, personaId: string): Promise<void> {
    try {
      this.session = await this.api.openSession(mode, personaId);
    } catch (error) {
      if (error instanceof ApiRequestError && error.body.code === "conflict") {
        this.offerResume(error.body.message, mode, personaId);
        return;
      }
      throw error;
    }
    this.chat = initialChatState(this.session.status);
    if (this.session.opening_message) {
      this.chat = applyTranscript(this.chat, [
        { role: "agent", text: this.session.opening_message, ts: this.session.started_at },
      ]);
    }
    this.showChat();
  }

  offerResume(message: string, mode: string, personaId: string): void {
    this.root.innerHTML = `
      ${renderDisclosureBanner()}
      <section class="view conflict" data-view="conflict">
        ${renderError(message, false)}
        <p>You already have an open session.</p>
        <button data-action="resume">Resume open session</button>
        <button data-action="close-open">Close it and start fresh</button>
      </section>`;
    this.query("[data-action=resume]").addEventListener("click", () => this.resumeOpenSession());
    this.query("[data-action=close-open]").addEventListener("click", async () => {
      const open = await this.findOpenSession();
      if (open) await this.api.closeSession(open.session_id);
      await this.openSession(mode, personaId);
    });
  }

  private async findOpenSession(): Promise<SessionSummary | null> {
    const creds = this.creds();
    if (!creds) return null;
    const { sessions } = await this.api.sessions(creds.client_id);
    return sessions.find((s) => s.status === "open") ?? null;
  }

  async resumeOpenSession(): Promise<void> {
    const open = await this.findOpenSession();
    if (!open) {
      await this.showPersonaSelect();
      return;
    }
    this.session = open;
    this.chat = initialChatState(open.status);
    await this.refreshTranscript();
    this.showChat();
  }

  // -- chat ----------------------------------------------------------------------

  showChat(): void {
    if (!this.session) return;
    this.root.innerHTML = `
      ${renderDisclosureBanner()}
      <section class="view chat" data-view="chat">
        <header>
          <h1>Session ${escapeHtml(this.session.session_id)}
            ${renderRecapBadge(Boolean(this.session.recap))}
          </h1>
          <nav>
            <button data-action="metrics">Metrics</button>
            <button data-action="history">History</button>
            <button data-action="end">End session</button>
          </nav>
        </header>
        <div data-slot="risk">${renderRiskBanner(this.chat.riskBanner)}</div>
        <div class="messages" data-slot="messages"></div>
        <div data-slot="error"></div>
        <form data-form="send">
          <input name="text" autocomplete="off" placeholder="Say what is on your mind...">
          <button type="submit" data-action="send">Send</button>
        </form>
      </section>`;
    this.query("[data-form=send]").addEventListener("submit", async (event) => {
      event.preventDefault();
      const input = this.query("[name=text]") as HTMLInputElement;
      const text = input.value.trim();
      if (!text || this.chat.pending) return;
      input.value = "";
      await this.send(text);
    });
    this.query("[data-action=end]").addEventListener("click", async () => {
      if (!this.session) return;
      const summary = await this.api.closeSession(this.session.session_id);
      this.chat = sessionClosed(this.chat, summary.status);
      await this.refreshTranscript();
      this.renderChat();
    });
    this.query("[data-action=metrics]").addEventListener("click", () => this.showMetrics());
    this.query("[data-action=history]").addEventListener("click", () => this.showHistory());
    this.renderChat();
  }

  renderChat(): void {
    const messagesSlot = this.root.querySelector("[data-slot=messages]");
    if (!messagesSlot) return;
    messagesSlot.innerHTML = renderMessages(this.chat.messages, this.chat.pending);
    const riskSlot = this.query("[data-slot=risk]");
    riskSlot.innerHTML = renderRiskBanner(this.chat.riskBanner);
    const sendButton = this.root.querySelector("[data-action=send]") as HTMLButtonElement | null;
    const input = this.root.querySelector("[name=text]") as HTMLInputElement | null;
    const closed = this.chat.sessionStatus !== "open";
    if (sendButton) sendButton.disabled = this.chat.pending || closed;
    if (input) input.disabled = this.chat.pending || closed;
  }

  async send(text: string): Promise<void> {
    if (!this.session) return;
    this.chat = beginSend(this.chat, text, new Date().toISOString());
    this.renderChat();
    this.startPolling();
    try {
      const result = await this.api.sendMessage(this.session.session_id, text);
      this.chat = applyTurnResult(this.chat, result, new Date().toISOString());
      this.lastFailedText = null;
      this.setError("");
    } catch (error) {
      this.chat = sendFailed(this.chat);
      if (error instanceof ApiRequestError && error.body.code === "provider_unavailable") {
        this.lastFailedText = text;
        this.setError(renderError("The counselor is unreachable right now.", true));
      } else {
        this.setError(renderError(error instanceof Error ? error.message : "send failed", false));
      }
    } finally {
      this.stopPolling();
      this.renderChat();
    }
  }

  private setError(html: string): void {
    const slot = this.root.querySelector("[data-slot=error]");
    if (!slot) return;
    slot.innerHTML = html;
    const retry = slot.querySelector("[data-action=retry]");
    if (retry) {
      retry.addEventListener("click", async () => {
        const text = this.lastFailedText;
        this.lastFailedText = null;
        this.setError("");
        if (text) await this.send(text);
      });
    }
  }

  // While a turn is pending the transcript is re-polled every second, so the
  // view converges even if the inline response is lost.
  private startPolling(): void {
    this.stopPolling();
    const tick = async () => {
      if (!this.chat.pending || !this.session) return;
      try {
        const { messages } = await this.api.transcript(this.session.session_id);
        if (messages.length > this.chat.messages.length) {
          this.chat = { ...applyTranscript(this.chat, messages), pending: this.chat.pending };
          this.renderChat();
        }
      } catch {
        // Polling is best-effort; the send path reports real errors.
      }
      if (this.chat.pending) this.pollTimer = setTimeout(tick, POLL_MS);
    };
    this.pollTimer = setTimeout(tick, POLL_MS);
  }

  private stopPolling(): void {
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }

  async refreshTranscript(): Promise<void> {
    if (!this.session) return;
    const { messages } = await this.api.transcript(this.session.session_id);
    this.chat = applyTranscript(this.chat, messages);
  }

  // -- history and metrics -----------------------------------------------------------

  async showHistory(): Promise<void> {
    const creds = this.creds();
    if (!creds) {
      this.showAuth();
      return;
    }
    const { sessions } = await this.api.sessions(creds.client_id);
    this.root.innerHTML = `
      ${renderDisclosureBanner()}
      <section class="view history" data-view="history">
        <h1>Session history</h1>
        ${renderSessions(sessions)}
        <nav>
          <button data-action="new-session">New session</button>
          ${sessions.some((s) => s.status === "open")
            ? `<button data-action="resume">Resume open session</button>`
            : ""}
        </nav>
      </section>`;
    this.query("[data-action=new-session]").addEventListener("click", () => this.showPersonaSelect());
    const resume = this.root.querySelector("[data-action=resume]");
    if (resume) resume.addEventListener("click", () => this.resumeOpenSession());
  }

  async showMetrics(): Promise<void> {
    if (!this.session) return;
    const metrics = await this.api.metrics(this.session.session_id);
    this.root.innerHTML = `
      ${renderDisclosureBanner()}
      <section class="view metrics" data-view="metrics">
        <h1>Engagement metrics</h1>
        ${renderMetrics(metrics)}
        <nav><button data-action="back">Back to chat</button></nav>
      </section>`;
    this.query("[data-action=back]").addEventListener("click", () => this.showChat());
  }

  private query(selector: string): HTMLElement {
    const element = this.root.querySelector(selector);
    if (!element) throw new Error(`missing element ${selector}`);
    return element as HTMLElement;
  }
}

export function mount(root: HTMLElement, baseUrl?: string): App {
  const url =
    baseUrl ??
    document.querySelector<HTMLMetaElement>("meta[name=counselkit-base-url]")?.content ??
    "";
  const app = new App(root, url, window.localStorage);
  void app.boot();
  return app;
}
