// Typed client for the counselkit JSON API. The UI performs no therapeutic
// logic of its own: everything rendered comes straight from these responses.

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

export class ApiRequestError extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(body.message);
  }
}

export interface Credentials {
  client_id: string;
  token: string;
}

export interface Persona {
  persona_id: string;
  display_name: string;
  approach: string;
}

export interface SessionSummary {
  session_id: string;
  client_id: string;
  mode: string;
  persona_id: string;
  status: string;
  turn_index: number;
  started_at: string;
  phase: string;
  opening_message?: string | null;
  recap?: boolean;
}

export interface TurnResult {
  agent_text: string;
  action_executed: { technique: string; directive: string } | null;
  assessment: {
    primary_emotion: string;
    intensity: number;
    stance: string;
    risk_flag: boolean;
  } | null;
  revisions: unknown[];
  knowledge_used: string | null;
  risk_flag: boolean;
  degraded: boolean;
}

export interface TranscriptMessage {
  role: "client" | "agent";
  text: string;
  ts: string;
}

export interface Metrics {
  segments: { start: string; end: string; message_count: number }[];
  session_length_min: number;
  rounds: number;
  avg_words_per_response: number;
  information_entropy_bits: number;
  informativeness: number;
}

export class ApiClient {
  constructor(public baseUrl: string, public token: string | null = null) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await response.json();
    if (!response.ok) {
      throw new ApiRequestError(response.status, data as ApiErrorBody);
    }
    return data as T;
  }

  register(displayName: string): Promise<Credentials> {
    return this.request<Credentials>("POST", "/clients", { display_name: displayName });
  }

  personas(): Promise<{ personas: Persona[] }> {
    return this.request("GET", "/personas");
  }

  openSession(mode: string, personaId: string): Promise<SessionSummary> {
    return this.request("POST", "/sessions", { mode, persona_id: personaId });
  }

  sendMessage(sessionId: string, text: string): Promise<TurnResult> {
    return this.request("POST", `/sessions/${sessionId}/messages`, { text });
  }

  closeSession(sessionId: string): Promise<{ session_id: string; status: string }> {
    return this.request("POST", `/sessions/${sessionId}/close`, {});
  }

  transcript(sessionId: string): Promise<{ messages: TranscriptMessage[] }> {
    return this.request("GET", `/sessions/${sessionId}/transcript`);
  }

  metrics(sessionId: string): Promise<Metrics> {
    return this.request("GET", `/sessions/${sessionId}/metrics`);
  }

  sessions(clientId: string): Promise<{ sessions: SessionSummary[] }> {
    return this.request("GET", `/clients/${clientId}/sessions`);
  }
}
