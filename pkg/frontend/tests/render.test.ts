import { describe, expect, it } from "vitest";

import type { Metrics } from "../src/api.js";
import {
  renderMessages,
  renderMetrics,
  renderRecapBadge,
  renderRiskBanner,
  renderSessions,
} from "../src/render.js";

// Fixture values as the API would return them; rendering must show them exactly.
const METRICS_FIXTURE: Metrics = {
  segments: [
    { start: "2025-01-01T00:00:00.000Z", end: "2025-01-01T00:03:00.000Z", message_count: 4 },
  ],
  session_length_min: 3.0,
  rounds: 2,
  avg_words_per_response: 3.5,
  information_entropy_bits: 1.9182958340544893,
  informativeness: 13.428070838381425,
};

describe("rendering fidelity", () => {
  it("metrics panel shows exactly the API values", () => {
    const html = renderMetrics(METRICS_FIXTURE);
    expect(html).toContain(">2</td>");
    expect(html).toContain(">3</td>");
    expect(html).toContain(">3.5</td>");
    expect(html).toContain(">1.9182958340544893</td>");
    expect(html).toContain(">13.428070838381425</td>");
    expect(html).toMatchSnapshot();
  });

  it("risk banner renders only when raised", () => {
    expect(renderRiskBanner(false)).toBe("");
    const html = renderRiskBanner(true);
    expect(html).toContain('data-banner="risk"');
    expect(html).toMatchSnapshot();
  });

  it("recap badge renders only for recap sessions", () => {
    expect(renderRecapBadge(false)).toBe("");
    expect(renderRecapBadge(true)).toMatchSnapshot();
  });

  it("messages render in order with a typing stub while pending", () => {
    const html = renderMessages(
      [
        { role: "agent", text: "welcome", ts: "t0" },
        { role: "client", text: "hello <world>", ts: "t1" },
      ],
      true,
    );
    expect(html.indexOf("welcome")).toBeLessThan(html.indexOf("hello"));
    expect(html).toContain("hello &lt;world&gt;");
    expect(html).toContain('data-role="typing"');
  });

  it("session list shows mode, status and turn counts from the API", () => {
    const html = renderSessions([
      {
        session_id: "c1-s1", client_id: "c1", mode: "ca_plus", persona_id: "ellis",
        status: "ended", turn_index: 5, started_at: "t", phase: "initial",
      },
    ]);
    expect(html).toContain("c1-s1");
    expect(html).toContain("ca_plus / ended / 5 turns");
  });
});
