import { describe, expect, it } from "vitest";

import type { QueueState } from "../src/queue.js";
import {
  describeVectorText,
  escapeHtml,
  renderDetail,
  renderQueue,
  renderStats,
} from "../src/render.js";
import { openForm, setField } from "../src/review.js";
import type { JustificationConfig } from "../src/types.js";
import { makeRecord, makeStats } from "./helpers.js";

const CONFIG: JustificationConfig = {
  justifications: ["ComponentNotPresent", "VulnerableCodeNotPresent"],
  none_label: "None",
};

function queueState(overrides: Partial<QueueState> = {}): QueueState {
  return {
    rows: [],
    total: 0,
    pageIndex: 0,
    pageCount: 0,
    status: "ready",
    error: null,
    ...overrides,
  };
}

describe("renderQueue", () => {
  it("keeps the given row order, Affected first when the server says so", () => {
    const state = queueState({
      rows: [
        {
          id: "EV-A",
          productLabel: "Scanner 1.0",
          notificationSummary: "driver issue",
          category: "Affected",
          flags: [],
          age: "1h ago",
        },
        {
          id: "EV-B",
          productLabel: "Archive 2.0",
          notificationSummary: "library absent",
          category: "NotAffected",
          flags: ["review-priority"],
          age: "2h ago",
        },
      ],
      total: 2,
      pageCount: 1,
    });
    const html = renderQueue(state, false);
    expect(html.indexOf("EV-A")).toBeGreaterThan(-1);
    expect(html.indexOf("EV-A")).toBeLessThan(html.indexOf("EV-B"));
    expect(html).toContain("badge-affected");
    expect(html).toContain("review-priority");
  });

  it("shows pagination arithmetic in the pager", () => {
    const state = queueState({
      rows: [
        {
          id: "EV-A",
          productLabel: "",
          notificationSummary: "",
          category: "Affected",
          flags: [],
          age: "",
        },
      ],
      total: 50,
      pageIndex: 0,
      pageCount: 3,
    });
    const html = renderQueue(state, true);
    expect(html).toContain("Page 1 of 3 (50 drafts)");
    expect(html).toContain('data-action="next-page"');
  });

  it("renders empty and error states distinctly", () => {
    const empty = renderQueue(queueState({ status: "empty" }), false);
    expect(empty).toContain("No pending evaluations");
    expect(empty).not.toContain("Retry");

    const error = renderQueue(
      queueState({ status: "error", error: "service unreachable: ECONNREFUSED" }),
      false,
    );
    expect(error).toContain("ECONNREFUSED");
    expect(error).toContain("Retry");
    expect(error).not.toContain("No pending evaluations");
  });
});

describe("renderDetail", () => {
  it("disables the vector editor for NotAffected and locks justification for Affected", () => {
    const affected = openForm(makeRecord(), 0);
    const affectedHtml = renderDetail(affected, null, null, CONFIG);
    expect(affectedHtml).toMatch(/<select name="vex_justification" disabled>/);
    expect(affectedHtml).not.toMatch(/name="environmental_vector"[^>]*disabled/);

    const notAffected = setField(affected, "vex_category", "NotAffected");
    const notAffectedHtml = renderDetail(notAffected, null, null, CONFIG);
    expect(notAffectedHtml).toMatch(/name="environmental_vector"[^>]*\n?\s*disabled/);
    expect(notAffectedHtml).not.toMatch(/<select name="vex_justification" disabled>/);
  });

  it("escapes draft text before it reaches the document", () => {
    const record = makeRecord({
      internal_comment: '<script>alert("x")</script>',
    });
    const html = renderDetail(openForm(record, 0), null, null, CONFIG);
    expect(html).not.toContain("<script>alert");
    expect(html).toContain("&lt;script&gt;");
  });

  it("shows inline vector feedback when present", () => {
    const form = openForm(makeRecord(), 0);
    form.vectorFeedback = { valid: false, metrics: null, error: "unknown metric XX" };
    const html = renderDetail(form, null, null, CONFIG);
    expect(html).toContain("unknown metric XX");
  });
});

describe("describeVectorText", () => {
  it("expands metrics through the grammar display names", () => {
    expect(describeVectorText("CVSS:3.1/AV:L/AC:H")).toBe(
      "Attack Vector is Local. Attack Complexity is High.",
    );
    expect(describeVectorText("CVSS:3.1/MAV:N/CR:H")).toBe(
      "Modified Attack Vector is Network. Confidentiality Requirement is High.",
    );
  });

  it("falls back to the raw text on unknown tokens", () => {
    expect(describeVectorText("CVSS:3.1/XX:9")).toBe("CVSS:3.1/XX:9");
    expect(describeVectorText("not a vector")).toBe("not a vector");
  });
});

describe("renderStats", () => {
  it("shows the time-saved figure from the formula inputs", () => {
    const html = renderStats(
      makeStats({
        drafts_pending: 490,
        reviewed: 10,
        accepted: 7,
        corrected: 3,
        acceptance_rate: 0.7,
        reviews_with_duration: 10,
        mean_review_duration_seconds: 60,
        time_saved_seconds: 1340,
      }),
    );
    expect(html).toContain("22m 20s"); // 1340s
    expect(html).toContain("70%");
    expect(html).toContain("490");
  });
});

describe("escapeHtml", () => {
  it("covers the five significant characters", () => {
    expect(escapeHtml(`<a href="x" title='y'>&</a>`)).toBe(
      "&lt;a href=&quot;x&quot; title=&#39;y&#39;&gt;&amp;&lt;/a&gt;",
    );
  });
});
