/** HTML renderers. Pure string builders over the models so every view is
 * testable without a DOM; app.ts owns the actual document wiring. */

import type { QueueState } from "./queue.js";
import {
  ReviewForm,
  justificationLocked,
  vectorEditorEnabled,
} from "./review.js";
import { acceptancePercent, formatSeconds, timeSavedSeconds } from "./stats.js";
import type {
  AssetRecord,
  JustificationConfig,
  NotificationRecord,
  StatsPayload,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

// Display names for vector metrics, mirroring the service grammar.
const METRIC_NAMES: Record<string, string> = {
  AV: "Attack Vector",
  AC: "Attack Complexity",
  PR: "Privileges Required",
  UI: "User Interaction",
  S: "Scope",
  C: "Confidentiality",
  I: "Integrity",
  A: "Availability",
  E: "Exploit Code Maturity",
  RL: "Remediation Level",
  RC: "Report Confidence",
  CR: "Confidentiality Requirement",
  IR: "Integrity Requirement",
  AR: "Availability Requirement",
  MAV: "Modified Attack Vector",
  MAC: "Modified Attack Complexity",
  MPR: "Modified Privileges Required",
  MUI: "Modified User Interaction",
  MS: "Modified Scope",
  MC: "Modified Confidentiality",
  MI: "Modified Integrity",
  MA: "Modified Availability",
};

const SEVERITY_VALUES: Record<string, string> = { N: "None", L: "Low", H: "High" };

const VALUE_NAMES: Record<string, Record<string, string>> = {
  AV: { N: "Network", A: "Adjacent", L: "Local", P: "Physical" },
  AC: { L: "Low", H: "High" },
  PR: { N: "None", L: "Low", H: "High" },
  UI: { N: "None", R: "Required" },
  S: { U: "Unchanged", C: "Changed" },
  C: SEVERITY_VALUES,
  I: SEVERITY_VALUES,
  A: SEVERITY_VALUES,
  E: { U: "Unproven", P: "Proof-of-Concept", F: "Functional", H: "High" },
  RL: { O: "Official Fix", T: "Temporary Fix", W: "Workaround", U: "Unavailable" },
  RC: { U: "Unknown", R: "Reasonable", C: "Confirmed" },
  CR: { L: "Low", M: "Medium", H: "High" },
  IR: { L: "Low", M: "Medium", H: "High" },
  AR: { L: "Low", M: "Medium", H: "High" },
};
for (const metric of ["AV", "AC", "PR", "UI", "S", "C", "I", "A"]) {
  VALUE_NAMES[`M${metric}`] = VALUE_NAMES[metric]!;
}

/** Expand a "CVSS:3.x/K:V/..." string into grammar sentences for display.
 * Unknown tokens fall back to the raw text rather than a wrong name. */
export function describeVectorText(vector: string): string {
  const parts = vector.split("/");
  if (parts.length < 2 || !parts[0]!.startsWith("CVSS:")) return vector;
  const sentences: string[] = [];
  for (const part of parts.slice(1)) {
    const [metric, value] = part.split(":");
    const name = metric ? METRIC_NAMES[metric] : undefined;
    const valueName = metric && value ? VALUE_NAMES[metric]?.[value] : undefined;
    if (!name || !valueName) return vector;
    sentences.push(`${name} is ${valueName}.`);
  }
  return sentences.join(" ");
}

function badge(category: string): string {
  const tone = category === "Affected" ? "badge-affected" : "badge-clear";
  return `<span class="badge ${tone}">${escapeHtml(category)}</span>`;
}

function flagChips(flags: string[]): string {
  return flags.map((flag) => `<span class="flag">${escapeHtml(flag)}</span>`).join(" ");
}

export function renderLogin(error: string | null = null): string {
  return `
<section class="login">
  <h1>Evaluation review</h1>
  <form data-action="login">
    <label>Service URL <input name="baseUrl" value="" placeholder="http://localhost:8000"></label>
    <label>Bearer token <input name="token" type="password" placeholder="leave empty if auth is off"></label>
    <button type="submit">Connect</button>
  </form>
  ${error ? `<p class="error">${escapeHtml(error)}</p>` : ""}
</section>`;
}

export function renderQueue(state: QueueState, hasNext: boolean): string {
  if (state.status === "error") {
    return `
<section class="queue">
  <p class="error">${escapeHtml(state.error ?? "unknown error")}</p>
  <button data-action="retry">Retry</button>
</section>`;
  }
  if (state.status === "empty") {
    return `<section class="queue"><p class="empty">No pending evaluations.</p></section>`;
  }
  const rows = state.rows
    .map(
      (row) => `
    <tr data-eval-id="${escapeHtml(row.id)}">
      <td><a href="#/evaluations/${encodeURIComponent(row.id)}">${escapeHtml(row.id)}</a></td>
      <td>${escapeHtml(row.productLabel)}</td>
      <td>${escapeHtml(row.notificationSummary)}</td>
      <td>${badge(row.category)}</td>
      <td>${flagChips(row.flags)}</td>
      <td>${escapeHtml(row.age)}</td>
    </tr>`,
    )
    .join("");
  const pager = `
  <nav class="pager">
    <button data-action="prev-page" ${state.pageIndex === 0 ? "disabled" : ""}>Previous</button>
    <span>Page ${state.pageIndex + 1} of ${Math.max(1, state.pageCount)} (${state.total} drafts)</span>
    <button data-action="next-page" ${hasNext ? "" : "disabled"}>Next</button>
  </nav>`;
  return `
<section class="queue">
  <table>
    <thead>
      <tr><th>Id</th><th>Product</th><th>Notification</th><th>Category</th><th>Flags</th><th>Age</th></tr>
    </thead>
    <tbody>${rows}
    </tbody>
  </table>
  ${pager}
</section>`;
}

function contextPanel(asset: AssetRecord | null, notification: NotificationRecord | null): string {
  const components = asset
    ? asset.components
        .map((c) => `<li>${escapeHtml(`${c.name} ${c.version} (${c.vendor})`)}</li>`)
        .join("")
    : "";
  const enrichment = notification?.enrichment;
  const enrichmentHtml = enrichment
    ? `
    <dt>Typical severity</dt><dd>${escapeHtml(enrichment.typical_severity)}</dd>
    <dt>Prerequisites</dt><dd><ul>${enrichment.prerequisites
      .map((p) => `<li>${escapeHtml(p)}</li>`)
      .join("")}</ul></dd>
    <dt>Mitigations</dt><dd><ul>${enrichment.mitigations
      .map((m) => `<li>${escapeHtml(m)}</li>`)
      .join("")}</ul></dd>`
    : "";
  const vector = notification?.base_temporal_vector;
  return `
  <aside class="context">
    <h2>${escapeHtml(asset?.product_label ?? "")}</h2>
    <dl>
      <dt>Organization</dt><dd>${escapeHtml(asset?.organization ?? "")}</dd>
      <dt>Components</dt><dd><ul>${components}</ul></dd>
      <dt>Notification</dt><dd>${escapeHtml(notification?.description ?? "")}</dd>
      <dt>CVEs</dt><dd>${escapeHtml((notification?.cve_ids ?? []).join(", "))}</dd>
      ${enrichmentHtml}
      ${
        vector
          ? `<dt>Base and temporal</dt><dd><code>${escapeHtml(vector)}</code><br>${escapeHtml(
              describeVectorText(vector),
            )}</dd>`
          : ""
      }
    </dl>
  </aside>`;
}

export function renderDetail(
  form: ReviewForm,
  asset: AssetRecord | null,
  notification: NotificationRecord | null,
  config: JustificationConfig,
): string {
  const lockJustification = justificationLocked(form);
  const enableVector = vectorEditorEnabled(form);
  const current = form.current;
  const options = [config.none_label, ...config.justifications]
    .map((label) => {
      const value = label === config.none_label ? "" : label;
      const selected = (current.vex_justification ?? "") === value ? "selected" : "";
      return `<option value="${escapeHtml(value)}" ${selected}>${escapeHtml(label)}</option>`;
    })
    .join("");
  const feedback = form.vectorFeedback;
  const vectorNote = feedback
    ? feedback.valid
      ? `<span class="ok">parses</span>`
      : `<span class="error">${escapeHtml(feedback.error ?? "does not parse")}</span>`
    : "";
  return `
<section class="detail" data-eval-id="${escapeHtml(form.evaluationId)}">
  ${contextPanel(asset, notification)}
  <form data-action="review">
    <label>Category
      <select name="vex_category">
        ${["Affected", "NotAffected", "Fixed", "UnderInvestigation"]
          .map(
            (c) =>
              `<option value="${c}" ${current.vex_category === c ? "selected" : ""}>${c}</option>`,
          )
          .join("")}
      </select>
    </label>
    <label>Justification
      <select name="vex_justification" ${lockJustification ? "disabled" : ""}>${options}</select>
    </label>
    <label>Internal comment
      <textarea name="internal_comment">${escapeHtml(current.internal_comment)}</textarea>
    </label>
    <label>Customer comment
      <textarea name="customer_comment">${escapeHtml(current.customer_comment)}</textarea>
    </label>
    <label>Environmental vector
      <input name="environmental_vector" value="${escapeHtml(current.environmental_vector ?? "")}"
        ${enableVector ? "" : "disabled"}> ${vectorNote}
    </label>
    <div class="actions">
      <button type="submit">Submit review</button>
      <a href="#/queue">Back to queue</a>
    </div>
  </form>
</section>`;
}

export function renderStats(stats: StatsPayload): string {
  const cards: [string, string][] = [
    ["Drafts pending", String(stats.drafts_pending)],
    ["Reviewed", String(stats.reviewed)],
    ["Accepted", String(stats.accepted)],
    ["Corrected", String(stats.corrected)],
    ["Acceptance rate", acceptancePercent(stats)],
    ["Mean review duration", formatSeconds(stats.mean_review_duration_seconds)],
    [
      "Estimated time saved",
      `${formatSeconds(timeSavedSeconds(stats))} (baseline ${formatSeconds(
        stats.expert_baseline_seconds,
      )}/review)`,
    ],
  ];
  const cardHtml = cards
    .map(
      ([label, value]) => `
    <div class="card"><span class="label">${escapeHtml(label)}</span><span class="value">${escapeHtml(
      value,
    )}</span></div>`,
    )
    .join("");
  return `<section class="stats">${cardHtml}</section>`;
}
