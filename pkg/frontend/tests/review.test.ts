import { describe, expect, it } from "vitest";

import type { ApiClient } from "../src/api.js";
import {
  buildReviewRequest,
  changedFields,
  isDirty,
  justificationLocked,
  openForm,
  prepareSubmission,
  setField,
  vectorEditorEnabled,
} from "../src/review.js";
import { makeRecord } from "./helpers.js";

const OPENED = 1_700_000_000_000;

describe("review form", () => {
  it("submits an unchanged form as an Accept with the review duration", () => {
    const form = openForm(makeRecord(), OPENED);
    const request = buildReviewRequest(form, "alice", OPENED + 61_000);
    expect(request.action).toBe("Accept");
    expect(request.corrected_fields).toBeUndefined();
    expect(request.duration_seconds).toBe(61);
    expect(request.reviewer).toBe("alice");
  });

  it("submits any edit as a Correct carrying only the changed fields", () => {
    let form = openForm(makeRecord(), OPENED);
    form = setField(form, "internal_comment", "Mitigated by kiosk mode.");
    expect(isDirty(form)).toBe(true);
    const request = buildReviewRequest(form, "alice", OPENED + 120_000);
    expect(request.action).toBe("Correct");
    expect(request.corrected_fields).toEqual({
      internal_comment: "Mitigated by kiosk mode.",
    });
    expect(request.duration_seconds).toBe(120);
  });

  it("reverting an edit turns the submission back into an Accept", () => {
    const record = makeRecord();
    let form = openForm(record, OPENED);
    form = setField(form, "customer_comment", "different");
    form = setField(form, "customer_comment", record.customer_comment);
    expect(changedFields(form)).toEqual({});
    expect(buildReviewRequest(form, "", OPENED).action).toBe("Accept");
  });

  it("clears the vector when the category leaves Affected", () => {
    let form = openForm(makeRecord(), OPENED);
    expect(vectorEditorEnabled(form)).toBe(true);
    form = setField(form, "vex_category", "NotAffected");
    expect(form.current.environmental_vector).toBeNull();
    expect(vectorEditorEnabled(form)).toBe(false);
    const changed = changedFields(form);
    expect(changed.vex_category).toBe("NotAffected");
    expect("environmental_vector" in changed).toBe(true);
    expect(changed.environmental_vector).toBeNull();
  });

  it("ignores vector edits while the editor is disabled", () => {
    let form = openForm(
      makeRecord({ vex_category: "NotAffected", environmental_vector: null }),
      OPENED,
    );
    form = setField(form, "environmental_vector", "CVSS:3.1/MAV:N");
    expect(form.current.environmental_vector).toBeNull();
    expect(isDirty(form)).toBe(false);
  });

  it("locks the justification to None while the category is Affected", () => {
    const record = makeRecord({
      vex_category: "NotAffected",
      vex_justification: "ComponentNotPresent",
      environmental_vector: null,
    });
    let form = openForm(record, OPENED);
    expect(justificationLocked(form)).toBe(false);

    form = setField(form, "vex_category", "Affected");
    expect(form.current.vex_justification).toBeNull();
    expect(justificationLocked(form)).toBe(true);

    // The control is disabled; the model backstop ignores stray edits.
    form = setField(form, "vex_justification", "VulnerableCodeNotPresent");
    expect(form.current.vex_justification).toBeNull();
  });

  it("maps the empty select value to a null justification", () => {
    const record = makeRecord({
      vex_category: "NotAffected",
      vex_justification: "ComponentNotPresent",
      environmental_vector: null,
    });
    let form = openForm(record, OPENED);
    form = setField(form, "vex_justification", "");
    expect(form.current.vex_justification).toBeNull();
    expect(changedFields(form)).toEqual({ vex_justification: null });
  });
});

function validatorStub(valid: boolean, calls: string[]): ApiClient {
  return {
    validateVector: async (text: string) => {
      calls.push(text);
      return valid
        ? { valid: true, metrics: { MAV: "N" }, error: null }
        : { valid: false, metrics: null, error: "unknown metric XX" };
    },
  } as unknown as ApiClient;
}

describe("prepareSubmission", () => {
  it("blocks submission while the vector does not parse", async () => {
    const calls: string[] = [];
    let form = openForm(makeRecord(), OPENED);
    form = setField(form, "environmental_vector", "CVSS:3.1/XX:9");
    const plan = await prepareSubmission(validatorStub(false, calls), form, "a", OPENED);
    expect(plan.blocked).toBe(true);
    expect(plan.request).toBeNull();
    expect(plan.problems[0]).toContain("unknown metric XX");
    expect(form.vectorFeedback?.valid).toBe(false);
    expect(calls).toEqual(["CVSS:3.1/XX:9"]);
  });

  it("passes a parsing vector through to a Correct request", async () => {
    const calls: string[] = [];
    let form = openForm(makeRecord(), OPENED);
    form = setField(form, "environmental_vector", "CVSS:3.1/MAV:N/CR:H");
    const plan = await prepareSubmission(validatorStub(true, calls), form, "a", OPENED + 30_000);
    expect(plan.blocked).toBe(false);
    expect(plan.request?.action).toBe("Correct");
    expect(plan.request?.corrected_fields).toEqual({
      environmental_vector: "CVSS:3.1/MAV:N/CR:H",
    });
  });

  it("skips validation when the vector is untouched", async () => {
    const calls: string[] = [];
    let form = openForm(makeRecord(), OPENED);
    form = setField(form, "internal_comment", "edited");
    const plan = await prepareSubmission(validatorStub(false, calls), form, "a", OPENED);
    expect(plan.blocked).toBe(false);
    expect(calls).toEqual([]);
  });
});
