/** Review form model. The form mirrors the service's correction rules so the
 * UI can never build a payload the store would have to repair:
 * a non-Affected evaluation carries no environmental vector (rule R1) and an
 * Affected evaluation carries no justification (rule R4). */

import { ApiClient } from "./api.js";
import type { EvaluationRecord, ReviewRequest, VectorValidation } from "./types.js";

export const AFFECTED = "Affected";

export interface DraftFields {
  vex_category: string;
  vex_justification: string | null;
  internal_comment: string;
  customer_comment: string;
  environmental_vector: string | null;
}

export const EDITABLE_FIELDS: readonly (keyof DraftFields)[] = [
  "vex_category",
  "vex_justification",
  "internal_comment",
  "customer_comment",
  "environmental_vector",
] as const;

export interface ReviewForm {
  evaluationId: string;
  version: number;
  baseline: DraftFields;
  current: DraftFields;
  openedAtMs: number;
  vectorFeedback: VectorValidation | null;
}

export function fieldsFromRecord(record: EvaluationRecord): DraftFields {
  return {
    vex_category: record.vex_category,
    vex_justification: record.vex_justification,
    internal_comment: record.internal_comment,
    customer_comment: record.customer_comment,
    environmental_vector: record.environmental_vector,
  };
}

export function openForm(record: EvaluationRecord, openedAtMs: number): ReviewForm {
  const baseline = fieldsFromRecord(record);
  return {
    evaluationId: record.id,
    version: record.version,
    baseline,
    current: { ...baseline },
    openedAtMs,
    vectorFeedback: null,
  };
}

export function vectorEditorEnabled(form: ReviewForm): boolean {
  return form.current.vex_category === AFFECTED;
}

export function justificationLocked(form: ReviewForm): boolean {
  return form.current.vex_category === AFFECTED;
}

/** Apply one edit, keeping the form consistent with rules R1 and R4.
 * Edits to disabled controls are ignored rather than errored: the renderer
 * disables them, this is the model-level backstop. */
export function setField(
  form: ReviewForm,
  field: keyof DraftFields,
  value: string | null,
): ReviewForm {
  const current = { ...form.current };
  if (field === "vex_category") {
    current.vex_category = value ?? current.vex_category;
    if (current.vex_category === AFFECTED) {
      current.vex_justification = null;
    } else {
      current.environmental_vector = null;
    }
  } else if (field === "vex_justification") {
    if (justificationLocked(form)) return form;
    current.vex_justification = value || null;
  } else if (field === "environmental_vector") {
    if (!vectorEditorEnabled(form)) return form;
    current.environmental_vector = value || null;
  } else {
    current[field] = value ?? "";
  }
  const feedback = field === "environmental_vector" ? null : form.vectorFeedback;
  return { ...form, current, vectorFeedback: feedback };
}

export function changedFields(form: ReviewForm): Partial<DraftFields> {
  const changed: Partial<DraftFields> = {};
  for (const field of EDITABLE_FIELDS) {
    if (form.current[field] !== form.baseline[field]) {
      changed[field] = form.current[field] as never;
    }
  }
  return changed;
}

export function isDirty(form: ReviewForm): boolean {
  return Object.keys(changedFields(form)).length > 0;
}

export function durationSeconds(form: ReviewForm, nowMs: number): number {
  return Math.max(0, (nowMs - form.openedAtMs) / 1000);
}

/** An unchanged form accepts the draft; any edit submits only the changed
 * fields as a correction. The review duration (open to submit) rides along. */
export function buildReviewRequest(
  form: ReviewForm,
  reviewer: string,
  nowMs: number,
): ReviewRequest {
  const changed = changedFields(form);
  const base = { reviewer, duration_seconds: durationSeconds(form, nowMs) };
  if (Object.keys(changed).length === 0) {
    return { action: "Accept", ...base };
  }
  return { action: "Correct", corrected_fields: changed, ...base };
}

export interface SubmissionPlan {
  blocked: boolean;
  problems: string[];
  request: ReviewRequest | null;
}

/** Validate the form against the service's vector grammar before building
 * the request. A malformed vector blocks submission with an inline problem
 * instead of a server round-trip failure. */
export async function prepareSubmission(
  client: ApiClient,
  form: ReviewForm,
  reviewer: string,
  nowMs: number,
): Promise<SubmissionPlan> {
  const changed = changedFields(form);
  const vector = form.current.environmental_vector;
  if ("environmental_vector" in changed && vector) {
    const feedback = await client.validateVector(vector);
    form.vectorFeedback = feedback;
    if (!feedback.valid) {
      return {
        blocked: true,
        problems: [`environmental vector does not parse: ${feedback.error ?? "invalid"}`],
        request: null,
      };
    }
  }
  return { blocked: false, problems: [], request: buildReviewRequest(form, reviewer, nowMs) };
}
