import type { EvaluationRecord, StatsPayload } from "../src/types.js";

export function makeRecord(overrides: Partial<EvaluationRecord> = {}): EvaluationRecord {
  return {
    id: "EV-0001",
    asset_id: "AST-1",
    notification_id: "NTF-1",
    vex_category: "Affected",
    vex_justification: null,
    internal_comment: "The driver is present on the installation media.",
    customer_comment: "No customer action is required.",
    environmental_vector: "CVSS:3.1/MAV:L/MAC:H/CR:H/IR:H/AR:M",
    provenance: "AiDraft",
    flags: [],
    history: [],
    reviewer: "",
    review_duration_seconds: null,
    created_at: "2024-01-01T00:00:00+00:00",
    updated_at: "2024-01-01T00:00:00+00:00",
    version: 1,
    ...overrides,
  };
}

export function makeStats(overrides: Partial<StatsPayload> = {}): StatsPayload {
  return {
    assets: 0,
    notifications: 0,
    evaluations: 0,
    drafts_pending: 0,
    reviewed: 0,
    accepted: 0,
    corrected: 0,
    acceptance_rate: 0,
    mean_review_duration_seconds: 0,
    reviews_with_duration: 0,
    expert_baseline_seconds: 194,
    time_saved_seconds: 0,
    ...overrides,
  };
}
