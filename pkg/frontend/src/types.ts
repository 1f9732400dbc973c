/** JSON payload shapes of the review service REST API. */

export interface ComponentRef {
  name: string;
  vendor: string;
  version: string;
}

export interface AssetRecord {
  id: string;
  organization: string;
  software_name: string;
  software_version: string;
  product_label: string;
  components: ComponentRef[];
  created_at: string;
  updated_at: string;
  version: number;
}

export interface EnrichmentInfo {
  prerequisites: string[];
  typical_severity: string;
  mitigations: string[];
  capec_ids: string[];
}

export interface NotificationRecord {
  id: string;
  description: string;
  cve_ids: string[];
  affected_components: ComponentRef[];
  base_temporal_vector: string | null;
  cvss_version: string;
  enrichment: EnrichmentInfo | null;
  created_at: string;
  updated_at: string;
  version: number;
}

export interface EvaluationRecord {
  id: string;
  asset_id: string;
  notification_id: string;
  vex_category: string;
  vex_justification: string | null;
  internal_comment: string;
  customer_comment: string;
  environmental_vector: string | null;
  provenance: string;
  flags: string[];
  history: unknown[];
  reviewer: string;
  review_duration_seconds: number | null;
  created_at: string;
  updated_at: string;
  version: number;
}

export interface EvaluationPage {
  items: EvaluationRecord[];
  total: number;
  next_cursor: string | null;
}

export interface BatchRunResult {
  run_id: string;
  started_at: string;
  finished_at: string;
  notifications_processed: number;
  drafts_created: number;
  skipped_existing: number;
  failures: Record<string, string>;
}

export interface StatsPayload {
  assets: number;
  notifications: number;
  evaluations: number;
  drafts_pending: number;
  reviewed: number;
  accepted: number;
  corrected: number;
  acceptance_rate: number;
  mean_review_duration_seconds: number;
  reviews_with_duration: number;
  expert_baseline_seconds: number;
  time_saved_seconds: number;
}

export interface JustificationConfig {
  justifications: string[];
  none_label: string;
}

export interface VectorValidation {
  valid: boolean;
  metrics: Record<string, string> | null;
  error: string | null;
}

export interface ExportResult {
  path: string;
  kept: number;
  dropped: number;
}

export interface ReviewRequest {
  action: "Accept" | "Correct";
  corrected_fields?: Record<string, string | null>;
  reviewer?: string;
  duration_seconds?: number;
}
