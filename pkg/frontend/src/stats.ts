/** Dashboard helpers. The service computes the authoritative figures; the
 * client re-derives time saved from the same formula so a mismatch is
 * visible in tests. */

import type { StatsPayload } from "./types.js";

/** reviews with a recorded duration x (expert baseline - observed mean). */
export function timeSavedSeconds(stats: StatsPayload): number {
  return (
    stats.reviews_with_duration *
    (stats.expert_baseline_seconds - stats.mean_review_duration_seconds)
  );
}

export function acceptancePercent(stats: StatsPayload): string {
  return `${Math.round(stats.acceptance_rate * 100)}%`;
}

export function formatSeconds(value: number): string {
  const total = Math.round(value);
  if (Math.abs(total) < 60) return `${total}s`;
  const minutes = Math.trunc(total / 60);
  const seconds = Math.abs(total % 60);
  if (Math.abs(minutes) < 60) return `${minutes}m ${seconds}s`;
  const hours = Math.trunc(minutes / 60);
  return `${hours}h ${Math.abs(minutes % 60)}m`;
}
