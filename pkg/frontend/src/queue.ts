/** Review queue model. Ordering is server-authoritative: rows are rendered
 * exactly in the order the service returns them, never re-sorted here. */

import { ApiClient, ApiError, QueueQuery } from "./api.js";
import type { AssetRecord, EvaluationRecord, NotificationRecord } from "./types.js";

export interface QueueFilters {
  status?: string;
  category?: string;
  org?: string;
}

export interface QueueRow {
  id: string;
  productLabel: string;
  notificationSummary: string;
  category: string;
  flags: string[];
  age: string;
}

export type QueueStatus = "idle" | "loading" | "ready" | "empty" | "error";

export interface QueueState {
  rows: QueueRow[];
  total: number;
  pageIndex: number;
  pageCount: number;
  status: QueueStatus;
  error: string | null;
}

export function pageCount(total: number, limit: number): number {
  if (total <= 0 || limit <= 0) return 0;
  return Math.ceil(total / limit);
}

export function summarize(text: string, max = 80): string {
  const clean = text.replace(/\s+/g, " ").trim();
  if (clean.length <= max) return clean;
  return `${clean.slice(0, max - 1).trimEnd()}…`;
}

export function formatAge(createdAt: string, now: Date): string {
  if (!createdAt) return "";
  const created = new Date(createdAt);
  const seconds = Math.max(0, Math.floor((now.getTime() - created.getTime()) / 1000));
  if (seconds < 60) return "just now";
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m ago`;
  if (seconds < 86400) return `${Math.floor(seconds / 3600)}h ago`;
  return `${Math.floor(seconds / 86400)}d ago`;
}

export class QueueModel {
  state: QueueState = {
    rows: [],
    total: 0,
    pageIndex: 0,
    pageCount: 0,
    status: "idle",
    error: null,
  };
  filters: QueueFilters = {};

  // cursors[i] is the cursor that fetches page i; page 0 needs none.
  private cursors: (string | undefined)[] = [undefined];
  private assets = new Map<string, Promise<AssetRecord>>();
  private notifications = new Map<string, Promise<NotificationRecord>>();

  constructor(
    private client: ApiClient,
    public limit = 20,
  ) {}

  setFilters(filters: QueueFilters): void {
    this.filters = { ...filters };
    this.cursors = [undefined];
  }

  async loadPage(pageIndex: number, now: Date = new Date()): Promise<QueueState> {
    const cursor = this.cursors[pageIndex];
    if (pageIndex !== 0 && cursor === undefined) {
      throw new Error(`page ${pageIndex} has not been reached yet`);
    }
    this.state = { ...this.state, status: "loading", error: null };
    const query: QueueQuery = {
      ...this.filters,
      limit: this.limit,
      cursor,
    };
    try {
      const page = await this.client.listEvaluations(query);
      if (page.next_cursor !== null) {
        this.cursors[pageIndex + 1] = page.next_cursor;
      }
      const rows = await Promise.all(page.items.map((item) => this.toRow(item, now)));
      this.state = {
        rows,
        total: page.total,
        pageIndex,
        pageCount: pageCount(page.total, this.limit),
        status: page.total === 0 ? "empty" : "ready",
        error: null,
      };
    } catch (error) {
      const message =
        error instanceof ApiError ? error.message : `service unreachable: ${String(error)}`;
      this.state = { ...this.state, status: "error", error: message };
    }
    return this.state;
  }

  async nextPage(now: Date = new Date()): Promise<QueueState> {
    return this.loadPage(this.state.pageIndex + 1, now);
  }

  async prevPage(now: Date = new Date()): Promise<QueueState> {
    return this.loadPage(Math.max(0, this.state.pageIndex - 1), now);
  }

  hasNextPage(): boolean {
    return this.cursors[this.state.pageIndex + 1] !== undefined;
  }

  /** Optimistic removal after submit; returns the row and its position so a
   * failed submission can roll it back. */
  removeRow(id: string): { row: QueueRow; index: number } | null {
    const index = this.state.rows.findIndex((row) => row.id === id);
    if (index < 0) return null;
    const row = this.state.rows[index]!;
    const rows = this.state.rows.slice();
    rows.splice(index, 1);
    this.state = { ...this.state, rows, total: Math.max(0, this.state.total - 1) };
    return { row, index };
  }

  restoreRow(row: QueueRow, index: number): void {
    const rows = this.state.rows.slice();
    rows.splice(Math.min(index, rows.length), 0, row);
    this.state = { ...this.state, rows, total: this.state.total + 1 };
  }

  private async toRow(item: EvaluationRecord, now: Date): Promise<QueueRow> {
    const [asset, notification] = await Promise.all([
      this.lookupAsset(item.asset_id),
      this.lookupNotification(item.notification_id),
    ]);
    return {
      id: item.id,
      productLabel: asset ? asset.product_label : item.asset_id,
      notificationSummary: notification ? summarize(notification.description) : item.notification_id,
      category: item.vex_category,
      flags: item.flags.slice(),
      age: formatAge(item.created_at, now),
    };
  }

  private lookupAsset(id: string): Promise<AssetRecord | null> {
    if (!this.assets.has(id)) {
      this.assets.set(id, this.client.getAsset(id));
    }
    return this.assets.get(id)!.catch(() => null);
  }

  private lookupNotification(id: string): Promise<NotificationRecord | null> {
    if (!this.notifications.has(id)) {
      this.notifications.set(id, this.client.getNotification(id));
    }
    return this.notifications.get(id)!.catch(() => null);
  }
}
