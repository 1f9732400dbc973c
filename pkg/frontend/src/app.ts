/** Browser bootstrap: session auth, hash routing, and event wiring around
 * the models. All state lives in the models; this file only moves it in and
 * out of the document. */

import { ApiClient, ApiError } from "./api.js";
import { QueueModel } from "./queue.js";
import {
  DraftFields,
  ReviewForm,
  openForm,
  prepareSubmission,
  setField,
} from "./review.js";
import { renderDetail, renderLogin, renderQueue, renderStats } from "./render.js";
import type { AssetRecord, JustificationConfig, NotificationRecord } from "./types.js";

interface Session {
  client: ApiClient;
  queue: QueueModel;
  config: JustificationConfig;
  reviewer: string;
}

let session: Session | null = null;
let form: ReviewForm | null = null;

function root(): HTMLElement {
  return document.getElementById("app")!;
}

function connect(baseUrl: string, token: string): Promise<Session> {
  const client = new ApiClient(baseUrl.replace(/\/+$/, ""), token);
  return client
    .healthz()
    .then(() => client.justifications())
    .then((config) => ({
      client,
      queue: new QueueModel(client, 20),
      config,
      reviewer: "console",
    }));
}

async function showQueue(): Promise<void> {
  if (!session) return;
  const state = await session.queue.loadPage(session.queue.state.pageIndex);
  root().innerHTML = renderQueue(state, session.queue.hasNextPage());
}

async function showDetail(evaluationId: string): Promise<void> {
  if (!session) return;
  const { client, config } = session;
  const record = await client.getEvaluation(evaluationId);
  form = openForm(record, Date.now());
  let asset: AssetRecord | null = null;
  let notification: NotificationRecord | null = null;
  try {
    [asset, notification] = await Promise.all([
      client.getAsset(record.asset_id),
      client.getNotification(record.notification_id),
    ]);
  } catch {
    // Context panels degrade to ids; the form still works.
  }
  root().innerHTML = renderDetail(form, asset, notification, config);
  wireDetailForm(asset, notification);
}

function wireDetailForm(
  asset: AssetRecord | null,
  notification: NotificationRecord | null,
): void {
  const element = root().querySelector<HTMLFormElement>("form[data-action=review]");
  if (!element) return;
  element.addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement | HTMLSelectElement | HTMLTextAreaElement;
    if (!form || !target.name) return;
    form = setField(form, target.name as keyof DraftFields, target.value);
    root().innerHTML = renderDetail(form, asset, notification, session!.config);
    wireDetailForm(asset, notification);
  });
  element.addEventListener("submit", (event) => {
    event.preventDefault();
    void submitCurrentForm(asset, notification);
  });
}

async function submitCurrentForm(
  asset: AssetRecord | null,
  notification: NotificationRecord | null,
): Promise<void> {
  if (!session || !form) return;
  const { client, queue, reviewer, config } = session;
  const plan = await prepareSubmission(client, form, reviewer, Date.now());
  if (plan.blocked || !plan.request) {
    root().innerHTML = renderDetail(form, asset, notification, config);
    wireDetailForm(asset, notification);
    return;
  }
  const removed = queue.removeRow(form.evaluationId);
  try {
    await client.submitReview(form.evaluationId, plan.request);
    form = null;
    window.location.hash = "#/queue";
  } catch (error) {
    if (removed) queue.restoreRow(removed.row, removed.index);
    if (error instanceof ApiError && error.status === 409) {
      // Someone else reviewed it first; drop the stale form and re-sync.
      form = null;
      window.location.hash = "#/queue";
      return;
    }
    alert(error instanceof Error ? error.message : String(error));
  }
}

async function showStats(): Promise<void> {
  if (!session) return;
  root().innerHTML = renderStats(await session.client.stats());
}

async function route(): Promise<void> {
  if (!session) {
    root().innerHTML = renderLogin();
    wireLogin();
    return;
  }
  const hash = window.location.hash || "#/queue";
  const detail = hash.match(/^#\/evaluations\/(.+)$/);
  if (detail) {
    await showDetail(decodeURIComponent(detail[1]!));
  } else if (hash === "#/stats") {
    await showStats();
  } else {
    await showQueue();
  }
}

function wireLogin(): void {
  const element = root().querySelector<HTMLFormElement>("form[data-action=login]");
  if (!element) return;
  element.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(element);
    const baseUrl = String(data.get("baseUrl") || "http://localhost:8000");
    const token = String(data.get("token") || "");
    connect(baseUrl, token)
      .then((created) => {
        session = created;
        sessionStorage.setItem("review-ui", JSON.stringify({ baseUrl, token }));
        window.location.hash = "#/queue";
        void route();
      })
      .catch((error) => {
        root().innerHTML = renderLogin(
          error instanceof Error ? error.message : String(error),
        );
        wireLogin();
      });
  });
}

function wireGlobalEvents(): void {
  window.addEventListener("hashchange", () => void route());
  document.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!target || !session) return;
    const action = target.getAttribute("data-action");
    if (action === "next-page") {
      void session.queue.nextPage().then(() => void route());
    } else if (action === "prev-page") {
      void session.queue.prevPage().then(() => void route());
    } else if (action === "retry") {
      void route();
    }
  });
}

function restoreSession(): void {
  const saved = sessionStorage.getItem("review-ui");
  if (!saved) return;
  try {
    const { baseUrl, token } = JSON.parse(saved) as { baseUrl: string; token: string };
    void connect(baseUrl, token).then((created) => {
      session = created;
      void route();
    });
  } catch {
    sessionStorage.removeItem("review-ui");
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  wireGlobalEvents();
  restoreSession();
  void route();
}
