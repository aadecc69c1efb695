/** Page wiring: one session per submitted question, updated by the ordered
 * event stream. Killing the tab never touches the running pipeline beyond
 * letting an unanswered clarification time out server-side.
 */

import {
  ApiError,
  createSession,
  fetchReport,
  postConfirmation,
  subscribeEvents,
  Subscription,
} from "./api.js";
import {
  applyEvent,
  initialView,
  resolveClarification,
  SessionView,
} from "./state.js";
import {
  renderBanner,
  renderClarifications,
  renderFailure,
  renderQuery,
  renderReport,
  renderStages,
} from "./render.js";

const BASE = "";

let view: SessionView | null = null;
let subscription: Subscription | null = null;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function redraw(): void {
  if (!view) return;
  el("query-view").innerHTML = renderQuery(view);
  el("stages").innerHTML = renderStages(view);
  el("clarifications").innerHTML = renderClarifications(view);
  el("banner").innerHTML = renderFailure(view);
}

async function showReport(): Promise<void> {
  if (!view) return;
  try {
    const { report } = await fetchReport(BASE, view.sessionId);
    el("report").innerHTML = renderReport(report);
  } catch (error) {
    el("banner").innerHTML = renderBanner(
      error instanceof ApiError ? error.message : "report fetch failed",
    );
  }
}

async function onConfirmClick(target: HTMLElement): Promise<void> {
  if (!view) return;
  const action = target.dataset.action;
  const index = Number(target.dataset.index);
  if (action !== "accept" && action !== "reject") return;
  const accepted = action === "accept";
  try {
    await postConfirmation(BASE, view.sessionId, index, accepted);
  } catch (error) {
    // 409: answered elsewhere; the decision below keeps the UI consistent
    if (!(error instanceof ApiError && error.status === 409)) {
      el("banner").innerHTML = renderBanner("confirmation failed");
      return;
    }
  }
  view = resolveClarification(view, index, accepted);
  redraw();
}

async function start(): Promise<void> {
  const query = (el("query-input") as HTMLInputElement).value.trim();
  if (!query) return;
  const autoConfirm = (el("auto-confirm") as HTMLInputElement).checked;
  subscription?.close();
  el("report").innerHTML = "";
  try {
    const sessionId = await createSession(BASE, {
      query,
      auto_confirm: autoConfirm,
    });
    view = initialView(sessionId, query);
    redraw();
    subscription = subscribeEvents(BASE, sessionId, {
      onEvent(event) {
        if (!view) return;
        view = applyEvent(view, event);
        redraw();
        if (event.type === "report_ready") void showReport();
      },
      onError(error) {
        if (error instanceof ApiError && error.status === 404) {
          el("banner").innerHTML = renderBanner("session not found");
        }
      },
    });
  } catch {
    el("banner").innerHTML = renderBanner("could not start a session");
  }
}

document.addEventListener("DOMContentLoaded", () => {
  el("ask-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void start();
  });
  el("clarifications").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.tagName === "BUTTON") void onConfirmClick(target);
  });
});
