/** Pure HTML renderers for the session view and the finished report.
 *
 * Kept free of DOM APIs so they can be unit-tested on their string output;
 * main.ts injects the results into the page.
 */

import { displayQuery, SessionView } from "./state.js";
import { Report, STAGES } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderQuery(view: SessionView): string {
  const parts = displayQuery(view).map((segment) => {
    const text = escapeHtml(segment.text);
    if (segment.kind === "accepted") return `<mark class="accepted">${text}</mark>`;
    if (segment.kind === "rejected") return `<del class="rejected">${text}</del>`;
    return text;
  });
  return `<p class="query">${parts.join("")}</p>`;
}

export function renderStages(view: SessionView): string {
  const items = STAGES.map((stage) => {
    const status = view.stages[stage];
    return `<li class="stage stage-${status}" data-stage="${stage}">${stage}: ${status}</li>`;
  });
  const backtrack =
    view.backtracks > 0
      ? `<li class="backtrack">backtracked to discovery (${view.backtracks}x)</li>`
      : "";
  return `<ol class="stages">${items.join("")}${backtrack}</ol>`;
}

export function renderClarifications(view: SessionView): string {
  if (!view.pending.length) return "";
  const items = view.pending.map(
    (c) => `
    <div class="clarification" data-index="${c.substitutionIndex}">
      <p>Replace <strong>${escapeHtml(c.original)}</strong>
         with <strong>${escapeHtml(c.replacement)}</strong>
         <em>(${escapeHtml(c.category)})</em>?</p>
      <button data-action="accept" data-index="${c.substitutionIndex}">Accept</button>
      <button data-action="reject" data-index="${c.substitutionIndex}">Reject</button>
    </div>`,
  );
  return `<section class="clarification-dialog">${items.join("")}</section>`;
}

export function renderFailure(view: SessionView): string {
  if (!view.failure) return "";
  const { reason, detail } = view.failure;
  return `<div class="banner error">${escapeHtml(reason)}: ${escapeHtml(detail)}</div>`;
}

export function renderBanner(message: string): string {
  return `<div class="banner error">${escapeHtml(message)}</div>`;
}

/** The eight report sections, in presentation order. */
export function renderReport(report: Report): string {
  const experiments = report.experiments
    .map(
      (e) => `
      <article class="experiment">
        <h4>${escapeHtml(e.experiment_id)}</h4>
        <p>${escapeHtml(e.description)}</p>
        <p class="columns">Columns used: ${e.columns_used.map(escapeHtml).join(", ")}</p>
      </article>`,
    )
    .join("");
  return `
  <article class="report">
    <h1>${escapeHtml(report.title)}</h1>
    <h2>Summary for Non-Experts</h2>
    <p>${escapeHtml(report.summary_for_non_experts)}</p>
    <h2>Analysis Assumptions</h2>
    <p>${escapeHtml(report.assumptions)}</p>
    <h2>Analysis Definitions</h2>
    <p>${escapeHtml(report.definitions)}</p>
    <h2>Experiments</h2>
    ${experiments}
    <h2>Limitations</h2>
    <p>${escapeHtml(report.limitations)}</p>
    <h2>Conclusions</h2>
    <p>${escapeHtml(report.conclusions)}</p>
    <h2>Dataset Link</h2>
    <p><a href="${escapeHtml(report.dataset_link)}">${escapeHtml(report.dataset_link)}</a></p>
  </article>`;
}
