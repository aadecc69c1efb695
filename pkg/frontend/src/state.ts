/** Session view state: a pure reducer over the ordered server event stream.
 *
 * The view is rebuilt by applying events in index order; confirmation
 * decisions are tracked client-side so the enhanced query can be displayed
 * with accepted replacements applied and rejected ones struck through.
 */

import { Clarification, SessionEvent, Stage, StageStatus, STAGES } from "./types.js";

export interface ClarificationDecision extends Clarification {
  accepted?: boolean;
}

export interface SessionView {
  sessionId: string;
  query: string;
  stages: Record<Stage, StageStatus>;
  backtracks: number;
  pending: Clarification[];
  decisions: ClarificationDecision[];
  events: SessionEvent[];
  nextIndex: number;
  reportReady: boolean;
  failure: { reason: string; detail: string } | null;
}

export function initialView(sessionId: string, query: string): SessionView {
  return {
    sessionId,
    query,
    stages: { intent: "pending", discovery: "pending", analysis: "pending", report: "pending" },
    backtracks: 0,
    pending: [],
    decisions: [],
    events: [],
    nextIndex: 0,
    reportReady: false,
    failure: null,
  };
}

function isStage(value: unknown): value is Stage {
  return typeof value === "string" && (STAGES as readonly string[]).includes(value);
}

/** Apply one server event; out-of-order or duplicate indexes are rejected. */
export function applyEvent(view: SessionView, event: SessionEvent): SessionView {
  if (event.index !== view.nextIndex) {
    throw new Error(
      `event out of order: got index ${event.index}, expected ${view.nextIndex}`,
    );
  }
  const next: SessionView = {
    ...view,
    stages: { ...view.stages },
    pending: [...view.pending],
    decisions: [...view.decisions],
    events: [...view.events, event],
    nextIndex: event.index + 1,
  };
  const data = event.data;
  switch (event.type) {
    case "stage_started":
      if (isStage(data.stage)) next.stages[data.stage] = "running";
      break;
    case "stage_completed":
      if (isStage(data.stage)) next.stages[data.stage] = "done";
      break;
    case "stage_filled":
      if (isStage(data.stage)) next.stages[data.stage] = "filled";
      break;
    case "backtrack":
      next.backtracks += 1;
      break;
    case "clarification_proposed":
      next.pending.push({
        substitutionIndex: Number(data.substitution_index),
        original: String(data.original),
        replacement: String(data.replacement),
        category: String(data.category),
      });
      break;
    case "report_ready":
      next.reportReady = true;
      break;
    case "failed":
      next.failure = { reason: String(data.reason), detail: String(data.detail) };
      break;
  }
  return next;
}

export function applyEvents(view: SessionView, events: SessionEvent[]): SessionView {
  return events.reduce(applyEvent, view);
}

/** Record the user's answer for a pending clarification. */
export function resolveClarification(
  view: SessionView,
  substitutionIndex: number,
  accepted: boolean,
): SessionView {
  const pending = view.pending.find((c) => c.substitutionIndex === substitutionIndex);
  if (!pending) {
    throw new Error(`no pending clarification with index ${substitutionIndex}`);
  }
  return {
    ...view,
    pending: view.pending.filter((c) => c.substitutionIndex !== substitutionIndex),
    decisions: [...view.decisions, { ...pending, accepted }],
  };
}

export interface QuerySegment {
  text: string;
  kind: "plain" | "accepted" | "rejected";
}

/** Split the raw query into display segments with decisions applied.
 *
 * Accepted substitutions replace the original phrase; rejected ones keep the
 * original but expose the proposal so it can render struck through.
 */
export function displayQuery(view: SessionView): QuerySegment[] {
  let segments: QuerySegment[] = [{ text: view.query, kind: "plain" }];
  for (const decision of view.decisions) {
    const out: QuerySegment[] = [];
    for (const segment of segments) {
      if (segment.kind !== "plain") {
        out.push(segment);
        continue;
      }
      const at = segment.text.indexOf(decision.original);
      if (at < 0) {
        out.push(segment);
        continue;
      }
      if (at > 0) out.push({ text: segment.text.slice(0, at), kind: "plain" });
      if (decision.accepted) {
        out.push({ text: decision.replacement, kind: "accepted" });
      } else {
        out.push({ text: decision.original, kind: "plain" });
        out.push({ text: decision.replacement, kind: "rejected" });
      }
      const rest = segment.text.slice(at + decision.original.length);
      if (rest) out.push({ text: rest, kind: "plain" });
    }
    segments = out;
  }
  return segments;
}
