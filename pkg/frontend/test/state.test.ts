import { describe, expect, it } from "vitest";

import {
  applyEvent,
  applyEvents,
  displayQuery,
  initialView,
  resolveClarification,
} from "../src/state.js";
import { SessionEvent } from "../src/types.js";

const QUERY = "How common is high blood pressure among adults?";

function event(index: number, type: string, data: Record<string, unknown> = {}): SessionEvent {
  return { index, type, data };
}

function clarification(index: number, substitutionIndex = 0): SessionEvent {
  return event(index, "clarification_proposed", {
    substitution_index: substitutionIndex,
    original: "high blood pressure",
    replacement: "hypertension",
    category: "imprecise_term",
  });
}

describe("session reducer", () => {
  it("tracks stage transitions in order", () => {
    let view = initialView("s1", QUERY);
    view = applyEvents(view, [
      event(0, "stage_started", { stage: "intent" }),
      event(1, "stage_completed", { stage: "intent" }),
      event(2, "stage_started", { stage: "discovery" }),
    ]);
    expect(view.stages.intent).toBe("done");
    expect(view.stages.discovery).toBe("running");
    expect(view.stages.analysis).toBe("pending");
    expect(view.nextIndex).toBe(3);
  });

  it("rejects out-of-order events", () => {
    const view = initialView("s1", QUERY);
    expect(() => applyEvent(view, event(2, "stage_started", { stage: "intent" }))).toThrow(
      /out of order/,
    );
  });

  it("marks gap-filled stages and counts backtracks", () => {
    let view = initialView("s1", QUERY);
    view = applyEvents(view, [
      event(0, "stage_filled", { stage: "intent" }),
      event(1, "backtrack", { exclude: "pkg-1" }),
    ]);
    expect(view.stages.intent).toBe("filled");
    expect(view.backtracks).toBe(1);
  });

  it("queues pending clarifications until resolved", () => {
    let view = initialView("s1", QUERY);
    view = applyEvent(view, clarification(0));
    expect(view.pending).toHaveLength(1);
    view = resolveClarification(view, 0, true);
    expect(view.pending).toHaveLength(0);
    expect(view.decisions[0]?.accepted).toBe(true);
  });

  it("rejects resolving an unknown clarification", () => {
    const view = initialView("s1", QUERY);
    expect(() => resolveClarification(view, 7, true)).toThrow(/no pending/);
  });

  it("records failure and report readiness", () => {
    let view = initialView("s1", QUERY);
    view = applyEvent(view, event(0, "failed", { reason: "pipeline_failed", detail: "x" }));
    expect(view.failure?.reason).toBe("pipeline_failed");
    let other = initialView("s2", QUERY);
    other = applyEvent(other, event(0, "report_ready", { title: "t" }));
    expect(other.reportReady).toBe(true);
  });
});

describe("displayQuery", () => {
  it("applies accepted substitutions in place", () => {
    let view = initialView("s1", QUERY);
    view = applyEvent(view, clarification(0));
    view = resolveClarification(view, 0, true);
    const segments = displayQuery(view);
    expect(segments.map((s) => s.text).join("")).toBe(
      "How common is hypertension among adults?",
    );
    expect(segments.find((s) => s.kind === "accepted")?.text).toBe("hypertension");
  });

  it("keeps the original and flags the proposal when rejected", () => {
    let view = initialView("s1", QUERY);
    view = applyEvent(view, clarification(0));
    view = resolveClarification(view, 0, false);
    const segments = displayQuery(view);
    expect(segments.filter((s) => s.kind === "plain").map((s) => s.text).join("")).toBe(QUERY);
    expect(segments.find((s) => s.kind === "rejected")?.text).toBe("hypertension");
  });

  it("handles one accepted and one rejected substitution", () => {
    let view = initialView("s1", "adults with high blood pressure in the US");
    view = applyEvents(view, [
      clarification(0, 0),
      event(1, "clarification_proposed", {
        substitution_index: 1,
        original: "the US",
        replacement: "the United States",
        category: "scope",
      }),
    ]);
    view = resolveClarification(view, 0, true);
    view = resolveClarification(view, 1, false);
    const shown = displayQuery(view)
      .filter((s) => s.kind !== "rejected")
      .map((s) => s.text)
      .join("");
    expect(shown).toBe("adults with hypertension in the US");
  });
});
