import { describe, expect, it } from "vitest";

import {
  renderBanner,
  renderClarifications,
  renderQuery,
  renderReport,
  renderStages,
} from "../src/render.js";
import { applyEvent, initialView, resolveClarification } from "../src/state.js";
import { Report } from "../src/types.js";

const REPORT: Report = {
  title: "Adult Hypertension Prevalence",
  summary_for_non_experts: "About one in four adults is affected.",
  assumptions: "Adults are 18 or older.",
  definitions: "Prevalence is a share of adults.",
  experiments: [
    {
      experiment_id: "exp_prevalence",
      description: "Share of adults flagged hypertensive: 0.25.",
      columns_used: ["age", "hypertension"],
    },
  ],
  limitations: "Single survey wave.",
  conclusions: "Roughly 25% of adults are affected.",
  dataset_link: "https://data.example/dataset/hyp-001",
};

describe("renderReport", () => {
  it("renders all eight sections in presentation order", () => {
    const html = renderReport(REPORT);
    const order = [
      "Adult Hypertension Prevalence",
      "Summary for Non-Experts",
      "Analysis Assumptions",
      "Analysis Definitions",
      "Experiments",
      "Limitations",
      "Conclusions",
      "Dataset Link",
    ];
    const positions = order.map((heading) => html.indexOf(heading));
    expect(positions.every((p) => p >= 0)).toBe(true);
    expect([...positions].sort((a, b) => a - b)).toEqual(positions);
  });

  it("renders the dataset link as a live anchor", () => {
    const html = renderReport(REPORT);
    expect(html).toContain('<a href="https://data.example/dataset/hyp-001">');
  });

  it("escapes markup in report fields", () => {
    const html = renderReport({ ...REPORT, title: "<script>x</script>" });
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("view rendering", () => {
  it("shows the clarification dialog only while one is pending", () => {
    let view = initialView("s1", "q about high blood pressure");
    expect(renderClarifications(view)).toBe("");
    view = applyEvent(view, {
      index: 0,
      type: "clarification_proposed",
      data: {
        substitution_index: 0,
        original: "high blood pressure",
        replacement: "hypertension",
        category: "imprecise_term",
      },
    });
    const html = renderClarifications(view);
    expect(html).toContain("clarification-dialog");
    expect(html).toContain('data-action="accept"');
    expect(html).toContain('data-action="reject"');
    view = resolveClarification(view, 0, true);
    expect(renderClarifications(view)).toBe("");
  });

  it("strikes through rejected replacements in the query view", () => {
    let view = initialView("s1", "q about high blood pressure");
    view = applyEvent(view, {
      index: 0,
      type: "clarification_proposed",
      data: {
        substitution_index: 0,
        original: "high blood pressure",
        replacement: "hypertension",
        category: "imprecise_term",
      },
    });
    view = resolveClarification(view, 0, false);
    const html = renderQuery(view);
    expect(html).toContain('<del class="rejected">hypertension</del>');
    expect(html).toContain("high blood pressure");
  });

  it("marks stage statuses on the timeline", () => {
    let view = initialView("s1", "q");
    view = applyEvent(view, { index: 0, type: "stage_started", data: { stage: "intent" } });
    view = applyEvent(view, { index: 1, type: "stage_completed", data: { stage: "intent" } });
    view = applyEvent(view, { index: 2, type: "stage_filled", data: { stage: "discovery" } });
    const html = renderStages(view);
    expect(html).toContain('data-stage="intent">intent: done');
    expect(html).toContain('data-stage="discovery">discovery: filled');
    expect(html).toContain('data-stage="analysis">analysis: pending');
  });

  it("renders error banners with escaping", () => {
    expect(renderBanner("session <b>not</b> found")).toContain(
      "session &lt;b&gt;not&lt;/b&gt; found",
    );
  });
});
