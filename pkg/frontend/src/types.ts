/** Wire types for the session service. */

export interface SessionEvent {
  index: number;
  type: string;
  data: Record<string, unknown>;
}

export interface Clarification {
  substitutionIndex: number;
  original: string;
  replacement: string;
  category: string;
}

export interface ReportExperiment {
  experiment_id: string;
  description: string;
  columns_used: string[];
}

export interface Report {
  title: string;
  summary_for_non_experts: string;
  assumptions: string;
  definitions: string;
  experiments: ReportExperiment[];
  limitations: string;
  conclusions: string;
  dataset_link: string;
}

export const STAGES = ["intent", "discovery", "analysis", "report"] as const;
export type Stage = (typeof STAGES)[number];

export type StageStatus = "pending" | "running" | "done" | "filled";
