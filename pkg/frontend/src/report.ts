/** Display formatting for run reports and metric rows.
 *
 * Single-source-of-truth rule: every number shown comes verbatim from the
 * API payload. This module only copies and stringifies fields; it never
 * recomputes rates, deltas, or classifications from other fields.
 */

import type { MetricsRowDto, OutcomeDto, RunReportDto } from "./types.js";

export interface OutcomeCard {
  category: string;
  successes: string;
  fulfilledTotal: string;
  fulfilledAndProgressed: string;
}

export interface RunCard {
  runIndex: string;
  seed: string;
  success: string;
  fulfilled: string;
  milestonesAchieved: string;
  resultSessionRef: string;
}

export interface ReportView {
  sessionId: string;
  interventionId: string;
  category: string;
  targetStep: string;
  run: RunCard;
  outcome: OutcomeCard | null;
}

function show(value: unknown): string {
  if (value === null || value === undefined) {
    return "pending";
  }
  return String(value);
}

export function outcomeCard(outcome: OutcomeDto): OutcomeCard {
  return {
    category: outcome.category,
    successes: show(outcome.successes),
    fulfilledTotal: show(outcome.fulfilled_total),
    fulfilledAndProgressed: show(outcome.fulfilled_and_progressed),
  };
}

export function formatRunReport(report: RunReportDto): ReportView {
  return {
    sessionId: report.session_id,
    interventionId: report.intervention.id,
    category: report.intervention.category,
    targetStep: show(report.intervention.target_step),
    run: {
      runIndex: show(report.run.run_index),
      seed: show(report.run.seed),
      success: show(report.run.success),
      fulfilled: show(report.run.fulfilled),
      milestonesAchieved: show(report.run.milestones_achieved),
      resultSessionRef: report.run.result_session_ref,
    },
    outcome: report.outcome === null ? null : outcomeCard(report.outcome),
  };
}

export interface MetricsRowView {
  label: string;
  intervenedTrials: string;
  totalRuns: string;
  successfulRuns: string;
  trialSuccessRate: string;
  progressMade: string;
  categoryCells: Array<{ category: string; count: string; percentage: string }>;
}

export function formatMetricsRow(row: MetricsRowDto): MetricsRowView {
  const categories = Object.keys(row.category_counts).sort();
  return {
    label: row.label,
    intervenedTrials: show(row.intervened_trials),
    totalRuns: show(row.total_runs),
    successfulRuns: show(row.successful_runs),
    trialSuccessRate: show(row.trial_success_rate),
    progressMade: show(row.progress_made),
    categoryCells: categories.map((category) => ({
      category,
      count: show(row.category_counts[category]),
      percentage: show(row.category_percentages[category]),
    })),
  };
}
