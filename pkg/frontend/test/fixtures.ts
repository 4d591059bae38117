/** Recorded API payload fixtures used by the mock service.
 *
 * The "base" session is a 12-step, 4-trial trace shaped like a recorded
 * math-problem session: an opening plan, three replans, and interleaved
 * instruction, tool, and answer steps.
 */

import type {
  MetricsRowDto,
  RunDto,
  SessionSummaryDto,
  StepDto,
  StepKind,
  TrialDto,
} from "../src/types.js";

const PLAN_MARKER = "We are working to address the following user request";

function hash(seedText: string): string {
  let h = 2166136261;
  for (const ch of seedText) {
    h = Math.imul(h ^ ch.charCodeAt(0), 16777619) >>> 0;
  }
  return h.toString(16).padStart(16, "0");
}

function step(
  index: number,
  agentId: string,
  kind: StepKind,
  content: string,
): StepDto {
  return {
    agent_id: agentId,
    checkpoint_ref: `ckpt_${index}`,
    content_hash: hash(`${index}|${agentId}|${kind}|${content}`),
    index,
    kind,
    message: { content, role: agentId === "orchestrator" ? "orchestrator" : "assistant" },
  };
}

function trialBlock(start: number, opener: StepKind, planText: string): StepDto[] {
  return [
    step(start, "orchestrator", opener, planText),
    step(start + 1, "orchestrator", "instruction", `@solver: attempt sub-task ${start}`),
    step(
      start + 2,
      "solver",
      "agent_action",
      `Attempt for sub-task ${start} came up short.`,
    ),
  ];
}

const planText = (round: number) =>
  `${PLAN_MARKER}\nCompute the requested total.\nRound ${round}: 1. gather 2. compute 3. answer`;

export const BASE_STEPS: StepDto[] = [
  ...trialBlock(0, "plan", planText(1)),
  ...trialBlock(3, "replan", planText(2)),
  ...trialBlock(6, "replan", planText(3)),
  ...trialBlock(9, "replan", planText(4)),
];

export const BASE_TRIALS: TrialDto[] = [0, 1, 2, 3].map((i) => ({
  end_step: i * 3 + 2,
  plan_text: planText(i + 1),
  start_step: i * 3,
  trial_index: i,
}));

export const BASE_SUMMARY: SessionSummaryDto = {
  session_id: "base",
  provenance: "native",
  termination: "max_rounds",
  steps: BASE_STEPS.length,
  task: {
    annotated_solution: null,
    description: "What is 17 plus 25?",
    ground_truth_answer: "42",
  },
};

export const IMPORTED_SUMMARY: SessionSummaryDto = {
  session_id: "imported",
  provenance: "imported",
  termination: "aborted",
  steps: 3,
  task: {
    annotated_solution: null,
    description: "Imported trace with no checkpoints.",
    ground_truth_answer: null,
  },
};

export const IMPORTED_STEPS: StepDto[] = [
  step(0, "orchestrator", "plan", planText(1)),
  step(1, "orchestrator", "instruction", "@solver: try it"),
  step(2, "solver", "agent_action", "No luck."),
];

export function makeRuns(interventionId: string): RunDto[] {
  return [1, 2, 3].map((runIndex) => ({
    fulfilled: true,
    fulfillment_evidence: "replacement instruction executed as written",
    intervention_ref: interventionId,
    milestones_achieved: 3,
    result_session_ref: `${interventionId}-r${runIndex}`,
    run_index: runIndex,
    seed: 1000 + runIndex,
    success: true,
  }));
}

/** Replay steps for a run: identical prefix up to the edit, then new tail. */
export function replaySteps(targetStep: number, replacement: string): StepDto[] {
  const prefix = BASE_STEPS.slice(0, targetStep);
  return [
    ...prefix,
    step(targetStep, "orchestrator", "instruction", replacement),
    step(targetStep + 1, "solver", "agent_action", "Worked this time: 42."),
    step(targetStep + 2, "orchestrator", "final_answer", "42"),
  ];
}

/** Outcome payload with counts that do NOT follow from the run list above.
 *
 * The mismatch is deliberate: tests assert the console shows these values
 * verbatim instead of recomputing them from the runs.
 */
export const SKEWED_OUTCOME = {
  category: "PartiallyValidated",
  fulfilled_and_progressed: 2,
  fulfilled_total: 2,
  successes: 1,
};

/** Metrics row whose rate fields disagree with its raw counts, again to
 * prove the console is a pure passthrough. */
export const SKEWED_METRICS_ROW: MetricsRowDto = {
  category_counts: { Inconclusive: 10, PartiallyValidated: 48, Refuted: 3, Validated: 11 },
  category_percentages: {
    Inconclusive: 13.9,
    PartiallyValidated: 66.7,
    Refuted: 4.2,
    Validated: 15.3,
  },
  intervened_trials: 72,
  label: "WW-AB",
  progress_made: 0.271,
  successful_runs: 9,
  total_runs: 216,
  trial_success_rate: 0.123,
};
