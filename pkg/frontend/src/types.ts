/** DTO shapes for the debugging service HTTP API.
 *
 * These mirror the JSON payloads byte for byte. The console never derives
 * values from them beyond formatting; see report.ts for the passthrough rule.
 */

export type Provenance = "native" | "imported";

export type Termination =
  | "final_answer"
  | "max_steps"
  | "max_rounds"
  | "runtime_error"
  | "aborted";

export type StepKind =
  | "plan"
  | "replan"
  | "instruction"
  | "agent_action"
  | "tool_call"
  | "tool_result"
  | "final_answer";

export type InterventionCategory = "ModifiedInstruction" | "PlanUpdate";

export interface MessageDto {
  content: string;
  role: string;
}

export interface StepDto {
  agent_id: string;
  checkpoint_ref: string | null;
  content_hash: string;
  index: number;
  kind: StepKind;
  message: MessageDto;
}

export interface TaskDto {
  annotated_solution: string | null;
  description: string;
  ground_truth_answer: string | null;
}

export interface SessionSummaryDto {
  session_id: string;
  provenance: Provenance;
  termination: Termination | null;
  steps: number;
  task: TaskDto;
}

export interface SessionDetailDto {
  session_id: string;
  provenance: Provenance;
  termination: Termination | null;
  steps: number;
  digest: string;
  task: TaskDto;
  schema_version: number;
}

export interface TrialDto {
  end_step: number;
  plan_text: string;
  start_step: number;
  trial_index: number;
}

export interface HypothesisDto {
  trial_index: number;
  failure_step?: number;
  failure_mode?: string;
  rationale?: string;
  no_mistake?: boolean;
  error?: string;
}

export interface InterventionDto {
  category: InterventionCategory;
  hypothesis_ref: number;
  id: string;
  rationale: string;
  replacement_text: string;
  target_step: number;
}

export interface RunDto {
  fulfilled: boolean | null;
  fulfillment_evidence: string | null;
  intervention_ref: string;
  milestones_achieved: number | null;
  result_session_ref: string;
  run_index: number;
  seed: number;
  success: boolean | null;
}

export interface OutcomeDto {
  category: string;
  fulfilled_and_progressed: number;
  fulfilled_total: number;
  successes: number;
}

export interface RunReportDto {
  run: RunDto;
  intervention: InterventionDto;
  session_id: string;
  outcome: OutcomeDto | null;
}

export interface JobDto {
  artifact_refs: string[];
  error: string | null;
  job_id: string;
  stage: string;
  status: "queued" | "running" | "done" | "failed";
}

export interface InterventionDraft {
  target_step: number;
  category: InterventionCategory;
  replacement_text: string;
  rationale?: string;
}

export interface MetricsRowDto {
  category_counts: Record<string, number>;
  category_percentages: Record<string, number>;
  intervened_trials: number;
  label: string;
  progress_made: number | null;
  successful_runs: number;
  total_runs: number;
  trial_success_rate: number | null;
}
