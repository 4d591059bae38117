/** View-model builders for the main conversation panel.
 *
 * Plan and replan steps get a distinct visual class so planning rounds stand
 * out from execution steps, and each trial contributes one boundary marker
 * at its start step.
 */

import type { StepDto, Termination, TrialDto } from "./types.js";

export type StepVisual = "planning" | "execution" | "terminal";

export interface StepRow {
  index: number;
  agentId: string;
  kind: string;
  visual: StepVisual;
  preview: string;
  checkpointRef: string | null;
}

export interface TrialMarker {
  trialIndex: number;
  atStep: number;
  label: string;
}

export interface TimelineView {
  state: "timeline" | "empty" | "error";
  rows: StepRow[];
  markers: TrialMarker[];
  terminationFlag: string | null;
  banner: string | null;
}

const PREVIEW_LIMIT = 120;

function preview(content: string): string {
  const flat = content.replace(/\s+/g, " ").trim();
  return flat.length <= PREVIEW_LIMIT ? flat : flat.slice(0, PREVIEW_LIMIT) + "...";
}

function visualFor(step: StepDto): StepVisual {
  if (step.kind === "plan" || step.kind === "replan") {
    return "planning";
  }
  if (step.kind === "final_answer") {
    return "terminal";
  }
  return "execution";
}

export function renderSessionTimeline(
  steps: StepDto[],
  trials: TrialDto[],
  termination: Termination | null,
): TimelineView {
  if (steps.length === 0) {
    return {
      state: "empty",
      rows: [],
      markers: [],
      terminationFlag: null,
      banner: null,
    };
  }
  const rows = steps.map((step) => ({
    index: step.index,
    agentId: step.agent_id,
    kind: step.kind,
    visual: visualFor(step),
    preview: preview(step.message.content),
    checkpointRef: step.checkpoint_ref,
  }));
  const markers = trials.map((trial) => ({
    trialIndex: trial.trial_index,
    atStep: trial.start_step,
    label: `Trial ${trial.trial_index + 1} (steps ${trial.start_step} to ${trial.end_step})`,
  }));
  const abnormal =
    termination !== null && termination !== "final_answer" ? termination : null;
  return {
    state: "timeline",
    rows,
    markers,
    terminationFlag: abnormal,
    banner: null,
  };
}

/** Error-banner view used when the session lookup itself fails. */
export function timelineError(message: string): TimelineView {
  return {
    state: "error",
    rows: [],
    markers: [],
    terminationFlag: null,
    banner: message,
  };
}
