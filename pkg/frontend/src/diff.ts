/** Side-by-side comparison of an original session and a replay run.
 *
 * Steps whose content hashes match from the start are collapsed into a
 * single prefix row; the divergence point is highlighted at the edit's
 * target step. Fulfillment status comes straight from the run payload.
 */

import type { RunDto, StepDto } from "./types.js";

export interface DiffRow {
  index: number;
  original: string | null;
  replay: string | null;
  identical: boolean;
  highlighted: boolean;
}

export interface FulfillmentBadge {
  fulfilled: boolean | null;
  evidence: string | null;
}

export interface DiffView {
  state: "diff" | "error";
  collapsedPrefix: number;
  fullyCollapsed: boolean;
  divergenceIndex: number | null;
  rows: DiffRow[];
  finalAnswers: { original: string | null; replay: string | null };
  badge: FulfillmentBadge | null;
  banner: string | null;
}

function finalAnswerOf(steps: StepDto[]): string | null {
  for (let i = steps.length - 1; i >= 0; i -= 1) {
    const step = steps[i];
    if (step !== undefined && step.kind === "final_answer") {
      return step.message.content;
    }
  }
  return null;
}

export function compareRuns(
  original: StepDto[],
  replay: StepDto[],
  targetStep: number,
  run: RunDto | null = null,
): DiffView {
  let prefix = 0;
  const shorter = Math.min(original.length, replay.length);
  while (prefix < shorter) {
    const a = original[prefix];
    const b = replay[prefix];
    if (a === undefined || b === undefined || a.content_hash !== b.content_hash) {
      break;
    }
    prefix += 1;
  }
  const fullyCollapsed =
    prefix === original.length && prefix === replay.length;
  const rows: DiffRow[] = [];
  const longer = Math.max(original.length, replay.length);
  for (let i = prefix; i < longer; i += 1) {
    rows.push({
      index: i,
      original: original[i]?.message.content ?? null,
      replay: replay[i]?.message.content ?? null,
      identical: false,
      highlighted: i === targetStep,
    });
  }
  return {
    state: "diff",
    collapsedPrefix: prefix,
    fullyCollapsed,
    divergenceIndex: fullyCollapsed ? null : prefix,
    rows,
    finalAnswers: {
      original: finalAnswerOf(original),
      replay: finalAnswerOf(replay),
    },
    badge:
      run === null
        ? null
        : { fulfilled: run.fulfilled, evidence: run.fulfillment_evidence },
    banner: null,
  };
}

/** Banner view when one of the two sessions cannot be loaded. */
export function diffError(message: string): DiffView {
  return {
    state: "error",
    collapsedPrefix: 0,
    fullyCollapsed: false,
    divergenceIndex: null,
    rows: [],
    finalAnswers: { original: null, replay: null },
    badge: null,
    banner: message,
  };
}
