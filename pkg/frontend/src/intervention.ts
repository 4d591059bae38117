/** Intervention draft editing and submission.
 *
 * Drafts are validated client-side before any request goes out: replacement
 * text must be non-empty, the target step must fall inside the loaded
 * session, and the category is limited to the two supported values. Server
 * rejections (422, 409) are surfaced verbatim in the panel banner.
 */

import { ApiClient, ApiError } from "./api.js";
import type { InterventionDraft, RunDto } from "./types.js";

export const CATEGORIES = ["ModifiedInstruction", "PlanUpdate"] as const;

export interface HistoryEntry {
  interventionId: string;
  run: RunDto;
}

export function validateDraft(
  draft: InterventionDraft,
  totalSteps: number,
): string[] {
  const errors: string[] = [];
  if (!draft.replacement_text.trim()) {
    errors.push("replacement text must be non-empty");
  }
  if (!Number.isInteger(draft.target_step)) {
    errors.push("target step must be an integer");
  } else if (draft.target_step < 0 || draft.target_step >= totalSteps) {
    errors.push(`target step must be within [0, ${totalSteps})`);
  }
  if (!(CATEGORIES as readonly string[]).includes(draft.category)) {
    errors.push(`category must be one of ${CATEGORIES.join(", ")}`);
  }
  return errors;
}

export class InterventionPanel {
  readonly history: HistoryEntry[] = [];
  banner: string | null = null;
  inFlight = false;

  constructor(
    private readonly api: ApiClient,
    private readonly pollIntervalMs = 100,
  ) {}

  /** Submit a draft, replay it, and append the resulting runs to history.
   *
   * Returns true when runs were appended. At most one submission may be in
   * flight per session; a concurrent call is rejected with a banner.
   */
  async submit(
    sessionId: string,
    draft: InterventionDraft,
    totalSteps: number,
  ): Promise<boolean> {
    if (this.inFlight) {
      this.banner = "a replay submission is already in flight";
      return false;
    }
    const errors = validateDraft(draft, totalSteps);
    if (errors.length > 0) {
      this.banner = `invalid draft: ${errors.join("; ")}`;
      return false;
    }
    this.inFlight = true;
    this.banner = null;
    try {
      const created = await this.api.createIntervention(sessionId, draft);
      const { job_id } = await this.api.replayIntervention(created.intervention_id);
      const job = await this.api.waitForJob(job_id, {
        intervalMs: this.pollIntervalMs,
      });
      if (job.status === "failed") {
        this.banner = `replay failed: ${job.error ?? "unknown error"}`;
        return false;
      }
      const runs = await this.api.getRuns(created.intervention_id);
      for (const run of runs) {
        this.history.push({ interventionId: created.intervention_id, run });
      }
      return true;
    } catch (err) {
      if (err instanceof ApiError) {
        this.banner = `${err.status}: ${err.detail}`;
        return false;
      }
      throw err;
    } finally {
      this.inFlight = false;
    }
  }
}
