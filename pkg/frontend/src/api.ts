/** Thin typed client over the service HTTP API.
 *
 * The console talks to the service exclusively through this module; there is
 * no direct store access and no fallback computation on the client side.
 */

import type {
  InterventionDraft,
  InterventionDto,
  HypothesisDto,
  JobDto,
  RunDto,
  RunReportDto,
  SessionDetailDto,
  SessionSummaryDto,
  StepDto,
  TrialDto,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

/** Non-2xx response, carrying the status and the server's detail verbatim. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export interface PollOptions {
  intervalMs?: number;
  maxPolls?: number;
}

const DEFAULT_POLL: Required<PollOptions> = { intervalMs: 250, maxPolls: 400 };

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
    private readonly sleep: (ms: number) => Promise<void> = (ms) =>
      new Promise((resolve) => setTimeout(resolve, ms)),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      const detail =
        body && typeof body.detail === "string"
          ? body.detail
          : JSON.stringify(body);
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown, idempotencyKey?: string): Promise<T> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
    };
    if (idempotencyKey !== undefined) {
      headers["idempotency-key"] = idempotencyKey;
    }
    return this.request<T>(path, {
      method: "POST",
      headers,
      body: JSON.stringify(payload),
    });
  }

  listSessions(): Promise<SessionSummaryDto[]> {
    return this.request("/sessions");
  }

  getSession(sessionId: string): Promise<SessionDetailDto> {
    return this.request(`/sessions/${sessionId}`);
  }

  getSteps(sessionId: string): Promise<StepDto[]> {
    return this.request(`/sessions/${sessionId}/steps`);
  }

  getTrials(sessionId: string): Promise<TrialDto[]> {
    return this.request(`/sessions/${sessionId}/trials`);
  }

  getHypotheses(sessionId: string): Promise<HypothesisDto[]> {
    return this.request(`/sessions/${sessionId}/hypotheses`);
  }

  createIntervention(
    sessionId: string,
    draft: InterventionDraft,
    idempotencyKey?: string,
  ): Promise<{ intervention_id: string; intervention: InterventionDto }> {
    return this.post(`/sessions/${sessionId}/interventions`, draft, idempotencyKey);
  }

  replayIntervention(
    interventionId: string,
    runs?: number,
    idempotencyKey?: string,
  ): Promise<{ job_id: string }> {
    return this.post(
      `/interventions/${interventionId}/replay`,
      { runs: runs ?? null },
      idempotencyKey,
    );
  }

  getRuns(interventionId: string): Promise<RunDto[]> {
    return this.request(`/interventions/${interventionId}/runs`);
  }

  getRunReport(runId: string): Promise<RunReportDto> {
    return this.request(`/runs/${runId}/report`);
  }

  getJob(jobId: string): Promise<JobDto> {
    return this.request(`/jobs/${jobId}`);
  }

  /** Poll a job until it reaches done or failed. */
  async waitForJob(jobId: string, options?: PollOptions): Promise<JobDto> {
    const { intervalMs, maxPolls } = { ...DEFAULT_POLL, ...options };
    let job = await this.getJob(jobId);
    let polls = 1;
    while (job.status !== "done" && job.status !== "failed") {
      if (polls >= maxPolls) {
        throw new ApiError(504, `job ${jobId} still ${job.status} after ${polls} polls`);
      }
      await this.sleep(intervalMs);
      job = await this.getJob(jobId);
      polls += 1;
    }
    return job;
  }
}
