/** Console shell: five fixed panels over the service API.
 *
 * 1. Recorded session list.
 * 2. Trial and hypothesis overview for the selected session.
 * 3. Main conversation timeline.
 * 4. Intervention editor.
 * 5. Replay history.
 *
 * All state lives on the server; reloading the page and re-selecting the
 * same session reconstructs an identical view.
 */

import { ApiClient, ApiError } from "./api.js";
import { InterventionPanel } from "./intervention.js";
import { renderSessionTimeline, timelineError, TimelineView } from "./timeline.js";
import type {
  HypothesisDto,
  InterventionDraft,
  SessionSummaryDto,
  StepDto,
  TrialDto,
} from "./types.js";

export interface ConsoleView {
  sessions: SessionSummaryDto[];
  selectedSessionId: string | null;
  trials: TrialDto[];
  hypotheses: HypothesisDto[];
  timeline: TimelineView;
  panel: InterventionPanel;
}

export class Console {
  view: ConsoleView;
  private steps: StepDto[] = [];

  constructor(private readonly api: ApiClient, pollIntervalMs = 250) {
    this.view = {
      sessions: [],
      selectedSessionId: null,
      trials: [],
      hypotheses: [],
      timeline: renderSessionTimeline([], [], null),
      panel: new InterventionPanel(api, pollIntervalMs),
    };
  }

  async refreshSessions(): Promise<void> {
    this.view.sessions = await this.api.listSessions();
  }

  async selectSession(sessionId: string): Promise<void> {
    try {
      const [detail, steps, trials, hypotheses] = await Promise.all([
        this.api.getSession(sessionId),
        this.api.getSteps(sessionId),
        this.api.getTrials(sessionId),
        this.api.getHypotheses(sessionId),
      ]);
      this.steps = steps;
      this.view.selectedSessionId = sessionId;
      this.view.trials = trials;
      this.view.hypotheses = hypotheses;
      this.view.timeline = renderSessionTimeline(steps, trials, detail.termination);
    } catch (err) {
      if (err instanceof ApiError) {
        this.view.timeline = timelineError(`${err.status}: ${err.detail}`);
        return;
      }
      throw err;
    }
  }

  /** Submit the current draft against the selected session. */
  submitDraft(draft: InterventionDraft): Promise<boolean> {
    const sessionId = this.view.selectedSessionId;
    if (sessionId === null) {
      this.view.panel.banner = "no session selected";
      return Promise.resolve(false);
    }
    return this.view.panel.submit(sessionId, draft, this.steps.length);
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Render the console state as a static HTML fragment. */
export function renderHtml(view: ConsoleView): string {
  const sessions = view.sessions
    .map(
      (s) =>
        `<li data-session="${escapeHtml(s.session_id)}">` +
        `${escapeHtml(s.session_id)} [${s.provenance}] ${s.steps} steps</li>`,
    )
    .join("");
  const markers = view.timeline.markers
    .map(
      (m) =>
        `<div class="trial-marker" data-step="${m.atStep}">${escapeHtml(m.label)}</div>`,
    )
    .join("");
  const rows = view.timeline.rows
    .map(
      (r) =>
        `<div class="step ${r.visual}" data-index="${r.index}">` +
        `<span class="badge">${escapeHtml(r.agentId)}/${r.kind}</span> ` +
        `${escapeHtml(r.preview)}</div>`,
    )
    .join("");
  const history = view.panel.history
    .map(
      (h) =>
        `<li>${escapeHtml(h.interventionId)} run ${h.run.run_index} ` +
        `success=${String(h.run.success)} fulfilled=${String(h.run.fulfilled)}</li>`,
    )
    .join("");
  const banner =
    view.panel.banner === null
      ? ""
      : `<div class="banner">${escapeHtml(view.panel.banner)}</div>`;
  const flag =
    view.timeline.terminationFlag === null
      ? ""
      : `<div class="termination-flag">${escapeHtml(view.timeline.terminationFlag)}</div>`;
  return [
    `<section id="panel-sessions"><ol>${sessions}</ol></section>`,
    `<section id="panel-trials">${markers}</section>`,
    `<section id="panel-conversation">${flag}${rows}</section>`,
    `<section id="panel-editor">${banner}</section>`,
    `<section id="panel-history"><ul>${history}</ul></section>`,
  ].join("\n");
}
