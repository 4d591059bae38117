import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Console, renderHtml } from "../src/app.js";
import { renderSessionTimeline, timelineError } from "../src/timeline.js";
import { BASE_STEPS, BASE_TRIALS } from "./fixtures.js";
import { createMockApi } from "./mockApi.js";

describe("renderSessionTimeline", () => {
  it("renders one boundary marker per trial for the 4-trial session", () => {
    const view = renderSessionTimeline(BASE_STEPS, BASE_TRIALS, "max_rounds");
    expect(view.state).toBe("timeline");
    expect(view.markers).toHaveLength(4);
    expect(view.markers.map((m) => m.atStep)).toEqual([0, 3, 6, 9]);
    expect(view.markers[0]!.label).toContain("Trial 1");
  });

  it("keeps steps in order with agent and kind badges", () => {
    const view = renderSessionTimeline(BASE_STEPS, BASE_TRIALS, "max_rounds");
    expect(view.rows.map((r) => r.index)).toEqual(
      BASE_STEPS.map((s) => s.index),
    );
    expect(view.rows[1]!.agentId).toBe("orchestrator");
    expect(view.rows[2]!.agentId).toBe("solver");
  });

  it("distinguishes plan and replan steps from execution steps", () => {
    const view = renderSessionTimeline(BASE_STEPS, BASE_TRIALS, "max_rounds");
    const planning = view.rows.filter((r) => r.visual === "planning");
    expect(planning.map((r) => r.index)).toEqual([0, 3, 6, 9]);
    expect(view.rows[1]!.visual).toBe("execution");
  });

  it("returns the empty-state view for a session with no steps", () => {
    const view = renderSessionTimeline([], [], null);
    expect(view.state).toBe("empty");
    expect(view.rows).toHaveLength(0);
    expect(view.markers).toHaveLength(0);
  });

  it("flags abnormal termination but not final_answer", () => {
    const flagged = renderSessionTimeline(BASE_STEPS, BASE_TRIALS, "runtime_error");
    expect(flagged.terminationFlag).toBe("runtime_error");
    const clean = renderSessionTimeline(BASE_STEPS, BASE_TRIALS, "final_answer");
    expect(clean.terminationFlag).toBeNull();
  });

  it("builds an error banner view", () => {
    const view = timelineError("404: unknown session: nope");
    expect(view.state).toBe("error");
    expect(view.banner).toBe("404: unknown session: nope");
  });
});

describe("Console.selectSession", () => {
  it("loads the recorded 4-trial session through the mock API", async () => {
    const mock = createMockApi();
    const console_ = new Console(new ApiClient("http://mock", mock.fetch), 0);
    await console_.refreshSessions();
    expect(console_.view.sessions.map((s) => s.session_id)).toEqual([
      "base",
      "imported",
    ]);

    await console_.selectSession("base");
    expect(console_.view.trials).toHaveLength(4);
    expect(console_.view.timeline.markers).toHaveLength(4);
    expect(console_.view.hypotheses).toHaveLength(4);

    const html = renderHtml(console_.view);
    const markerCount = (html.match(/class="trial-marker"/g) ?? []).length;
    expect(markerCount).toBe(4);
  });

  it("shows an error banner when the session is unknown", async () => {
    const mock = createMockApi();
    const console_ = new Console(new ApiClient("http://mock", mock.fetch), 0);
    await console_.selectSession("nope");
    expect(console_.view.timeline.state).toBe("error");
    expect(console_.view.timeline.banner).toBe("404: unknown session: nope");
  });
});
