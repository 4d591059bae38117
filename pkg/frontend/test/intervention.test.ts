import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { InterventionPanel, validateDraft } from "../src/intervention.js";
import type { InterventionDraft } from "../src/types.js";
import { BASE_STEPS } from "./fixtures.js";
import { createMockApi } from "./mockApi.js";

const GOOD_DRAFT: InterventionDraft = {
  target_step: 1,
  category: "ModifiedInstruction",
  replacement_text: "@solver: add 17 and 25 and report the sum as digits",
  rationale: "the original instruction never stated the operands",
};

function makeClient(mock = createMockApi()) {
  return { mock, api: new ApiClient("http://mock", mock.fetch, () => Promise.resolve()) };
}

describe("validateDraft", () => {
  it("accepts a well-formed draft", () => {
    expect(validateDraft(GOOD_DRAFT, BASE_STEPS.length)).toEqual([]);
  });

  it("rejects empty replacement text", () => {
    const draft = { ...GOOD_DRAFT, replacement_text: "   " };
    expect(validateDraft(draft, BASE_STEPS.length)).toContain(
      "replacement text must be non-empty",
    );
  });

  it("rejects a target step outside the loaded session", () => {
    expect(validateDraft({ ...GOOD_DRAFT, target_step: 12 }, 12)).toContain(
      "target step must be within [0, 12)",
    );
    expect(validateDraft({ ...GOOD_DRAFT, target_step: -1 }, 12)).not.toEqual([]);
  });

  it("limits the category to the two supported values", () => {
    const draft = { ...GOOD_DRAFT, category: "SwapAgent" as never };
    expect(validateDraft(draft, BASE_STEPS.length)).toContain(
      "category must be one of ModifiedInstruction, PlanUpdate",
    );
  });
});

describe("InterventionPanel.submit", () => {
  it("appends 3 run entries to the history for a valid draft", async () => {
    const { api } = makeClient();
    const panel = new InterventionPanel(api, 0);
    const ok = await panel.submit("base", GOOD_DRAFT, BASE_STEPS.length);
    expect(ok).toBe(true);
    expect(panel.banner).toBeNull();
    expect(panel.history).toHaveLength(3);
    expect(panel.history.map((h) => h.run.run_index)).toEqual([1, 2, 3]);
    expect(panel.history.every((h) => h.run.success === true)).toBe(true);
  });

  it("blocks an invalid draft client-side without issuing any request", async () => {
    const { mock, api } = makeClient();
    const panel = new InterventionPanel(api, 0);
    const ok = await panel.submit(
      "base",
      { ...GOOD_DRAFT, replacement_text: "" },
      BASE_STEPS.length,
    );
    expect(ok).toBe(false);
    expect(panel.banner).toContain("replacement text must be non-empty");
    expect(mock.requests).toHaveLength(0);
  });

  it("surfaces the server's 422 verbatim when the step is out of range", async () => {
    const { mock, api } = makeClient();
    const panel = new InterventionPanel(api, 0);
    // The panel believes the session is longer than the server does, so
    // the draft passes client-side validation and the server rejects it.
    const ok = await panel.submit("base", { ...GOOD_DRAFT, target_step: 15 }, 20);
    expect(ok).toBe(false);
    expect(panel.banner).toBe("422: target_step 15 outside [0, 12)");
    expect(mock.requests).toEqual(["POST /sessions/base/interventions"]);
    expect(panel.history).toHaveLength(0);
  });

  it("surfaces a 409 banner for a draft on an imported session", async () => {
    const { api } = makeClient();
    const panel = new InterventionPanel(api, 0);
    const ok = await panel.submit("imported", GOOD_DRAFT, 3);
    expect(ok).toBe(false);
    expect(panel.banner).toBe("409: imported sessions cannot be replayed");
  });

  it("rejects a concurrent submission while one is in flight", async () => {
    const { api } = makeClient();
    const panel = new InterventionPanel(api, 0);
    const first = panel.submit("base", GOOD_DRAFT, BASE_STEPS.length);
    const second = await panel.submit("base", GOOD_DRAFT, BASE_STEPS.length);
    expect(second).toBe(false);
    expect(panel.banner).toBe("a replay submission is already in flight");
    await expect(first).resolves.toBe(true);
  });

  it("direct client call raises ApiError with the status attached", async () => {
    const { api } = makeClient();
    await expect(
      api.createIntervention("base", { ...GOOD_DRAFT, target_step: 99 }),
    ).rejects.toMatchObject({ status: 422 });
    await expect(api.getSession("nope")).rejects.toBeInstanceOf(ApiError);
  });
});
