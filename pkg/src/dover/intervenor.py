"""Intervention generation, scheduling, and repeated in-situ replay.

An intervention is either a rewritten instruction at the hypothesized
failure step or a replacement plan spliced at the trial's opening plan
step.  Each intervention is replayed several times with distinct seeds;
runs are isolated, so one run crashing never aborts its siblings.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .attributor import Hypothesis
from .errors import GenerationFailed, NoEditProposed
from .provider import PromptRequest, Provider
from .runtime import Runtime, RunConfig, format_steps
from .segmenter import Trial
from .trace import Message, Role, SessionLog, StepKind


@dataclass(frozen=True)
class Intervention:
    id: str
    hypothesis_ref: int  # trial_index of the backing hypothesis
    category: str  # ModifiedInstruction | PlanUpdate
    target_step: int
    replacement_text: str
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "hypothesis_ref": self.hypothesis_ref,
            "id": self.id,
            "rationale": self.rationale,
            "replacement_text": self.replacement_text,
            "target_step": self.target_step,
        }


@dataclass
class InterventionRun:
    run_index: int  # 1-based
    intervention_ref: str
    result_session_ref: str
    seed: int
    success: bool | None = None
    fulfilled: bool | None = None
    fulfillment_evidence: str = ""
    milestones_achieved: int | None = None

    def to_dict(self) -> dict:
        return {
            "fulfilled": self.fulfilled,
            "fulfillment_evidence": self.fulfillment_evidence,
            "intervention_ref": self.intervention_ref,
            "milestones_achieved": self.milestones_achieved,
            "result_session_ref": self.result_session_ref,
            "run_index": self.run_index,
            "seed": self.seed,
            "success": self.success,
        }


@dataclass(frozen=True)
class ExecutionPlan:
    jobs: tuple[tuple[int, int], ...]  # (trial_index, run_index)
    skipped_trials: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "jobs": [list(j) for j in self.jobs],
            "skipped_trials": list(self.skipped_trials),
        }


def generate(
    hypothesis: Hypothesis,
    trial: Trial,
    session: SessionLog,
    provider: Provider,
) -> Intervention:
    """Turn a bounds-valid hypothesis into a concrete, differing edit."""
    if hypothesis.no_mistake or hypothesis.failure_step is None:
        raise GenerationFailed("cannot generate an intervention for no_mistake")
    failure_step = hypothesis.failure_step
    window = session.steps[max(trial.start_step, failure_step - 2): failure_step + 1]
    request = PromptRequest(
        template_id="intervention_recommender",
        variables={
            "task": session.task.description,
            "ground_truth": session.task.ground_truth_answer or "(not provided)",
            "rationale": hypothesis.rationale or "",
            "window": format_steps(window),
        },
        expect_schema="intervention",
    )
    for _ in range(2):  # re-ask once if the edit is a no-op
        completion = provider.complete(request)
        if completion.malformed or completion.parsed is None:
            raise GenerationFailed(
                f"malformed intervention output: {completion.raw_text[:200]}"
            )
        category = completion.parsed["category"]
        replacement = completion.parsed["replacement_text"]
        target_step = failure_step if category == "ModifiedInstruction" else trial.start_step
        original = session.steps[target_step].message.content
        if replacement and replacement != original:
            return Intervention(
                id=f"{session.session_id}-t{trial.trial_index}",
                hypothesis_ref=hypothesis.trial_index,
                category=category,
                target_step=target_step,
                replacement_text=replacement,
                rationale=completion.parsed.get("rationale", ""),
            )
    raise NoEditProposed(
        f"trial {trial.trial_index}: proposed text equals the original message"
    )


def schedule(
    session: SessionLog,
    hypotheses: list[Hypothesis],
    config: RunConfig,
) -> ExecutionPlan:
    """Group (trial x run) jobs; jobs share no mutable state."""
    jobs = []
    skipped = []
    for hypothesis in hypotheses:
        if hypothesis.no_mistake:
            skipped.append(hypothesis.trial_index)
            continue
        for run_index in range(1, config.runs_per_intervention + 1):
            jobs.append((hypothesis.trial_index, run_index))
    return ExecutionPlan(jobs=tuple(jobs), skipped_trials=tuple(skipped))


def splice_kind(intervention: Intervention, session: SessionLog) -> StepKind | None:
    """PlanUpdate forces a replan message; other edits keep the step's kind."""
    if intervention.category == "PlanUpdate":
        return StepKind.PLAN if intervention.target_step == 0 else StepKind.REPLAN
    return None


def _run_one(
    runtime: Runtime,
    intervention: Intervention,
    session: SessionLog,
    run_index: int,
) -> InterventionRun:
    seed = runtime.config.seed * 1000 + run_index
    result_id = f"{intervention.id}-r{run_index}"
    original = session.steps[intervention.target_step]
    role = Role.ORCHESTRATOR if original.message.role is Role.ORCHESTRATOR else original.message.role
    runtime.replay_with_edit(
        session,
        intervention.target_step,
        Message(role, intervention.replacement_text),
        kind_override=splice_kind(intervention, session),
        new_session_id=result_id,
        seed=seed,
    )
    return InterventionRun(
        run_index=run_index,
        intervention_ref=intervention.id,
        result_session_ref=result_id,
        seed=seed,
    )


def execute(
    intervention: Intervention,
    session: SessionLog,
    runtime_factory,
    config: RunConfig,
    workers: int = 1,
) -> list[InterventionRun]:
    """Replay the intervention ``runs_per_intervention`` times.

    ``runtime_factory()`` must yield a fresh, isolated Runtime per run.
    Runtime-level failures seal that run's session with a runtime_error
    termination; they never abort sibling runs.
    """
    indices = range(1, config.runs_per_intervention + 1)

    def job(run_index: int) -> InterventionRun:
        return _run_one(runtime_factory(), intervention, session, run_index)

    if workers <= 1:
        return [job(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, indices))
