"""Per-trial failure attribution with bounds checking.

One hypothesis per trial: a suspected agent, an absolute failure step inside
the trial, and a rationale.  Out-of-range answers get one corrective
re-prompt; persistently invalid output raises instead of storing a
hallucinated index.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AttributionFailed
from .provider import PromptRequest, Provider
from .runtime import format_steps
from .segmenter import Trial
from .trace import SessionLog


@dataclass(frozen=True)
class Hypothesis:
    trial_index: int
    no_mistake: bool = False
    failure_step: int | None = None
    suspected_agent: str | None = None
    rationale: str | None = None

    def to_dict(self) -> dict:
        return {
            "failure_step": self.failure_step,
            "no_mistake": self.no_mistake,
            "rationale": self.rationale,
            "suspected_agent": self.suspected_agent,
            "trial_index": self.trial_index,
        }


def validate_hypothesis_bounds(
    hypothesis: Hypothesis, trial: Trial, session: SessionLog
) -> bool:
    """Pure check of the hypothesis invariants."""
    if hypothesis.no_mistake:
        return (
            hypothesis.failure_step is None
            and hypothesis.suspected_agent is None
        )
    if hypothesis.failure_step is None or hypothesis.suspected_agent is None:
        return False
    if not trial.contains(hypothesis.failure_step):
        return False
    if hypothesis.failure_step >= session.total_steps:
        return False
    return session.steps[hypothesis.failure_step].agent_id == hypothesis.suspected_agent


def _request(trial: Trial, session: SessionLog, correction: str,
             include_ground_truth: bool) -> PromptRequest:
    trial_steps = session.steps[trial.start_step: trial.end_step + 1]
    ground_truth = (
        session.task.ground_truth_answer
        if include_ground_truth and session.task.ground_truth_answer
        else "(not provided)"
    )
    return PromptRequest(
        template_id="failure_proposer",
        variables={
            "task": session.task.description,
            "ground_truth": ground_truth,
            "original_plan": session.steps[0].message.content if session.steps else "",
            "trial_steps": format_steps(trial_steps),
            "correction": correction,
        },
        expect_schema="hypothesis",
    )


def attribute(
    trial: Trial,
    session: SessionLog,
    provider: Provider,
    include_ground_truth: bool = True,
) -> Hypothesis:
    """Produce a bounds-valid hypothesis for one trial, or no_mistake."""
    correction = ""
    last_error = "no output"
    for _ in range(2):  # initial ask + one corrective re-prompt
        completion = provider.complete(
            _request(trial, session, correction, include_ground_truth)
        )
        if completion.malformed or completion.parsed is None:
            last_error = f"malformed output: {completion.raw_text[:200]}"
        else:
            parsed = completion.parsed
            if parsed.get("no_mistake"):
                return Hypothesis(trial_index=trial.trial_index, no_mistake=True)
            hypothesis = Hypothesis(
                trial_index=trial.trial_index,
                failure_step=parsed.get("failure_step"),
                suspected_agent=parsed.get("agent"),
                rationale=parsed.get("rationale", ""),
            )
            if validate_hypothesis_bounds(hypothesis, trial, session):
                return hypothesis
            last_error = (
                f"step {hypothesis.failure_step} / agent "
                f"{hypothesis.suspected_agent!r} violates trial bounds"
            )
        correction = (
            f"\nYour previous answer was invalid ({last_error}). The failure "
            f"step must be between {trial.start_step} and {trial.end_step} and "
            "the agent must be the speaker at that step.\n"
        )
    raise AttributionFailed(
        f"trial {trial.trial_index}: persistent invalid attribution ({last_error})"
    )
