"""Full debugging pipeline: segment -> attribute -> intervene -> evaluate.

This is the single implementation behind both the CLI and the HTTP API, so
identical inputs produce byte-identical artifacts through either surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import attributor, evaluator, intervenor, segmenter
from .attributor import Hypothesis
from .canonical import canonical_json
from .errors import (
    AttributionFailed,
    ExtractionFailed,
    GenerationFailed,
    JudgeFailed,
    NoEditProposed,
)
from .evaluator import CaseResult, InterventionResult, MetricsReport, MilestoneSet
from .provider import Provider
from .runtime import AgentSpec, Runtime, RunConfig, ToolRegistry, default_tool_registry
from .segmenter import Trial
from .trace import SessionLog, SessionStore, Task


DEFAULT_AGENT_SPECS = [
    AgentSpec(
        agent_id="orchestrator",
        role_prompt="You coordinate the team: plan, instruct one agent at a "
                    "time, and give the final answer.",
        is_orchestrator=True,
    ),
    AgentSpec(
        agent_id="worker",
        role_prompt="You execute instructions using your tools and report back.",
        tools=("web", "calculator", "file_store"),
    ),
]


def agent_specs_from_checkpoint(store: SessionStore, session: SessionLog) -> list[AgentSpec] | None:
    """Recover agent specs from a native session's first checkpoint; the
    orchestrator is the speaker of the opening plan step."""
    if not session.steps or not store.has_checkpoint(session.session_id, 0):
        return None
    checkpoint = store.load_checkpoint(session.session_id, 0)
    orchestrator_id = session.steps[0].agent_id
    specs = []
    for agent_id, cfg in sorted(checkpoint.agent_configs.items()):
        specs.append(
            AgentSpec(
                agent_id=agent_id,
                role_prompt=cfg.get("role_prompt", ""),
                tools=tuple(cfg.get("tool_names", [])),
                is_orchestrator=agent_id == orchestrator_id,
            )
        )
    return specs if any(s.is_orchestrator for s in specs) else None


@dataclass
class TrialOutcome:
    trial: Trial
    hypothesis: Hypothesis | None = None
    error: str | None = None  # attribution/generation failure reason
    result: InterventionResult | None = None

    def to_dict(self) -> dict:
        return {
            "error": self.error,
            "hypothesis": self.hypothesis.to_dict() if self.hypothesis else None,
            "result": self.result.to_dict() if self.result else None,
            "trial": self.trial.to_dict(),
        }


@dataclass
class DebugResult:
    session_id: str
    trials: list[Trial]
    trial_outcomes: list[TrialOutcome]
    case_result: CaseResult
    report: MetricsReport
    milestone_set: MilestoneSet | None = None
    baseline_achieved: int | None = None

    def to_dict(self) -> dict:
        return {
            "baseline_achieved": self.baseline_achieved,
            "case_result": self.case_result.to_dict(),
            "milestones": self.milestone_set.to_dict() if self.milestone_set else None,
            "report": self.report.to_dict(),
            "session_id": self.session_id,
            "trial_outcomes": [t.to_dict() for t in self.trial_outcomes],
            "trials": [t.to_dict() for t in self.trials],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def debug_session(
    session: SessionLog,
    store: SessionStore,
    provider: Provider,
    config: RunConfig | None = None,
    tools: ToolRegistry | None = None,
    agent_specs: list[AgentSpec] | None = None,
    label: str = "default",
    workers: int = 1,
    only_trial: int | None = None,
) -> DebugResult:
    """Run the whole do-then-verify loop over one failed session."""
    config = config or RunConfig()
    tools = tools or default_tool_registry()
    specs = agent_specs or agent_specs_from_checkpoint(store, session) or DEFAULT_AGENT_SPECS

    def runtime_factory() -> Runtime:
        return Runtime(store, provider, specs, config, tools)

    trials = segmenter.segment(session, provider)
    if only_trial is not None:
        trials = [t for t in trials if t.trial_index == only_trial]

    milestone_set = None
    baseline = None
    if session.task.annotated_solution:
        try:
            milestone_set = evaluator.extract_milestones(session.task, provider)
            baseline = evaluator.achievement_count(session, milestone_set, provider)
        except (ExtractionFailed, JudgeFailed):
            milestone_set = None
            baseline = None

    case = CaseResult(case_id=session.session_id, label=label)
    outcomes: list[TrialOutcome] = []
    for trial in trials:
        outcome = TrialOutcome(trial=trial)
        outcomes.append(outcome)
        try:
            hypothesis = attributor.attribute(trial, session, provider)
        except AttributionFailed as exc:
            outcome.error = str(exc)
            continue
        outcome.hypothesis = hypothesis
        if hypothesis.no_mistake:
            case.skipped_trials.append(trial.trial_index)
            continue
        try:
            intervention = intervenor.generate(hypothesis, trial, session, provider)
        except (GenerationFailed, NoEditProposed) as exc:
            outcome.error = str(exc)
            continue
        runs = intervenor.execute(intervention, session, runtime_factory, config, workers)
        for run in runs:
            result_session = store.get(run.result_session_ref)
            try:
                run.success = evaluator.judge_success(
                    result_session, session.task, provider
                ).success
            except JudgeFailed:
                run.success = False
            run.fulfilled, run.fulfillment_evidence = evaluator.check_fulfilled(
                session, result_session, intervention, provider
            )
            if milestone_set is not None:
                try:
                    run.milestones_achieved = evaluator.achievement_count(
                        result_session, milestone_set, provider
                    )
                except JudgeFailed:
                    run.milestones_achieved = None
        category = evaluator.classify_outcome(
            runs,
            milestone_set.k if milestone_set else None,
            baseline or 0,
            expected_runs=config.runs_per_intervention,
        )
        result = InterventionResult(
            intervention=intervention,
            runs=runs,
            outcome=category,
            baseline_achieved=baseline,
            milestone_k=milestone_set.k if milestone_set else None,
        )
        outcome.result = result
        case.interventions.append(result)

    report = evaluator.aggregate_report([case])
    return DebugResult(
        session_id=session.session_id,
        trials=trials,
        trial_outcomes=outcomes,
        case_result=case,
        report=report,
        milestone_set=milestone_set,
        baseline_achieved=baseline,
    )


def run_default_task(
    store: SessionStore,
    provider: Provider,
    task: Task,
    config: RunConfig | None = None,
    tools: ToolRegistry | None = None,
    session_id: str | None = None,
    agent_specs: list[AgentSpec] | None = None,
) -> SessionLog:
    runtime = Runtime(
        store,
        provider,
        agent_specs or DEFAULT_AGENT_SPECS,
        config or RunConfig(),
        tools or default_tool_registry(),
    )
    return runtime.run_task(task, session_id)
