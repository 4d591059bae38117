"""Success judging, milestone scoring, outcome classification, reporting.

Success prefers exact normalized matching against the ground truth; the LLM
judge is a fallback only.  Progress is exact rational arithmetic over
milestone achievement counts, and the four-way outcome classification
follows fixed threshold rules over the repeated runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .errors import ExtractionFailed, IncompleteRuns, JudgeFailed
from .intervenor import Intervention, InterventionRun
from .provider import PromptRequest, Provider
from .runtime import format_steps
from .trace import SessionLog, Task


class Outcome(str, Enum):
    VALIDATED = "Validated"
    PARTIALLY_VALIDATED = "PartiallyValidated"
    REFUTED = "Refuted"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Milestone:
    order: int
    title: str
    action: str
    result: str

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "order": self.order,
            "result": self.result,
            "title": self.title,
        }


@dataclass(frozen=True)
class MilestoneSet:
    task_ref: str
    milestones: tuple[Milestone, ...]

    @property
    def k(self) -> int:
        return len(self.milestones)

    def to_dict(self) -> dict:
        return {
            "milestones": [m.to_dict() for m in self.milestones],
            "task_ref": self.task_ref,
        }


@dataclass(frozen=True)
class MilestoneJudgment:
    order: int
    status: str  # achieved | partial | missed
    evidence: tuple[int, ...] = ()


@dataclass(frozen=True)
class SuccessVerdict:
    success: bool
    judge_based: bool = False
    flag: str | None = None  # e.g. "NoFinalAnswer"

    def __bool__(self) -> bool:
        return self.success


@dataclass(frozen=True)
class OutcomeCategory:
    category: Outcome
    successes: int
    fulfilled_total: int
    fulfilled_and_progressed: int

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "fulfilled_and_progressed": self.fulfilled_and_progressed,
            "fulfilled_total": self.fulfilled_total,
            "successes": self.successes,
        }


@dataclass(frozen=True)
class ReportRow:
    label: str
    intervened_trials: int
    total_runs: int
    successful_runs: int
    trial_success_rate: float | None
    progress_made: float | None
    category_counts: dict
    category_percentages: dict

    def to_dict(self) -> dict:
        return {
            "category_counts": dict(sorted(self.category_counts.items())),
            "category_percentages": dict(sorted(self.category_percentages.items())),
            "intervened_trials": self.intervened_trials,
            "label": self.label,
            "progress_made": self.progress_made,
            "successful_runs": self.successful_runs,
            "total_runs": self.total_runs,
            "trial_success_rate": self.trial_success_rate,
        }


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[ReportRow, ...]

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}


# ---------------------------------------------------------------------------
# Success judging
# ---------------------------------------------------------------------------

_PUNCT = ".,;:!?'\"()[]{}"


def normalize_answer(text: str) -> str:
    stripped = text.strip().strip(_PUNCT).casefold()
    return " ".join(stripped.split())


def _as_rational(text: str) -> Fraction | None:
    cleaned = text.strip().replace(",", "").replace("$", "").rstrip("%").strip()
    try:
        return Fraction(cleaned)
    except (ValueError, ZeroDivisionError):
        return None


def answers_match(given: str, expected: str) -> bool:
    """Numeric answers compare as exact rationals, everything else as
    case/punctuation-folded strings."""
    a, b = _as_rational(given), _as_rational(expected)
    if a is not None and b is not None:
        return a == b
    return normalize_answer(given) == normalize_answer(expected)


def judge_success(
    trace: SessionLog, task: Task, provider: Provider | None = None
) -> SuccessVerdict:
    final = trace.final_answer_step()
    if final is None:
        return SuccessVerdict(success=False, flag="NoFinalAnswer")
    if task.ground_truth_answer is not None:
        return SuccessVerdict(
            success=answers_match(final.message.content, task.ground_truth_answer)
        )
    if provider is None:
        raise JudgeFailed("no ground truth and no judge provider configured")
    completion = provider.complete(
        PromptRequest(
            template_id="success_judge",
            variables={
                "task": task.description,
                "final_answer": final.message.content,
                "steps": format_steps(trace.steps),
            },
            expect_schema="verdict",
        )
    )
    if completion.malformed or completion.parsed is None:
        raise JudgeFailed(f"unparseable judge output: {completion.raw_text[:200]}")
    return SuccessVerdict(success=completion.parsed["success"], judge_based=True)


# ---------------------------------------------------------------------------
# Milestones and progress
# ---------------------------------------------------------------------------

MAX_MILESTONES = 5


def extract_milestones(task: Task, provider: Provider) -> MilestoneSet:
    if not task.annotated_solution:
        raise ExtractionFailed("task has no annotated solution steps")
    completion = provider.complete(
        PromptRequest(
            template_id="milestone_extractor",
            variables={
                "task": task.description,
                "annotated_solution": task.annotated_solution,
            },
            expect_schema="milestones",
        )
    )
    if completion.malformed or completion.parsed is None:
        raise ExtractionFailed(
            f"unparseable milestone output: {completion.raw_text[:200]}"
        )
    milestones = []
    for item in completion.parsed["milestones"]:
        if not isinstance(item, dict):
            continue
        try:
            milestones.append(
                Milestone(
                    order=int(item["order"]),
                    title=str(item.get("title", "")),
                    action=str(item.get("action", "")),
                    result=str(item.get("result", "")),
                )
            )
        except (KeyError, TypeError, ValueError):
            continue
    if not milestones:
        raise ExtractionFailed("extractor returned no usable milestones")
    milestones.sort(key=lambda m: m.order)
    return MilestoneSet(
        task_ref=task.description, milestones=tuple(milestones[:MAX_MILESTONES])
    )


def judge_milestones(
    trace: SessionLog, milestone_set: MilestoneSet, provider: Provider
) -> list[MilestoneJudgment]:
    completion = provider.complete(
        PromptRequest(
            template_id="milestone_evaluator",
            variables={
                "task": milestone_set.task_ref,
                "milestones": "\n".join(
                    f"{m.order}. {m.title}: {m.action} -> {m.result}"
                    for m in milestone_set.milestones
                ),
                "steps": format_steps(trace.steps),
            },
            expect_schema="milestone_judgment",
        )
    )
    if completion.malformed or completion.parsed is None:
        raise JudgeFailed(
            f"unparseable milestone judgment: {completion.raw_text[:200]}"
        )
    judgments = []
    for item in completion.parsed["judgments"]:
        if not isinstance(item, dict):
            continue
        status = str(item.get("status", "")).lower()
        if status not in ("achieved", "partial", "missed"):
            continue
        evidence = tuple(
            i for i in item.get("evidence", [])
            if isinstance(i, int) and 0 <= i < trace.total_steps
        )
        judgments.append(
            MilestoneJudgment(order=int(item.get("order", 0)), status=status,
                              evidence=evidence)
        )
    return judgments


def achievement_count(
    trace: SessionLog, milestone_set: MilestoneSet, provider: Provider
) -> int:
    """Number of milestones judged achieved; partials count zero."""
    judgments = judge_milestones(trace, milestone_set, provider)
    achieved = sum(1 for j in judgments if j.status == "achieved")
    return min(achieved, milestone_set.k)


def progress(a_before: int, a_after: int, k: int) -> Fraction:
    """Fraction of additional milestones achieved, exact in [-1, 1]."""
    if k < 1:
        raise ValueError("milestone count K must be >= 1")
    if not (0 <= a_before <= k and 0 <= a_after <= k):
        raise ValueError("achievement counts must lie in [0, K]")
    return Fraction(a_after - a_before, k)


# ---------------------------------------------------------------------------
# Fulfillment and outcome classification
# ---------------------------------------------------------------------------

def check_fulfilled(
    original_session: SessionLog,
    run_session: SessionLog,
    intervention: Intervention,
    provider: Provider,
) -> tuple[bool, str]:
    """Comparative judgment of both traces from the intervened step onward.
    Judge failures degrade to (False, reason) rather than raising."""
    t = intervention.target_step
    try:
        completion = provider.complete(
            PromptRequest(
                template_id="fulfillment_classifier",
                variables={
                    "target_step": str(t),
                    "intervention_text": intervention.replacement_text,
                    "original_window": format_steps(original_session.steps[t:]),
                    "new_window": format_steps(run_session.steps[t:]),
                },
                expect_schema="fulfillment",
            )
        )
    except Exception as exc:  # judge unavailability must not sink the run
        return False, f"judge failed: {exc}"
    if completion.malformed or completion.parsed is None:
        return False, f"judge output unparseable: {completion.raw_text[:120]}"
    return completion.parsed["fulfilled"], completion.parsed.get("evidence", "")


def classify_outcome(
    runs: list[InterventionRun],
    k: int | None,
    baseline_achieved: int = 0,
    expected_runs: int | None = None,
) -> OutcomeCategory:
    """Four-way classification over the repeated runs.

    Validated: at least 2 runs succeed.  Partially validated: fewer than 2
    succeed but at least 2 runs both fulfill the edit and advance by one
    milestone.  Refuted: at least 2 runs fulfill the edit without advancing.
    Inconclusive: everything else.  Without milestones the per-run delta is
    treated as zero, so partial validation is unreachable.
    """
    if expected_runs is not None and len(runs) != expected_runs:
        raise IncompleteRuns(f"expected {expected_runs} runs, got {len(runs)}")
    if any(r.success is None for r in runs):
        raise IncompleteRuns("every run needs a success verdict")

    successes = sum(1 for r in runs if r.success)
    fulfilled_total = sum(1 for r in runs if r.fulfilled)

    def delta(run: InterventionRun) -> int:
        if k is None or run.milestones_achieved is None:
            return 0
        return run.milestones_achieved - baseline_achieved

    fulfilled_and_progressed = sum(
        1 for r in runs if r.fulfilled and delta(r) >= 1
    )
    fulfilled_not_progressed = sum(
        1 for r in runs if r.fulfilled and delta(r) < 1
    )

    if successes >= 2:
        category = Outcome.VALIDATED
    elif fulfilled_and_progressed >= 2:
        category = Outcome.PARTIALLY_VALIDATED
    elif fulfilled_not_progressed >= 2:
        category = Outcome.REFUTED
    else:
        category = Outcome.INCONCLUSIVE
    return OutcomeCategory(
        category=category,
        successes=successes,
        fulfilled_total=fulfilled_total,
        fulfilled_and_progressed=fulfilled_and_progressed,
    )


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class InterventionResult:
    intervention: Intervention
    runs: list[InterventionRun]
    outcome: OutcomeCategory
    baseline_achieved: int | None = None
    milestone_k: int | None = None

    def to_dict(self) -> dict:
        return {
            "baseline_achieved": self.baseline_achieved,
            "intervention": self.intervention.to_dict(),
            "milestone_k": self.milestone_k,
            "outcome": self.outcome.to_dict(),
            "runs": [r.to_dict() for r in self.runs],
        }


@dataclass
class CaseResult:
    case_id: str
    label: str  # dataset / grouping key for report rows
    interventions: list[InterventionResult] = field(default_factory=list)
    skipped_trials: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "interventions": [i.to_dict() for i in self.interventions],
            "label": self.label,
            "skipped_trials": list(self.skipped_trials),
        }


def aggregate_report(case_results: list[CaseResult]) -> MetricsReport:
    """Fold case results into per-label rows: run-level success rate, mean
    progress over milestone-scored runs, and outcome-category counts."""
    by_label: dict[str, list[CaseResult]] = {}
    for case in case_results:
        by_label.setdefault(case.label, []).append(case)

    rows = []
    for label in sorted(by_label):
        total_runs = 0
        successful_runs = 0
        progress_values: list[Fraction] = []
        counts = {o.value: 0 for o in Outcome}
        intervened = 0
        for case in by_label[label]:
            for result in case.interventions:
                intervened += 1
                counts[result.outcome.category.value] += 1
                for run in result.runs:
                    total_runs += 1
                    if run.success:
                        successful_runs += 1
                    if (
                        result.milestone_k
                        and run.milestones_achieved is not None
                        and result.baseline_achieved is not None
                    ):
                        progress_values.append(
                            progress(
                                result.baseline_achieved,
                                run.milestones_achieved,
                                result.milestone_k,
                            )
                        )
        percentages = {
            name: (100.0 * n / intervened) if intervened else 0.0
            for name, n in counts.items()
        }
        rows.append(
            ReportRow(
                label=label,
                intervened_trials=intervened,
                total_runs=total_runs,
                successful_runs=successful_runs,
                trial_success_rate=(successful_runs / total_runs) if total_runs else None,
                progress_made=(
                    float(sum(progress_values) / len(progress_values))
                    if progress_values
                    else None
                ),
                category_counts=counts,
                category_percentages=percentages,
            )
        )
    return MetricsReport(rows=tuple(rows))


def case_result_from_dict(d: dict) -> CaseResult:
    """Rebuild a CaseResult from its to_dict form (for report aggregation
    over previously saved pipeline outputs)."""
    from .intervenor import Intervention, InterventionRun

    interventions = []
    for item in d.get("interventions", []):
        iv = item["intervention"]
        oc = item["outcome"]
        interventions.append(
            InterventionResult(
                intervention=Intervention(
                    id=iv["id"],
                    hypothesis_ref=iv["hypothesis_ref"],
                    category=iv["category"],
                    target_step=iv["target_step"],
                    replacement_text=iv["replacement_text"],
                    rationale=iv.get("rationale", ""),
                ),
                runs=[
                    InterventionRun(
                        run_index=r["run_index"],
                        intervention_ref=r["intervention_ref"],
                        result_session_ref=r["result_session_ref"],
                        seed=r["seed"],
                        success=r.get("success"),
                        fulfilled=r.get("fulfilled"),
                        fulfillment_evidence=r.get("fulfillment_evidence", ""),
                        milestones_achieved=r.get("milestones_achieved"),
                    )
                    for r in item.get("runs", [])
                ],
                outcome=OutcomeCategory(
                    category=Outcome(oc["category"]),
                    successes=oc["successes"],
                    fulfilled_total=oc["fulfilled_total"],
                    fulfilled_and_progressed=oc["fulfilled_and_progressed"],
                ),
                baseline_achieved=item.get("baseline_achieved"),
                milestone_k=item.get("milestone_k"),
            )
        )
    return CaseResult(
        case_id=d["case_id"],
        label=d["label"],
        interventions=interventions,
        skipped_trials=list(d.get("skipped_trials", [])),
    )


def report_markdown(report: MetricsReport) -> str:
    lines = [
        "| Dataset | Intervened Trials | Trial Success Rate | Progress Made | "
        "Validated | Inconclusive | Partially Validated | Refuted |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for row in report.rows:
        rate = f"{100 * row.trial_success_rate:.1f}%" if row.trial_success_rate is not None else "n/a"
        prog = f"{100 * row.progress_made:+.1f}%" if row.progress_made is not None else "n/a"

        def cell(name: str) -> str:
            return f"{row.category_counts[name]} ({row.category_percentages[name]:.1f}%)"

        lines.append(
            f"| {row.label} | {row.intervened_trials} | {rate} | {prog} | "
            f"{cell('Validated')} | {cell('Inconclusive')} | "
            f"{cell('PartiallyValidated')} | {cell('Refuted')} |"
        )
    return "\n".join(lines)
