"""Deterministic desk-scale scenarios covering every pipeline outcome.

Each scenario bundles a seeded-bug task, toy tool state, and a scripted
provider, plus hand-derived expectations.  Running one exercises the whole
do-then-verify loop offline: original run, segmentation, attribution,
intervention, repeated replay, and classification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import evaluator, pipeline
from .errors import ScenarioNotFound
from .pipeline import DebugResult
from .provider import ScriptEntry, ScriptedProvider
from .runtime import AgentSpec, RunConfig, Runtime, default_tool_registry
from .trace import SessionStore, Task

AGENT_SPECS = [
    AgentSpec(
        agent_id="orchestrator",
        role_prompt="You coordinate the team: plan, instruct the worker, and "
                    "give the final answer.",
        is_orchestrator=True,
    ),
    AgentSpec(
        agent_id="worker",
        role_prompt="You execute instructions with your tools and report back.",
        tools=("web",),
    ),
]


@dataclass(frozen=True)
class Scenario:
    name: str
    task: Task
    web_pages: dict
    script: tuple[ScriptEntry, ...]
    expected_trial_count: int
    expected_categories: tuple[str, ...]
    expected_flips: tuple[bool, ...]
    expected_skipped: tuple[int, ...] = ()

    def provider(self) -> ScriptedProvider:
        return ScriptedProvider(list(self.script))

    def script_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.script], indent=2)


@dataclass
class ScenarioVerdict:
    name: str
    mismatches: list[str] = field(default_factory=list)
    debug: DebugResult | None = None
    original_session_id: str = ""

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _entry(template_id: str, response: dict | str, contains: list[str] | None = None,
           times: int | None = None) -> ScriptEntry:
    text = response if isinstance(response, str) else json.dumps(response)
    return ScriptEntry(template_id=template_id, response=text,
                       contains=contains or [], times=times)


def _orch(contains: list[str], response: dict) -> ScriptEntry:
    return _entry("agent_turn", response, ["You are orchestrator"] + contains)


def _worker(contains: list[str], response: dict) -> ScriptEntry:
    return _entry("agent_turn", response, ["You are worker"] + contains)


def _lookup_script(pipeline_entries: list[ScriptEntry]) -> tuple[ScriptEntry, ...]:
    """Shared turn script for the misspelled-lookup scenarios: the
    orchestrator queries 'Fredonia' instead of 'Freedonia'."""
    return tuple(
        [
            _orch(["Result: Fredville"], {"type": "final_answer", "text": "Fredville"}),
            _orch(["Result: no results"], {"type": "final_answer", "text": "unknown"}),
            _orch(["No steps taken yet."],
                  {"type": "plan", "text": "Ask the worker to search the web for the capital."}),
            _worker(["capital of Freedonia"],
                    {"type": "tool_call", "tool": "web",
                     "args": {"query": "capital of Freedonia"}}),
            _worker([], {"type": "tool_call", "tool": "web",
                         "args": {"query": "capital of Fredonia"}}),
            _orch([], {"type": "instruct", "agent": "worker",
                       "text": "Look up 'capital of Fredonia' on the web."}),
        ]
        + pipeline_entries
    )


def _flip_recoverable() -> Scenario:
    entries = [
        _entry("trial_segmenter", {"plan_step_indices": [0]}),
        _entry("failure_proposer",
               {"failure_step": 1, "agent": "orchestrator",
                "rationale": "The orchestrator misspelled the search query; "
                             "the country is 'Freedonia'."}),
        _entry("intervention_recommender",
               {"category": "ModifiedInstruction",
                "replacement_text": "@worker: Look up 'capital of Freedonia' on the web.",
                "rationale": "Fix the misspelled query."}),
        _entry("fulfillment_classifier",
               {"fulfilled": True,
                "evidence": "The worker queried the corrected term."}),
    ]
    return Scenario(
        name="flip-recoverable",
        task=Task(description="Find the capital city of Freedonia.",
                  ground_truth_answer="Fredville"),
        web_pages={"capital of Freedonia": "Fredville"},
        script=_lookup_script(entries),
        expected_trial_count=1,
        expected_categories=("Validated",),
        expected_flips=(True,),
    )


def _wrong_hypothesis() -> Scenario:
    entries = [
        _entry("trial_segmenter", {"plan_step_indices": [0]}),
        _entry("failure_proposer",
               {"failure_step": 1, "agent": "orchestrator",
                "rationale": "The query was misspelled; correcting the "
                             "spelling should surface the answer."}),
        _entry("intervention_recommender",
               {"category": "ModifiedInstruction",
                "replacement_text": "@worker: Look up 'capital of Freedonia' on the web.",
                "rationale": "Fix the misspelled query."}),
        _entry("fulfillment_classifier",
               {"fulfilled": True,
                "evidence": "The corrected lookup was executed but still "
                            "returned nothing."}),
    ]
    # The answer exists nowhere, so a faithfully executed fix changes nothing.
    return Scenario(
        name="wrong-hypothesis",
        task=Task(description="Find the capital city of Freedonia.",
                  ground_truth_answer="Fredville"),
        web_pages={},
        script=_lookup_script(entries),
        expected_trial_count=1,
        expected_categories=("Refuted",),
        expected_flips=(False,),
    )


def _partial_progress() -> Scenario:
    script = tuple(
        [
            _orch(["Charter page"], {"type": "final_answer", "text": "unknown"}),
            _orch(["archive portal"],
                  {"type": "instruct", "agent": "worker",
                   "text": "Search the web for 'national archive charter'."}),
            _orch(["Result: A scattered mention"],
                  {"type": "final_answer", "text": "unknown"}),
            _orch(["No steps taken yet."],
                  {"type": "plan",
                   "text": "Search the general web for the founding year."}),
            _worker(["national archive charter"],
                    {"type": "tool_call", "tool": "web",
                     "args": {"query": "national archive charter"}}),
            _worker([], {"type": "tool_call", "tool": "web",
                         "args": {"query": "Freedonia founding"}}),
            _orch([], {"type": "instruct", "agent": "worker",
                       "text": "Search the web for 'Freedonia founding'."}),
            _entry("trial_segmenter", {"plan_step_indices": [0]}),
            _entry("failure_proposer",
                   {"failure_step": 0, "agent": "orchestrator",
                    "rationale": "The plan relied on scattered web search "
                                 "instead of the national archive."}),
            _entry("intervention_recommender",
                   {"category": "PlanUpdate",
                    "replacement_text": "Open the national archive portal and "
                                        "search for the founding charter inside it.",
                    "rationale": "A directed archive search replaces aimless "
                                 "web search."}),
            _entry("fulfillment_classifier",
                   {"fulfilled": True,
                    "evidence": "The re-run searched the archive as instructed."}),
            _entry("milestone_extractor",
                   {"milestones": [
                       {"order": 1, "title": "Find a mention",
                        "action": "Search for Freedonia history",
                        "result": "Any source mentioning Freedonia located"},
                       {"order": 2, "title": "Open the archive charter",
                        "action": "Open the national archive charter page",
                        "result": "Charter page opened"},
                       {"order": 3, "title": "Read the founding year",
                        "action": "Read the year from the charter",
                        "result": "1821 identified"},
                   ]}),
            _entry("milestone_evaluator",
                   {"judgments": [
                       {"order": 1, "status": "achieved", "evidence": [3]},
                       {"order": 2, "status": "achieved", "evidence": [3]},
                       {"order": 3, "status": "missed", "evidence": []},
                   ]},
                   contains=["founding details unreadable"]),
            _entry("milestone_evaluator",
                   {"judgments": [
                       {"order": 1, "status": "achieved", "evidence": [3]},
                       {"order": 2, "status": "missed", "evidence": []},
                       {"order": 3, "status": "missed", "evidence": []},
                   ]}),
        ]
    )
    return Scenario(
        name="partial-progress",
        task=Task(
            description="In which year was Freedonia founded?",
            ground_truth_answer="1821",
            annotated_solution="1) Open the national archive portal. "
                               "2) Locate the founding charter. "
                               "3) Read the founding year 1821.",
        ),
        web_pages={
            "Freedonia founding": "A scattered mention of Freedonia's early days.",
            "national archive charter": "Charter page partially loads; founding "
                                        "details unreadable.",
        },
        script=script,
        expected_trial_count=1,
        expected_categories=("PartiallyValidated",),
        expected_flips=(False,),
    )


def _ignored_edit() -> Scenario:
    script = tuple(
        [
            _orch(["No steps taken yet."],
                  {"type": "plan",
                   "text": "Read the article and find the award number."}),
            _orch(["no references visible"],
                  {"type": "final_answer", "text": "unknown"}),
            _orch(["footer not reached"],
                  {"type": "final_answer", "text": "unknown"}),
            _orch([], {"type": "instruct", "agent": "worker",
                       "text": "Read the article page."}),
            _worker(["Scroll to the bottom"],
                    {"type": "observation",
                     "text": "Performed a single page scroll; footer not reached."}),
            _worker([], {"type": "observation",
                         "text": "Top of the article only; no references visible."}),
            _entry("trial_segmenter", {"plan_step_indices": [0]}),
            _entry("failure_proposer",
                   {"failure_step": 1, "agent": "orchestrator",
                    "rationale": "The instruction never asked the worker to "
                                 "reach the references at the bottom."}),
            _entry("intervention_recommender",
                   {"category": "ModifiedInstruction",
                    "replacement_text": "@worker: Scroll to the bottom of the "
                                        "article and read the references in the footer.",
                    "rationale": "Target the footer directly."}),
            _entry("fulfillment_classifier",
                   {"fulfilled": False,
                    "evidence": "The worker performed a single page scroll "
                                "instead of scrolling to the bottom."}),
        ]
    )
    return Scenario(
        name="ignored-edit",
        task=Task(description="What NASA award number supported R. G. Arendt?",
                  ground_truth_answer="80GSFC21M0002"),
        web_pages={},
        script=script,
        expected_trial_count=1,
        expected_categories=("Inconclusive",),
        expected_flips=(False,),
    )


def _no_mistake() -> Scenario:
    script = tuple(
        [
            _orch(["No steps taken yet."],
                  {"type": "plan", "text": "Compute the sum."}),
            _orch(["calculator is unavailable"],
                  {"type": "final_answer", "text": "5"}),
            _orch([], {"type": "instruct", "agent": "worker",
                       "text": "Compute 2+2."}),
            _worker([], {"type": "observation",
                         "text": "The calculator is unavailable."}),
            _entry("trial_segmenter", {"plan_step_indices": [0]}),
            _entry("failure_proposer", {"no_mistake": True}),
        ]
    )
    return Scenario(
        name="no-mistake",
        task=Task(description="What is 2+2?", ground_truth_answer="4"),
        web_pages={},
        script=script,
        expected_trial_count=1,
        expected_categories=(),
        expected_flips=(),
        expected_skipped=(1,),
    )


_BUILDERS = [
    _flip_recoverable,
    _wrong_hypothesis,
    _partial_progress,
    _ignored_edit,
    _no_mistake,
]

_REGISTRY: dict[str, Scenario] = {}
for _build in _BUILDERS:
    _scenario = _build()
    _REGISTRY[_scenario.name] = _scenario


def list_scenarios() -> list[str]:
    return list(_REGISTRY)


def get_scenario(name: str) -> Scenario:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ScenarioNotFound(f"unknown scenario: {name}") from None


def register_scenario(scenario: Scenario) -> None:
    _REGISTRY[scenario.name] = scenario


def run_scenario(name: str, store_root: Path | str, workers: int = 1) -> ScenarioVerdict:
    """Run one scenario end to end and compare every expectation."""
    scenario = get_scenario(name)
    verdict = ScenarioVerdict(name=name)
    store = SessionStore(store_root)
    provider = scenario.provider()
    tools = default_tool_registry(web_pages=dict(scenario.web_pages))
    config = RunConfig()

    session_id = f"{name}-base"
    runtime = Runtime(store, provider, AGENT_SPECS, config, tools)
    session = runtime.run_task(scenario.task, session_id)
    verdict.original_session_id = session_id
    if evaluator.judge_success(session, scenario.task, provider).success:
        verdict.mismatches.append("original run unexpectedly succeeded")
        return verdict

    debug = pipeline.debug_session(
        session, store, provider, config, tools, AGENT_SPECS,
        label=name, workers=workers,
    )
    verdict.debug = debug

    if len(debug.trials) != scenario.expected_trial_count:
        verdict.mismatches.append(
            f"trial count {len(debug.trials)} != {scenario.expected_trial_count}"
        )
    categories = tuple(
        r.outcome.category.value for r in debug.case_result.interventions
    )
    if categories != scenario.expected_categories:
        verdict.mismatches.append(
            f"categories {categories} != {scenario.expected_categories}"
        )
    flips = tuple(
        r.outcome.successes >= 2 for r in debug.case_result.interventions
    )
    if flips != scenario.expected_flips:
        verdict.mismatches.append(f"flips {flips} != {scenario.expected_flips}")
    if tuple(debug.case_result.skipped_trials) != scenario.expected_skipped:
        verdict.mismatches.append(
            f"skipped {tuple(debug.case_result.skipped_trials)} != "
            f"{scenario.expected_skipped}"
        )
    return verdict
