"""Acceptance gate: oracle- and property-based checks of the core rules.

Each test here pins one externally stated guarantee: the four-way outcome
classification against a brute-force oracle, exact rational progress
arithmetic, replay prefix identity, the segmentation partition property,
the built-in scenario suite, report percentage fidelity, and byte-level
determinism of the `dover debug` report.
"""

import hashlib
import itertools
import json
import random
import shutil
import time
from fractions import Fraction

from click.testing import CliRunner

from conftest import marker_session
from dover import scenarios
from dover.cli import main
from dover.evaluator import (
    CaseResult,
    InterventionResult,
    Outcome,
    OutcomeCategory,
    aggregate_report,
    classify_outcome,
    progress,
)
from dover.intervenor import Intervention, InterventionRun
from dover.provider import ORCHESTRATOR_TURN_INSTRUCTIONS, Provider
from dover.runtime import (
    AgentSpec,
    RunConfig,
    Runtime,
    default_tool_registry,
)
from dover.segmenter import segment_by_pattern
from dover.trace import Message, SessionStore, Task


# ---------------------------------------------------------------------------
# 1. Outcome classifier vs brute-force oracle
# ---------------------------------------------------------------------------

def oracle_classify(successes, fulfilleds, deltas):
    """Independent restatement of the decision rules: at least 2 of 3
    repeated runs succeed; otherwise at least 2 fulfilled runs advancing
    by one key milestone partially validate; at least 2 fulfilled runs
    not advancing refute; all other cases are inconclusive."""
    if sum(successes) >= 2:
        return Outcome.VALIDATED
    fulfilled_up = sum(
        1 for f, d in zip(fulfilleds, deltas) if f and d >= 1
    )
    fulfilled_flat = sum(
        1 for f, d in zip(fulfilleds, deltas) if f and d < 1
    )
    if fulfilled_up >= 2:
        return Outcome.PARTIALLY_VALIDATED
    if fulfilled_flat >= 2:
        return Outcome.REFUTED
    return Outcome.INCONCLUSIVE


def test_classifier_matches_oracle_on_every_tuple():
    started = time.monotonic()
    checked = 0
    for successes in itertools.product([False, True], repeat=3):
        for fulfilleds in itertools.product([False, True], repeat=3):
            for deltas in itertools.product([0, 1, 2], repeat=3):
                for k in range(1, 6):
                    runs = [
                        InterventionRun(
                            run_index=i + 1, intervention_ref="iv",
                            result_session_ref=f"r{i}", seed=i,
                            success=successes[i], fulfilled=fulfilleds[i],
                            milestones_achieved=deltas[i],
                        )
                        for i in range(3)
                    ]
                    got = classify_outcome(runs, k=k, baseline_achieved=0)
                    expected = oracle_classify(successes, fulfilleds, deltas)
                    assert got.category is expected, (
                        successes, fulfilleds, deltas, k, got.category
                    )
                    checked += 1
    assert checked == 8 * 8 * 27 * 5
    assert time.monotonic() - started < 5.0


# ---------------------------------------------------------------------------
# 2. Progress formula, exact arithmetic
# ---------------------------------------------------------------------------

def test_progress_formula_exact():
    rng = random.Random(20260826)
    for _ in range(1000):
        k = rng.randint(1, 10)
        a_before = rng.randint(0, k)
        a_after = rng.randint(0, k)
        value = progress(a_before, a_after, k)
        assert value == Fraction(a_after - a_before, k)
        assert Fraction(-1) <= value <= Fraction(1)
        assert progress(a_before, a_before, k) == 0

    assert progress(1, 2, 5) == Fraction(1, 5)
    assert float(progress(1, 2, 5)) == 0.2
    assert progress(3, 1, 5) == Fraction(-2, 5)
    assert float(progress(3, 1, 5)) == -0.4


# ---------------------------------------------------------------------------
# 3. Replay prefix identity over randomized scripted sessions
# ---------------------------------------------------------------------------

REPLAY_SPECS = [
    AgentSpec(agent_id="orchestrator", role_prompt="Coordinate.",
              is_orchestrator=True),
    AgentSpec(agent_id="worker", role_prompt="Execute.", tools=("web",)),
]
REPLAY_PAGES = {f"q{i}": f"page body {i}" for i in range(4)}


class DerivedProvider(Provider):
    """Pure function of (seed, prompt): identical prompts always produce
    identical responses, so identity replays retrace the original run."""

    tag = "derived"

    def __init__(self, seed):
        self.seed = seed

    def _fetch(self, request, prompt, attempt):
        digest = hashlib.blake2b(
            f"{self.seed}|{prompt}".encode(), digest_size=4
        ).digest()
        pick, flavor = digest[0], digest[1]
        if ORCHESTRATOR_TURN_INSTRUCTIONS in prompt:
            if "No steps taken yet." in prompt:
                return json.dumps({"type": "plan", "text": f"plan {flavor}"})
            if pick % 10 < 4:
                return json.dumps({
                    "type": "instruct", "agent": "worker",
                    "text": f"look into q{flavor % 4}",
                })
            if pick % 10 < 6:
                return json.dumps({"type": "replan",
                                   "text": f"attempt {flavor}"})
            return json.dumps({"type": "final_answer",
                               "text": f"answer {flavor}"})
        if pick % 2:
            return json.dumps({
                "type": "tool_call", "tool": "web",
                "args": {"query": f"q{flavor % 4}"},
            })
        return json.dumps({"type": "observation", "text": f"noted {flavor}"})


def replay_runtime(store, seed):
    return Runtime(
        store, DerivedProvider(seed), REPLAY_SPECS,
        RunConfig(max_steps=12), default_tool_registry(dict(REPLAY_PAGES)),
    )


def test_replay_prefix_identity_and_identity_edits(tmp_path):
    started = time.monotonic()
    rng = random.Random(42)
    for case in range(100):
        store = SessionStore(tmp_path / f"case{case}")
        session = replay_runtime(store, case).run_task(
            Task(f"task {case}", "answer"), "orig"
        )
        assert session.total_steps >= 1

        # arbitrary edit: everything before the edit point is untouched
        t = rng.randrange(session.total_steps)
        edited = replay_runtime(store, case).replay_with_edit(
            session, t,
            Message(session.steps[t].message.role, f"EDITED {case}-{t}"),
            new_session_id="edited",
        )
        assert [s.content_hash for s in edited.steps[:t]] == [
            s.content_hash for s in session.steps[:t]
        ]

        # identity edit: the full original trace comes back hash for hash
        t2 = rng.randrange(session.total_steps)
        identical = replay_runtime(store, case).replay_with_edit(
            session, t2,
            Message(session.steps[t2].message.role,
                    session.steps[t2].message.content),
            new_session_id="identity",
        )
        assert identical.digest() == session.digest()
        assert identical.termination == session.termination
    assert time.monotonic() - started < 30.0


# ---------------------------------------------------------------------------
# 4. Segmentation partition property
# ---------------------------------------------------------------------------

def test_segmentation_partitions_random_marker_layouts():
    rng = random.Random(7)
    for _ in range(50):
        total = rng.randint(1, 120)
        n_markers = rng.randint(0, 6)
        positions = set(
            rng.sample(range(total), min(n_markers, total))
        )
        session = marker_session(total, positions)
        trials = segment_by_pattern(session)
        assert trials[0].start_step == 0
        assert trials[-1].end_step == total - 1
        for left, right in zip(trials, trials[1:]):
            assert right.start_step == left.end_step + 1
            assert right.start_step in positions


def test_segmentation_of_the_93_step_fixture():
    session = marker_session(93, {0, 39, 66, 88})
    trials = segment_by_pattern(session)
    assert [(t.start_step, t.end_step) for t in trials] == [
        (0, 38), (39, 65), (66, 87), (88, 92)
    ]
    assert [t.trial_index for t in trials] == [1, 2, 3, 4]


# ---------------------------------------------------------------------------
# 5. End-to-end scenario suite
# ---------------------------------------------------------------------------

def test_scenario_suite_covers_all_outcomes(tmp_path):
    started = time.monotonic()
    seen = {}
    for name in scenarios.list_scenarios():
        verdict = scenarios.run_scenario(name, tmp_path / name)
        assert verdict.passed, (name, verdict.mismatches)
        for result in verdict.debug.case_result.interventions:
            seen[result.outcome.category.value] = name
        if verdict.debug.case_result.skipped_trials:
            seen["skipped"] = name
    assert set(seen) == {
        "Validated", "Refuted", "PartiallyValidated", "Inconclusive", "skipped"
    }
    assert time.monotonic() - started < 60.0


# ---------------------------------------------------------------------------
# 6. Report percentage fidelity
# ---------------------------------------------------------------------------

def test_report_percentages_match_reference_split():
    counts = {
        Outcome.VALIDATED: 11,
        Outcome.INCONCLUSIVE: 48,
        Outcome.PARTIALLY_VALIDATED: 3,
        Outcome.REFUTED: 10,
    }
    case = CaseResult(case_id="fixture", label="ww-ab")
    serial = 0
    for outcome, n in counts.items():
        for _ in range(n):
            serial += 1
            case.interventions.append(
                InterventionResult(
                    intervention=Intervention(
                        id=f"f-t{serial}", hypothesis_ref=serial,
                        category="ModifiedInstruction", target_step=0,
                        replacement_text="x",
                    ),
                    runs=[],
                    outcome=OutcomeCategory(
                        category=outcome, successes=0,
                        fulfilled_total=0, fulfilled_and_progressed=0,
                    ),
                )
            )
    row = aggregate_report([case]).rows[0]
    assert row.intervened_trials == 72
    expected = {
        "Validated": 15.3,
        "Inconclusive": 66.7,
        "PartiallyValidated": 4.2,
        "Refuted": 13.9,
    }
    for name, pct in expected.items():
        assert abs(row.category_percentages[name] - pct) <= 0.05, name


# ---------------------------------------------------------------------------
# 7. Byte-identical debug reports
# ---------------------------------------------------------------------------

def test_debug_report_is_byte_identical_across_runs(tmp_path):
    scenario = scenarios.get_scenario("flip-recoverable")
    script = tmp_path / "script.json"
    script.write_text(scenario.script_json(), encoding="utf-8")

    base_store = tmp_path / "store-a"
    store = SessionStore(base_store)
    runtime = Runtime(
        store, scenario.provider(), scenarios.AGENT_SPECS, RunConfig(),
        default_tool_registry(dict(scenario.web_pages)),
    )
    runtime.run_task(scenario.task, "base")
    shutil.copytree(base_store, tmp_path / "store-b")

    runner = CliRunner()
    outputs = []
    for store_dir in (base_store, tmp_path / "store-b"):
        result = runner.invoke(main, [
            "debug", "base",
            "--store-dir", str(store_dir),
            "--script", str(script),
        ])
        assert result.exit_code == 0, result.output
        outputs.append(result.stdout_bytes
                       if hasattr(result, "stdout_bytes") else
                       result.output.encode("utf-8"))
    assert outputs[0] == outputs[1]
    json.loads(outputs[0].decode("utf-8"))
