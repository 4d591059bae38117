import json

import pytest

from dover import scenarios
from dover.errors import ScenarioNotFound
from dover.evaluator import Outcome


def test_registry_lists_all_builtins():
    names = scenarios.list_scenarios()
    assert names == [
        "flip-recoverable",
        "wrong-hypothesis",
        "partial-progress",
        "ignored-edit",
        "no-mistake",
    ]


def test_unknown_scenario_raises():
    with pytest.raises(ScenarioNotFound):
        scenarios.get_scenario("nope")


def test_script_json_is_loadable():
    for name in scenarios.list_scenarios():
        entries = json.loads(scenarios.get_scenario(name).script_json())
        assert entries and all("template_id" in e for e in entries)


def test_register_scenario_overrides(tmp_path):
    original = scenarios.get_scenario("no-mistake")
    try:
        replacement = scenarios.Scenario(
            name="no-mistake", task=original.task,
            web_pages=original.web_pages, script=original.script,
            expected_trial_count=1, expected_categories=(),
            expected_flips=(), expected_skipped=(1,),
        )
        scenarios.register_scenario(replacement)
        assert scenarios.get_scenario("no-mistake") is replacement
    finally:
        scenarios.register_scenario(original)


@pytest.mark.parametrize("name", [
    "flip-recoverable",
    "wrong-hypothesis",
    "partial-progress",
    "ignored-edit",
    "no-mistake",
])
def test_scenario_passes(name, tmp_path):
    verdict = scenarios.run_scenario(name, tmp_path / name)
    assert verdict.passed, verdict.mismatches


def test_flip_recoverable_detail(tmp_path):
    verdict = scenarios.run_scenario("flip-recoverable", tmp_path)
    result = verdict.debug.case_result.interventions[0]
    assert result.outcome.category is Outcome.VALIDATED
    assert result.outcome.successes == 3
    assert len(result.runs) == 3
    assert {r.result_session_ref for r in result.runs} == {
        "flip-recoverable-base-t1-r1",
        "flip-recoverable-base-t1-r2",
        "flip-recoverable-base-t1-r3",
    }


def test_partial_progress_detail(tmp_path):
    verdict = scenarios.run_scenario("partial-progress", tmp_path)
    result = verdict.debug.case_result.interventions[0]
    assert result.outcome.category is Outcome.PARTIALLY_VALIDATED
    assert verdict.debug.baseline_achieved == 1
    assert result.milestone_k == 3
    assert all(r.milestones_achieved == 2 for r in result.runs)


def test_no_mistake_skips_the_trial(tmp_path):
    verdict = scenarios.run_scenario("no-mistake", tmp_path)
    assert verdict.debug.case_result.skipped_trials == [1]
    assert verdict.debug.case_result.interventions == []
