import pytest

from conftest import entry, scripted, simple_failed_session
from dover.attributor import Hypothesis, attribute, validate_hypothesis_bounds
from dover.errors import AttributionFailed
from dover.segmenter import segment_by_pattern


@pytest.fixture
def session():
    return simple_failed_session()


@pytest.fixture
def trial(session):
    return segment_by_pattern(session)[0]


class TestBounds:
    def test_valid_hypothesis(self, session, trial):
        h = Hypothesis(trial_index=1, failure_step=1,
                       suspected_agent="orchestrator", rationale="r")
        assert validate_hypothesis_bounds(h, trial, session)

    def test_no_mistake_must_carry_no_step(self, session, trial):
        assert validate_hypothesis_bounds(
            Hypothesis(trial_index=1, no_mistake=True), trial, session
        )
        assert not validate_hypothesis_bounds(
            Hypothesis(trial_index=1, no_mistake=True, failure_step=2),
            trial, session,
        )

    def test_step_outside_trial_is_invalid(self, session, trial):
        h = Hypothesis(trial_index=1, failure_step=99,
                       suspected_agent="orchestrator")
        assert not validate_hypothesis_bounds(h, trial, session)

    def test_agent_must_be_the_speaker(self, session, trial):
        h = Hypothesis(trial_index=1, failure_step=1, suspected_agent="worker")
        assert not validate_hypothesis_bounds(h, trial, session)

    def test_missing_fields_are_invalid(self, session, trial):
        assert not validate_hypothesis_bounds(
            Hypothesis(trial_index=1, failure_step=1), trial, session
        )
        assert not validate_hypothesis_bounds(
            Hypothesis(trial_index=1, suspected_agent="worker"), trial, session
        )


class TestAttribute:
    def test_valid_first_answer(self, session, trial):
        provider = scripted(
            entry("failure_proposer",
                  {"failure_step": 2, "agent": "worker", "rationale": "bad call"})
        )
        h = attribute(trial, session, provider)
        assert h.failure_step == 2
        assert h.suspected_agent == "worker"
        assert not h.no_mistake

    def test_no_mistake_passthrough(self, session, trial):
        provider = scripted(entry("failure_proposer", {"no_mistake": True}))
        h = attribute(trial, session, provider)
        assert h.no_mistake
        assert h.failure_step is None

    def test_invalid_then_corrected(self, session, trial):
        provider = scripted(
            entry("failure_proposer",
                  {"failure_step": 42, "agent": "worker", "rationale": "r"},
                  times=1),
            entry("failure_proposer",
                  {"failure_step": 1, "agent": "orchestrator", "rationale": "r"}),
        )
        h = attribute(trial, session, provider)
        assert h.failure_step == 1

    def test_correction_prompt_names_the_bounds(self, session, trial):
        calls = []

        class Spy(type(scripted())):
            def _fetch(self, request, prompt, attempt):
                calls.append(prompt)
                return super()._fetch(request, prompt, attempt)

        provider = Spy([
            entry("failure_proposer",
                  {"failure_step": 42, "agent": "worker", "rationale": "r"},
                  times=1),
            entry("failure_proposer",
                  {"failure_step": 1, "agent": "orchestrator", "rationale": "r"}),
        ])
        attribute(trial, session, provider)
        assert "must be between 0 and 4" in calls[1]

    def test_persistent_invalid_raises(self, session, trial):
        provider = scripted(
            entry("failure_proposer",
                  {"failure_step": 42, "agent": "worker", "rationale": "r"})
        )
        with pytest.raises(AttributionFailed):
            attribute(trial, session, provider)

    def test_ground_truth_can_be_withheld(self, session, trial):
        prompts = []

        class Spy(type(scripted())):
            def _fetch(self, request, prompt, attempt):
                prompts.append(prompt)
                return super()._fetch(request, prompt, attempt)

        provider = Spy([entry("failure_proposer", {"no_mistake": True})])
        attribute(trial, session, provider, include_ground_truth=False)
        assert "(not provided)" in prompts[0]
        assert "42" not in prompts[0].split("Ground-truth answer:")[1].split("\n")[0]

    def test_step_indices_appear_in_prompt(self, session, trial):
        prompts = []

        class Spy(type(scripted())):
            def _fetch(self, request, prompt, attempt):
                prompts.append(prompt)
                return super()._fetch(request, prompt, attempt)

        provider = Spy([entry("failure_proposer", {"no_mistake": True})])
        attribute(trial, session, provider)
        assert "Step 0 " in prompts[0]
        assert "Step 4 " in prompts[0]
