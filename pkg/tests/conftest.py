import json

import pytest

from dover.provider import Provider, ScriptEntry, ScriptedProvider
from dover.trace import (
    PLAN_MARKER,
    Message,
    Role,
    SessionLog,
    SessionStore,
    StepKind,
    Task,
    Termination,
    make_step,
)


def build_session(
    specs,
    session_id="s1",
    task=None,
    termination=Termination.FINAL_ANSWER,
):
    """Assemble a SessionLog from (agent_id, role, kind, content) tuples."""
    session = SessionLog(
        session_id=session_id,
        task=task or Task(description="test task", ground_truth_answer="42"),
    )
    for agent_id, role, kind, content in specs:
        session.steps.append(
            make_step(session, agent_id, Message(role, content), kind)
        )
    session.termination = termination
    return session


def marker_session(total_steps, marker_positions, session_id="marked"):
    """Synthetic log with plan-marker content at the given step indices."""
    specs = []
    for i in range(total_steps):
        if i in marker_positions:
            kind = StepKind.PLAN if i == 0 else StepKind.REPLAN
            specs.append(
                ("orchestrator", Role.ORCHESTRATOR, kind,
                 f"{PLAN_MARKER}\nattempt starting at {i}")
            )
        else:
            specs.append(("worker", Role.AGENT, StepKind.OBSERVATION, f"obs {i}"))
    return build_session(specs, session_id=session_id)


def simple_failed_session(session_id="failed", answer="wrong"):
    """Plan, instruction, tool exchange, and a wrong final answer."""
    return build_session(
        [
            ("orchestrator", Role.ORCHESTRATOR, StepKind.PLAN,
             f"{PLAN_MARKER}\nLook the answer up."),
            ("orchestrator", Role.ORCHESTRATOR, StepKind.INSTRUCTION,
             "@worker: look it up"),
            ("worker", Role.AGENT, StepKind.TOOL_CALL,
             json.dumps({"args": {"query": "q"}, "tool": "web"})),
            ("worker", Role.TOOL, StepKind.TOOL_RESULT, "Result: no results"),
            ("orchestrator", Role.ORCHESTRATOR, StepKind.FINAL_ANSWER, answer),
        ],
        session_id=session_id,
    )


class QueueProvider(Provider):
    """Replies with queued responses for a template regardless of content."""

    tag = "queued"

    def __init__(self, by_template):
        self._queues = {k: list(v) for k, v in by_template.items()}
        self.prompts = []

    def _fetch(self, request, prompt, attempt):
        self.prompts.append((request.template_id, prompt))
        queue = self._queues.get(request.template_id)
        if not queue:
            from dover.errors import ScriptExhausted

            raise ScriptExhausted(f"queue empty for {request.template_id}")
        response = queue[0] if len(queue) == 1 else queue.pop(0)
        return response if isinstance(response, str) else json.dumps(response)


@pytest.fixture
def store(tmp_path):
    return SessionStore(tmp_path / "store")


def entry(template_id, response, contains=None, position=None, times=None):
    text = response if isinstance(response, str) else json.dumps(response)
    return ScriptEntry(
        template_id=template_id,
        response=text,
        contains=contains or [],
        position=position,
        times=times,
    )


def scripted(*entries):
    return ScriptedProvider(list(entries))
