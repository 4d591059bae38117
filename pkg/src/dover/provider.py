"""Chat-completion providers, prompt templates, and structured-output parsing.

Every LLM touchpoint in the pipeline goes through ``complete(PromptRequest)``,
so swapping the live endpoint for a scripted provider makes the whole engine
deterministic and offline-testable.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import (
    MalformedOutput,
    MissingVariable,
    ProviderUnreachable,
    ScriptExhausted,
)

PARSE_ATTEMPTS = 3
REPAIR_SUFFIX = (
    "\n\nYour previous reply could not be parsed. "
    "Reply again with a single valid JSON object and nothing else."
)

# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

ANNOTATOR_GUIDANCE = """\
Guidance for identifying the decisive error:
- A failure step is decisive: replacing the incorrect action at that step
  with a correct one would let the trajectory subsequently succeed.
- Prefer the earliest step that meets this bar.
- Attribute the step to the agent that produced the message at that step.
- Use the exact step indices shown in the log; never invent an index."""

TEMPLATES: dict[str, str] = {
    "trial_segmenter": """\
You are analyzing the execution log of a multi-agent system.
Task: {task}

The log below shows every step with its index. Identify the steps where the
orchestrator produced the initial plan or a revised plan (a new attempt at
the task). Reply with JSON: {{"plan_step_indices": [<int>, ...]}}.

Log:
{steps}""",
    "failure_proposer": """\
You are diagnosing why a multi-agent system failed a task.
Task: {task}
Ground-truth answer: {ground_truth}
Original plan: {original_plan}

""" + ANNOTATOR_GUIDANCE + """

The trial below shows each step with an explicit step index.
{trial_steps}
{correction}
If the trial contains a decisive error, reply with JSON:
{{"failure_step": <int>, "agent": "<agent_id>", "rationale": "<why>"}}.
If no mistake occurred in this trial, reply with JSON: {{"no_mistake": true}}.""",
    "intervention_recommender": """\
You are proposing the minimal executable fix for a failed multi-agent trial.
Task: {task}
Ground-truth answer: {ground_truth}
Failure hypothesis: {rationale}

Context (the failure step and its two predecessors only):
{window}

Reply with JSON:
{{"category": "ModifiedInstruction" | "PlanUpdate",
  "replacement_text": "<full replacement message>",
  "rationale": "<why this fix>"}}
ModifiedInstruction rewrites the message at the failure step. PlanUpdate
replaces the plan that opened this trial.""",
    "milestone_extractor": """\
Extract at most five tool-agnostic milestones from this task's annotated
solution. Each milestone needs order, title, action, and result.
Task: {task}
Annotated solution: {annotated_solution}

Reply with JSON:
{{"milestones": [{{"order": 1, "title": "...", "action": "...", "result": "..."}}, ...]}}""",
    "milestone_evaluator": """\
Judge which milestones the execution trace below accomplishes.
Task: {task}
Milestones:
{milestones}

Trace:
{steps}

For each milestone reply achieved, partial, or missed, with evidence step
indices. Reply with JSON:
{{"judgments": [{{"order": <int>, "status": "achieved|partial|missed", "evidence": [<int>, ...]}}, ...]}}""",
    "fulfillment_classifier": """\
An intervention replaced the message at step {target_step} of a failed
multi-agent session, and the session was re-run from that step.
Intervention text: {intervention_text}

Original steps from the intervened step onward:
{original_window}

Re-run steps from the intervened step onward:
{new_window}

Did the agents faithfully execute the intervened instruction during the
re-run? Reply with JSON: {{"fulfilled": true|false, "evidence": "<witness>"}}""",
    "success_judge": """\
Decide whether this execution trace completed the task.
Task: {task}
Final answer given: {final_answer}

Trace:
{steps}

Reply with JSON: {{"success": true|false}}""",
    "agent_turn": """\
You are {agent_id}. {role_prompt}
Task: {task}
Available tools: {tools}

Conversation so far:
{history}

{turn_instructions}""",
}

ORCHESTRATOR_TURN_INSTRUCTIONS = """\
Decide the next move. Reply with JSON, one of:
{"type": "plan", "text": "..."}            (only before any step is taken)
{"type": "replan", "text": "..."}          (start a new attempt)
{"type": "instruct", "agent": "<agent_id>", "text": "..."}
{"type": "final_answer", "text": "..."}"""

SUBAGENT_TURN_INSTRUCTIONS = """\
Carry out the orchestrator's latest instruction. Reply with JSON, one of:
{"type": "tool_call", "tool": "<tool>", "args": {...}}
{"type": "observation", "text": "..."}"""


def render_template(template_id: str, variables: dict[str, str]) -> str:
    """Deterministically render a registered template; pure function."""
    if template_id not in TEMPLATES:
        raise MissingVariable(f"unknown template_id: {template_id}")
    template = TEMPLATES[template_id]
    placeholders = set(re.findall(r"(?<!\{)\{([a-z_]+)\}(?!\})", template))
    missing = placeholders - set(variables)
    if missing:
        raise MissingVariable(
            f"template {template_id} missing variables: {sorted(missing)}"
        )
    text = template.replace("{{", "\x00").replace("}}", "\x01")
    for name in placeholders:
        text = text.replace("{" + name + "}", str(variables[name]))
    return text.replace("\x00", "{").replace("\x01", "}")


# ---------------------------------------------------------------------------
# Structured-output schemas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str  # int | str | bool | list | enum
    required: bool = True
    enum_values: tuple[str, ...] = ()


SCHEMAS: dict[str, list[FieldSpec]] = {
    "segment_indices": [FieldSpec("plan_step_indices", "list")],
    "hypothesis": [
        FieldSpec("no_mistake", "bool", required=False),
        FieldSpec("failure_step", "int", required=False),
        FieldSpec("agent", "str", required=False),
        FieldSpec("rationale", "str", required=False),
    ],
    "intervention": [
        FieldSpec("category", "enum", enum_values=("ModifiedInstruction", "PlanUpdate")),
        FieldSpec("replacement_text", "str"),
        FieldSpec("rationale", "str", required=False),
    ],
    "milestones": [FieldSpec("milestones", "list")],
    "milestone_judgment": [FieldSpec("judgments", "list")],
    "fulfillment": [
        FieldSpec("fulfilled", "bool"),
        FieldSpec("evidence", "str", required=False),
    ],
    "verdict": [FieldSpec("success", "bool")],
    "orchestrator_directive": [
        FieldSpec("type", "enum", enum_values=("plan", "replan", "instruct", "final_answer")),
        FieldSpec("text", "str", required=False),
        FieldSpec("agent", "str", required=False),
    ],
    "agent_action": [
        FieldSpec("type", "enum", enum_values=("tool_call", "observation")),
        FieldSpec("text", "str", required=False),
        FieldSpec("tool", "str", required=False),
        FieldSpec("args", "dict", required=False),
    ],
}


def _extract_json_object(text: str) -> dict:
    """Pull the first JSON object out of free-form text (fences, prose)."""
    fenced = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", text, re.DOTALL)
    candidates = [fenced.group(1)] if fenced else []
    decoder = json.JSONDecoder()
    start = 0
    while True:
        pos = text.find("{", start)
        if pos < 0:
            break
        try:
            obj, _ = decoder.raw_decode(text[pos:])
        except json.JSONDecodeError:
            start = pos + 1
            continue
        if isinstance(obj, dict):
            candidates.append(text[pos:])
            break
        start = pos + 1
    for candidate in candidates:
        try:
            obj, _ = decoder.raw_decode(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise MalformedOutput("no JSON object found in output")


def _coerce(spec: FieldSpec, value: Any) -> Any:
    """Lenient coercion: string digits to int, case-insensitive enums."""
    if spec.kind == "int":
        if isinstance(value, bool):
            raise MalformedOutput(f"field {spec.name}: expected integer")
        if isinstance(value, int):
            return value
        if isinstance(value, str) and re.fullmatch(r"-?\d+", value.strip()):
            return int(value.strip())
        raise MalformedOutput(f"field {spec.name}: expected integer, got {value!r}")
    if spec.kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.strip().lower() in ("true", "false"):
            return value.strip().lower() == "true"
        raise MalformedOutput(f"field {spec.name}: expected boolean, got {value!r}")
    if spec.kind == "str":
        if isinstance(value, str):
            return value
        raise MalformedOutput(f"field {spec.name}: expected string, got {value!r}")
    if spec.kind == "list":
        if isinstance(value, list):
            return value
        raise MalformedOutput(f"field {spec.name}: expected list, got {value!r}")
    if spec.kind == "dict":
        if isinstance(value, dict):
            return value
        raise MalformedOutput(f"field {spec.name}: expected object, got {value!r}")
    if spec.kind == "enum":
        if isinstance(value, str):
            for allowed in spec.enum_values:
                if value.strip().lower() == allowed.lower():
                    return allowed
        raise MalformedOutput(
            f"field {spec.name}: {value!r} not in {list(spec.enum_values)}"
        )
    raise MalformedOutput(f"unknown field kind {spec.kind}")


def parse_structured(raw_text: str, schema_id: str) -> dict:
    """Extract and validate the first JSON object in raw_text."""
    if schema_id not in SCHEMAS:
        raise MalformedOutput(f"unknown schema: {schema_id}")
    obj = _extract_json_object(raw_text)
    out: dict[str, Any] = {}
    for spec in SCHEMAS[schema_id]:
        if spec.name not in obj or obj[spec.name] is None:
            if spec.required:
                raise MalformedOutput(f"missing required field {spec.name}")
            continue
        out[spec.name] = _coerce(spec, obj[spec.name])
    return out


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    variables: dict[str, str]
    decoding_params: dict = field(default_factory=dict)
    expect_schema: str | None = None


@dataclass
class Completion:
    raw_text: str
    parsed: dict | None = None
    usage: dict = field(default_factory=lambda: {"prompt_units": 0, "output_units": 0})
    provider_tag: str = ""
    malformed: bool = False


class Provider:
    """Base provider: renders, fetches, and applies the parse/retry policy."""

    tag = "base"

    def _fetch(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        raise NotImplementedError

    def complete(self, request: PromptRequest) -> Completion:
        prompt = render_template(request.template_id, request.variables)
        raw = ""
        for attempt in range(PARSE_ATTEMPTS if request.expect_schema else 1):
            raw = self._fetch(request, prompt, attempt)
            usage = {
                "prompt_units": len(prompt.split()),
                "output_units": len(raw.split()),
            }
            if request.expect_schema is None:
                return Completion(raw_text=raw, usage=usage, provider_tag=self.tag)
            try:
                parsed = parse_structured(raw, request.expect_schema)
            except MalformedOutput:
                prompt = prompt + REPAIR_SUFFIX
                continue
            return Completion(raw_text=raw, parsed=parsed, usage=usage, provider_tag=self.tag)
        return Completion(
            raw_text=raw,
            parsed=None,
            usage={"prompt_units": len(prompt.split()), "output_units": len(raw.split())},
            provider_tag=self.tag,
            malformed=True,
        )


@dataclass
class ScriptEntry:
    """One canned response, matched against the rendered prompt.

    ``contains`` substrings must all appear in the prompt; ``position``
    matches the nth call (0-based) made for this template_id; ``times``
    caps how often the entry may fire (None = unlimited).
    """

    template_id: str
    response: str
    contains: list[str] = field(default_factory=list)
    position: int | None = None
    times: int | None = None

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "response": self.response,
            "contains": self.contains,
            "position": self.position,
            "times": self.times,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptEntry":
        return cls(
            template_id=d["template_id"],
            response=d["response"],
            contains=list(d.get("contains", [])),
            position=d.get("position"),
            times=d.get("times"),
        )


class ScriptedProvider(Provider):
    """Deterministic provider that replays a recorded script.

    Entries are evaluated in registration order; the first matching entry
    with remaining uses answers the call.  A lock keeps ``times`` caps
    correct under concurrent callers.
    """

    tag = "scripted"

    def __init__(self, entries: list[ScriptEntry] | None = None):
        self._entries = list(entries or [])
        self._remaining = [e.times for e in self._entries]
        self._call_counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def add(self, entry: ScriptEntry) -> None:
        with self._lock:
            self._entries.append(entry)
            self._remaining.append(entry.times)

    def reset(self) -> None:
        with self._lock:
            self._remaining = [e.times for e in self._entries]
            self._call_counts = {}

    @classmethod
    def from_file(cls, path) -> "ScriptedProvider":
        entries = json.loads(open(path, encoding="utf-8").read())
        return cls([ScriptEntry.from_dict(d) for d in entries])

    def _fetch(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        with self._lock:
            # Parse retries replay the same position; only fresh calls advance it.
            if attempt == 0:
                position = self._call_counts.get(request.template_id, 0)
                self._call_counts[request.template_id] = position + 1
            else:
                position = self._call_counts.get(request.template_id, 1) - 1
            for i, entry in enumerate(self._entries):
                if entry.template_id != request.template_id:
                    continue
                if self._remaining[i] is not None and self._remaining[i] <= 0:
                    continue
                if entry.position is not None and entry.position != position:
                    continue
                if any(sub not in prompt for sub in entry.contains):
                    continue
                if self._remaining[i] is not None and attempt == 0:
                    self._remaining[i] -= 1
                return entry.response
        raise ScriptExhausted(
            f"no script entry matches template={request.template_id} "
            f"position={position}"
        )


class LiveProvider(Provider):
    """OpenAI-style chat-completion endpoint.

    Configured via environment: DOVER_PROVIDER_BASE_URL, DOVER_PROVIDER_KEY,
    DOVER_PROVIDER_MODEL.
    """

    tag = "live"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
    ):
        self.base_url = base_url or os.environ.get("DOVER_PROVIDER_BASE_URL", "")
        self.api_key = api_key or os.environ.get("DOVER_PROVIDER_KEY", "")
        self.model = model or os.environ.get("DOVER_PROVIDER_MODEL", "")
        self.timeout = timeout
        if not self.base_url:
            raise ProviderUnreachable("no provider endpoint configured")

    def _fetch(self, request: PromptRequest, prompt: str, attempt: int) -> str:
        import httpx

        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            **request.decoding_params,
        }
        try:
            resp = httpx.post(
                f"{self.base_url.rstrip('/')}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderUnreachable(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise ProviderUnreachable(f"authentication failed: {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderUnreachable(f"provider returned {resp.status_code}")
        return resp.json()["choices"][0]["message"]["content"]


class RoutedProvider(Provider):
    """Binds specific template_ids to dedicated providers (e.g. a stronger
    judge model) and forwards everything else to the default provider."""

    tag = "routed"

    def __init__(self, default: Provider, overrides: dict[str, Provider] | None = None):
        self.default = default
        self.overrides = dict(overrides or {})

    def complete(self, request: PromptRequest) -> Completion:
        provider = self.overrides.get(request.template_id, self.default)
        return provider.complete(request)
