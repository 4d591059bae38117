"""Minimal ledger-style orchestrator with per-step checkpoints and replay.

The turn loop is deliberately simple: the orchestrator plans, instructs one
sub-agent, observes the result, and replans or answers.  Every step is
preceded by a checkpoint capturing conversation history, agent configs, and
tool state, so any step can be re-entered with an edited message spliced in.
All stochasticity lives in the provider; the loop itself is deterministic.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

from .canonical import canonical_json
from .errors import (
    CodecMissing,
    ImportedSessionNotReplayable,
    IndexOutOfRange,
    NoCheckpoint,
    ProviderError,
)
from .provider import (
    ORCHESTRATOR_TURN_INSTRUCTIONS,
    SUBAGENT_TURN_INSTRUCTIONS,
    PromptRequest,
    Provider,
)
from .trace import (
    PLAN_MARKER,
    Checkpoint,
    Message,
    Provenance,
    Role,
    SessionLog,
    SessionStore,
    Step,
    StepKind,
    Task,
    Termination,
)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    role_prompt: str
    tools: tuple[str, ...] = ()
    is_orchestrator: bool = False

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "is_orchestrator": self.is_orchestrator,
            "role_prompt": self.role_prompt,
            "tools": list(self.tools),
        }


@dataclass(frozen=True)
class RunConfig:
    max_replans: int = 3
    max_steps: int = 30
    runs_per_intervention: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_replans < 1 or self.max_steps < 1:
            raise ValueError("max_replans and max_steps must be positive")
        if self.max_steps < self.max_replans:
            raise ValueError("max_steps must be >= max_replans")
        if self.runs_per_intervention < 1:
            raise ValueError("runs_per_intervention must be >= 1")


@dataclass(frozen=True)
class TerminationReason:
    termination: Termination
    detail: str = ""


# ---------------------------------------------------------------------------
# Tools
# ---------------------------------------------------------------------------

ToolFn = Callable[[Any, dict], tuple[Any, str]]


@dataclass
class ToolEntry:
    fn: ToolFn
    state: Any
    encode: Callable[[Any], str]
    decode: Callable[[str], Any]


def _json_encode(state: Any) -> str:
    try:
        return canonical_json(state)
    except (TypeError, ValueError) as exc:
        raise CodecMissing(f"tool state is not JSON-serializable: {exc}") from exc


class ToolRegistry:
    """Named pure tools: fn(state, args) -> (new_state, observation)."""

    def __init__(self):
        self._tools: dict[str, ToolEntry] = {}

    def register(
        self,
        name: str,
        fn: ToolFn,
        initial_state: Any = None,
        encode: Callable[[Any], str] | None = None,
        decode: Callable[[str], Any] | None = None,
    ) -> None:
        self._tools[name] = ToolEntry(
            fn=fn,
            state=initial_state,
            encode=encode or _json_encode,
            decode=decode or json.loads,
        )

    def names(self) -> list[str]:
        return sorted(self._tools)

    def has(self, name: str) -> bool:
        return name in self._tools

    def initial_states(self) -> dict[str, Any]:
        return {name: entry.state for name, entry in self._tools.items()}

    def call(self, name: str, state: Any, args: dict) -> tuple[Any, str]:
        return self._tools[name].fn(state, args)

    def encode_states(self, states: dict[str, Any]) -> dict[str, str]:
        out = {}
        for name, state in states.items():
            if name not in self._tools:
                raise CodecMissing(f"no codec registered for tool state: {name}")
            out[name] = self._tools[name].encode(state)
        return out

    def decode_states(self, encoded: dict[str, str]) -> dict[str, Any]:
        out = {}
        for name, blob in encoded.items():
            if name not in self._tools:
                raise CodecMissing(f"no codec registered for tool state: {name}")
            out[name] = self._tools[name].decode(blob)
        return out


def _web_tool(state: dict, args: dict) -> tuple[dict, str]:
    query = str(args.get("query", ""))
    pages = state.get("pages", {})
    history = list(state.get("history", [])) + [query]
    result = pages.get(query, "no results")
    return {"pages": pages, "history": history}, result


def _calculator_tool(state: Any, args: dict) -> tuple[Any, str]:
    import ast
    import operator as op

    ops = {
        ast.Add: op.add, ast.Sub: op.sub, ast.Mult: op.mul,
        ast.Div: op.truediv, ast.Pow: op.pow, ast.USub: op.neg,
    }

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.BinOp) and type(node.op) in ops:
            return ops[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in ops:
            return ops[type(node.op)](ev(node.operand))
        raise ValueError("unsupported expression")

    try:
        value = ev(ast.parse(str(args.get("expression", "")), mode="eval").body)
    except (ValueError, SyntaxError, ZeroDivisionError) as exc:
        return state, f"error: {exc}"
    return state, str(value)


def _file_store_tool(state: dict, args: dict) -> tuple[dict, str]:
    files = dict(state.get("files", {}))
    if args.get("op") == "write":
        files[str(args.get("name", ""))] = str(args.get("content", ""))
        return {"files": files}, f"wrote {args.get('name', '')}"
    content = files.get(str(args.get("name", "")))
    return {"files": files}, content if content is not None else "file not found"


def default_tool_registry(
    web_pages: dict[str, str] | None = None,
    files: dict[str, str] | None = None,
) -> ToolRegistry:
    """The sandboxed built-in tools: a lookup-table web, a calculator, and an
    in-memory file store.  No network or filesystem access."""
    registry = ToolRegistry()
    registry.register("web", _web_tool, {"pages": web_pages or {}, "history": []})
    registry.register("calculator", _calculator_tool, None)
    registry.register("file_store", _file_store_tool, {"files": files or {}})
    return registry


# ---------------------------------------------------------------------------
# Runtime
# ---------------------------------------------------------------------------

_ADDRESSEE_RE = re.compile(r"^@([A-Za-z0-9_\-]+):\s*")


def parse_addressee(content: str) -> tuple[str | None, str]:
    """Split an instruction's '@agent:' prefix from its body."""
    m = _ADDRESSEE_RE.match(content)
    if not m:
        return None, content
    return m.group(1), content[m.end():]


def detect_termination(
    replan_count: int,
    step_count: int,
    last_kind: StepKind | None,
    config: RunConfig,
) -> TerminationReason | None:
    """Pure stopping-rule check over counters and the last step kind."""
    if last_kind is StepKind.FINAL_ANSWER:
        return TerminationReason(Termination.FINAL_ANSWER)
    if last_kind is StepKind.ERROR:
        return TerminationReason(Termination.RUNTIME_ERROR, "terminal error step")
    if replan_count > config.max_replans:
        return TerminationReason(
            Termination.MAX_ROUNDS, f"replan limit {config.max_replans} exceeded"
        )
    if step_count >= config.max_steps:
        return TerminationReason(
            Termination.MAX_ROUNDS, f"step limit {config.max_steps} reached"
        )
    return None


@dataclass
class RuntimeState:
    replan_count: int = 0
    tool_states: dict[str, Any] = field(default_factory=dict)


def format_steps(steps: list[Step]) -> str:
    if not steps:
        return "No steps taken yet."
    return "\n".join(
        f"Step {s.index} [{s.agent_id}] ({s.kind.value}): {s.message.content}"
        for s in steps
    )


class Runtime:
    """One single-threaded turn loop over a session.  Instances are cheap;
    parallel intervention runs each own a private Runtime."""

    def __init__(
        self,
        store: SessionStore,
        provider: Provider,
        agent_specs: list[AgentSpec],
        config: RunConfig | None = None,
        tools: ToolRegistry | None = None,
        model_config: dict | None = None,
    ):
        orchestrators = [a for a in agent_specs if a.is_orchestrator]
        if len(orchestrators) != 1:
            raise ValueError("exactly one orchestrator is required")
        self.store = store
        self.provider = provider
        self.agents = {a.agent_id: a for a in agent_specs}
        self.orchestrator = orchestrators[0]
        self.config = config or RunConfig()
        self.tools = tools or default_tool_registry()
        self.model_config = model_config or {"model_name": "scripted", "decoding_params": {}}
        for spec in agent_specs:
            for tool in spec.tools:
                if not self.tools.has(tool):
                    raise ValueError(f"agent {spec.agent_id} references unknown tool {tool}")

    # --- checkpointing ---

    def save_checkpoint(self, session: SessionLog, state: RuntimeState) -> Checkpoint:
        index = len(session.steps)
        ckpt = Checkpoint(
            id=f"ckpt_{index}",
            step_index=index,
            conversation_history=[
                {"agent_id": s.agent_id, "kind": s.kind.value, "message": s.message.to_dict()}
                for s in session.steps
            ],
            agent_configs={
                a.agent_id: {"role_prompt": a.role_prompt, "tool_names": list(a.tools)}
                for a in self.agents.values()
            },
            model_config=self.model_config,
            env_state=canonical_json(
                {
                    "replan_count": state.replan_count,
                    "tool_states": self.tools.encode_states(state.tool_states),
                }
            ),
        )
        self.store.save_checkpoint(session.session_id, ckpt)
        return ckpt

    def restore(self, checkpoint: Checkpoint) -> RuntimeState:
        env = json.loads(checkpoint.env_state)
        return RuntimeState(
            replan_count=env["replan_count"],
            tool_states=self.tools.decode_states(env["tool_states"]),
        )

    # --- execution ---

    def run_task(self, task: Task, session_id: str | None = None) -> SessionLog:
        session_id = session_id or f"run-{uuid.uuid4().hex[:12]}"
        session = self.store.create_session(session_id, task, Provenance.NATIVE)
        state = RuntimeState(tool_states=self.tools.initial_states())
        return self._loop(session, state)

    def replay_with_edit(
        self,
        session: SessionLog,
        t: int,
        replacement_message: Message,
        kind_override: StepKind | None = None,
        new_session_id: str | None = None,
        seed: int | None = None,
    ) -> SessionLog:
        """Splice a replacement message at step t and resume from there."""
        if session.provenance is not Provenance.NATIVE:
            raise ImportedSessionNotReplayable(
                f"session {session.session_id} was imported and cannot be replayed"
            )
        if t < 0 or t >= session.total_steps:
            raise IndexOutOfRange(f"edit point {t} outside [0, {session.total_steps})")
        if not self.store.has_checkpoint(session.session_id, t):
            raise NoCheckpoint(f"no checkpoint at step {t} of {session.session_id}")
        checkpoint = self.store.load_checkpoint(session.session_id, t)
        state = self.restore(checkpoint)

        new_id = new_session_id or f"{session.session_id}-edit{t}-{uuid.uuid4().hex[:8]}"
        replay = self.store.create_session(new_id, session.task, Provenance.NATIVE)
        self.store.copy_checkpoints(session.session_id, new_id, t)
        for step in session.steps[:t]:
            self.store.append_step(
                new_id, step.agent_id, step.message, step.kind, step.checkpoint_ref
            )

        original = session.steps[t]
        kind = kind_override or original.kind
        if kind is StepKind.REPLAN and t == 0:
            kind = StepKind.PLAN
        content = replacement_message.content
        if kind in (StepKind.PLAN, StepKind.REPLAN) and not content.startswith(PLAN_MARKER):
            content = f"{PLAN_MARKER}\n{content}"
        if kind is StepKind.INSTRUCTION:
            addressee, body = parse_addressee(content)
            if addressee is None or addressee not in self.agents:
                original_addressee, _ = parse_addressee(original.message.content)
                if original_addressee:
                    content = f"@{original_addressee}: {content}"
        spliced = Message(replacement_message.role, content)
        self.store.append_step(new_id, original.agent_id, spliced, kind, f"ckpt_{t}")
        if kind is StepKind.REPLAN:
            state.replan_count += 1
        return self._loop(self.store.get(new_id), state, seed=seed)

    def _seed_params(self, seed: int | None) -> dict:
        params = dict(self.model_config.get("decoding_params", {}))
        params["seed"] = self.config.seed if seed is None else seed
        return params

    def _loop(self, session: SessionLog, state: RuntimeState, seed: int | None = None) -> SessionLog:
        sid = session.session_id
        while True:
            session = self.store.get(sid)
            last = session.steps[-1] if session.steps else None
            reason = detect_termination(
                state.replan_count, session.total_steps, last.kind if last else None, self.config
            )
            if reason is not None:
                return self.store.seal(sid, reason.termination)

            try:
                if last is not None and last.kind is StepKind.TOOL_CALL:
                    self._run_tool(session, state, last)
                elif last is not None and last.kind is StepKind.INSTRUCTION:
                    self._subagent_turn(session, state, last, seed)
                else:
                    if not self._orchestrator_turn(session, state, seed):
                        # replan budget exhausted without appending a step
                        return self.store.seal(sid, Termination.MAX_ROUNDS)
            except ProviderError as exc:
                self.save_checkpoint(session, state)
                self.store.append_step(
                    sid,
                    self.orchestrator.agent_id,
                    Message(Role.SYSTEM, f"provider error: {exc}"),
                    StepKind.ERROR,
                    f"ckpt_{session.total_steps}",
                )
                return self.store.seal(sid, Termination.RUNTIME_ERROR)

    def _agent_prompt_vars(self, spec: AgentSpec, session: SessionLog, instructions: str) -> dict:
        return {
            "agent_id": spec.agent_id,
            "role_prompt": spec.role_prompt,
            "task": session.task.description,
            "tools": ", ".join(spec.tools) or "(none)",
            "history": format_steps(session.steps),
            "turn_instructions": instructions,
        }

    def _complete_action(self, spec: AgentSpec, session: SessionLog, instructions: str,
                         schema: str, seed: int | None) -> dict:
        completion = self.provider.complete(
            PromptRequest(
                template_id="agent_turn",
                variables=self._agent_prompt_vars(spec, session, instructions),
                decoding_params=self._seed_params(seed),
                expect_schema=schema,
            )
        )
        if completion.malformed or completion.parsed is None:
            raise ProviderError(f"unparseable {schema} output: {completion.raw_text[:200]}")
        return completion.parsed

    def _orchestrator_turn(self, session: SessionLog, state: RuntimeState, seed: int | None) -> bool:
        directive = self._complete_action(
            self.orchestrator, session, ORCHESTRATOR_TURN_INSTRUCTIONS,
            "orchestrator_directive", seed,
        )
        dtype = directive["type"]
        text = directive.get("text", "")
        if dtype == "plan" and session.total_steps > 0:
            dtype = "replan"
        if dtype == "replan" and session.total_steps == 0:
            dtype = "plan"

        if dtype in ("plan", "replan"):
            if dtype == "replan" and state.replan_count >= self.config.max_replans:
                return False
            content = text if text.startswith(PLAN_MARKER) else f"{PLAN_MARKER}\n{text}"
            # checkpoint first, then count: ckpt_t must reflect the state
            # before the replan step it precedes
            self._record(session, state, self.orchestrator.agent_id,
                         Message(Role.ORCHESTRATOR, content), StepKind(dtype))
            if dtype == "replan":
                state.replan_count += 1
        elif dtype == "instruct":
            agent = directive.get("agent", "")
            if agent not in self.agents or agent == self.orchestrator.agent_id:
                raise ProviderError(f"orchestrator instructed unknown agent {agent!r}")
            self._record(session, state, self.orchestrator.agent_id,
                         Message(Role.ORCHESTRATOR, f"@{agent}: {text}"),
                         StepKind.INSTRUCTION)
        else:  # final_answer
            self._record(session, state, self.orchestrator.agent_id,
                         Message(Role.ORCHESTRATOR, text), StepKind.FINAL_ANSWER)
        return True

    def _subagent_turn(self, session: SessionLog, state: RuntimeState,
                       instruction: Step, seed: int | None) -> None:
        addressee, _ = parse_addressee(instruction.message.content)
        if addressee is None or addressee not in self.agents:
            raise ProviderError(
                f"instruction at step {instruction.index} has no valid addressee"
            )
        spec = self.agents[addressee]
        action = self._complete_action(
            spec, session, SUBAGENT_TURN_INSTRUCTIONS, "agent_action", seed
        )
        if action["type"] == "tool_call":
            payload = canonical_json(
                {"args": action.get("args", {}), "tool": action.get("tool", "")}
            )
            self._record(session, state, spec.agent_id,
                         Message(Role.AGENT, payload), StepKind.TOOL_CALL)
        else:
            self._record(session, state, spec.agent_id,
                         Message(Role.AGENT, action.get("text", "")), StepKind.OBSERVATION)

    def _run_tool(self, session: SessionLog, state: RuntimeState, call: Step) -> None:
        # Checkpoint holds pre-tool state so replaying the tool_result step
        # re-executes the call against the same environment.
        self.save_checkpoint(session, state)
        try:
            payload = json.loads(call.message.content)
        except json.JSONDecodeError:
            payload = {}
        if not isinstance(payload, dict):
            payload = {}
        tool, args = payload.get("tool", ""), payload.get("args", {})
        spec = self.agents.get(call.agent_id)
        if not self.tools.has(tool) or spec is None or tool not in spec.tools:
            observation = f"error: tool {tool!r} unavailable"
        else:
            new_state, observation = self.tools.call(tool, state.tool_states.get(tool), args)
            state.tool_states[tool] = new_state
        self.store.append_step(
            session.session_id, call.agent_id,
            Message(Role.TOOL, f"Result: {observation}"), StepKind.TOOL_RESULT,
            f"ckpt_{session.total_steps}",
        )

    def _record(self, session: SessionLog, state: RuntimeState,
                agent_id: str, message: Message, kind: StepKind) -> Step:
        self.save_checkpoint(session, state)
        return self.store.append_step(
            session.session_id, agent_id, message, kind, f"ckpt_{session.total_steps}"
        )
