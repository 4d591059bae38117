"""Trace data model and append-only persistence.

A session is an ordered list of steps, each carrying the speaking agent, its
message, a kind tag assigned at record time, and a content hash.  Native
sessions additionally reference one checkpoint per step so any prefix can be
restored and replayed; imported sessions carry no checkpoints and are
analysis-only.

On disk a session is ``<session_id>.jsonl`` (one header line, then one line
per step) and its checkpoints live in ``<session_id>/ckpt_<index>.json``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

from .canonical import SCHEMA_VERSION, canonical_json, content_digest, session_digest
from .errors import (
    IndexOutOfRange,
    ParseError,
    SessionSealed,
    StoreUnavailable,
    UnknownFormat,
    VersionMismatch,
)

# Marker used by the native runtime at the start of plan/replan messages and
# by the pattern-based segmenter fallback.
PLAN_MARKER = "We are working to address the following user request"


class Role(str, Enum):
    SYSTEM = "system"
    ORCHESTRATOR = "orchestrator"
    AGENT = "agent"
    TOOL = "tool"
    USER = "user"


class StepKind(str, Enum):
    PLAN = "plan"
    REPLAN = "replan"
    INSTRUCTION = "instruction"
    OBSERVATION = "observation"
    TOOL_CALL = "tool_call"
    TOOL_RESULT = "tool_result"
    FINAL_ANSWER = "final_answer"
    ERROR = "error"


class Termination(str, Enum):
    FINAL_ANSWER = "final_answer"
    MAX_ROUNDS = "max_rounds"
    RUNTIME_ERROR = "runtime_error"
    ABORTED = "aborted"


class Provenance(str, Enum):
    NATIVE = "native"
    IMPORTED = "imported"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def to_dict(self) -> dict:
        return {"content": self.content, "role": self.role.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        return cls(role=Role(d["role"]), content=d["content"])


@dataclass(frozen=True)
class Step:
    index: int
    agent_id: str
    message: Message
    kind: StepKind
    checkpoint_ref: str | None
    content_hash: str

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "checkpoint_ref": self.checkpoint_ref,
            "content_hash": self.content_hash,
            "index": self.index,
            "kind": self.kind.value,
            "message": self.message.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        return cls(
            index=d["index"],
            agent_id=d["agent_id"],
            message=Message.from_dict(d["message"]),
            kind=StepKind(d["kind"]),
            checkpoint_ref=d.get("checkpoint_ref"),
            content_hash=d["content_hash"],
        )


def message_hash(message: Message) -> str:
    return content_digest(message.to_dict())


@dataclass(frozen=True)
class Task:
    description: str
    ground_truth_answer: str | None = None
    annotated_solution: str | None = None

    def to_dict(self) -> dict:
        return {
            "annotated_solution": self.annotated_solution,
            "description": self.description,
            "ground_truth_answer": self.ground_truth_answer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Task":
        return cls(
            description=d["description"],
            ground_truth_answer=d.get("ground_truth_answer"),
            annotated_solution=d.get("annotated_solution"),
        )


@dataclass
class SessionLog:
    session_id: str
    task: Task
    steps: list[Step] = field(default_factory=list)
    termination: Termination | None = None
    provenance: Provenance = Provenance.NATIVE

    @property
    def sealed(self) -> bool:
        return self.termination is not None

    @property
    def total_steps(self) -> int:
        return len(self.steps)

    def header_dict(self) -> dict:
        return {
            "provenance": self.provenance.value,
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "task": self.task.to_dict(),
            "termination": self.termination.value if self.termination else None,
        }

    def digest(self) -> str:
        """Stable digest of the whole trace (step hashes in order)."""
        return session_digest([s.content_hash for s in self.steps])

    def final_answer_step(self) -> Step | None:
        for step in reversed(self.steps):
            if step.kind is StepKind.FINAL_ANSWER:
                return step
        return None


@dataclass(frozen=True)
class Checkpoint:
    """Restorable state captured immediately before a step is produced.

    ``conversation_history`` holds the message snapshots of all prior steps,
    so a checkpoint with step_index t carries exactly t entries.
    """

    id: str
    step_index: int
    conversation_history: list[dict]
    agent_configs: dict[str, dict]
    model_config: dict
    env_state: str
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "agent_configs": self.agent_configs,
            "conversation_history": self.conversation_history,
            "env_state": self.env_state,
            "id": self.id,
            "model_config": self.model_config,
            "schema_version": self.schema_version,
            "step_index": self.step_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("schema_version", 0) > SCHEMA_VERSION:
            raise VersionMismatch(
                f"checkpoint schema_version {d['schema_version']} is newer than "
                f"supported version {SCHEMA_VERSION}"
            )
        return cls(
            id=d["id"],
            step_index=d["step_index"],
            conversation_history=d["conversation_history"],
            agent_configs=d["agent_configs"],
            model_config=d["model_config"],
            env_state=d["env_state"],
            schema_version=d["schema_version"],
        )


def _validate_new_step(session: SessionLog, kind: StepKind) -> None:
    index = len(session.steps)
    if kind is StepKind.REPLAN and index == 0:
        raise ValueError("replan cannot open a session")
    if kind is StepKind.PLAN:
        if any(s.kind is StepKind.PLAN for s in session.steps):
            raise ValueError("plan may appear at most once per session")
        if any(s.message.role is Role.ORCHESTRATOR for s in session.steps):
            raise ValueError("plan only allowed at the first orchestrator turn")


def make_step(
    session: SessionLog,
    agent_id: str,
    message: Message,
    kind: StepKind,
    checkpoint_ref: str | None = None,
) -> Step:
    """Build the next step for a session, assigning index and content hash."""
    _validate_new_step(session, kind)
    return Step(
        index=len(session.steps),
        agent_id=agent_id,
        message=message,
        kind=kind,
        checkpoint_ref=checkpoint_ref,
        content_hash=message_hash(message),
    )


def slice_prefix(session: SessionLog, t: int) -> SessionLog:
    """Return a new unsealed session holding steps with index < t."""
    if t < 0 or t > session.total_steps:
        raise IndexOutOfRange(f"prefix length {t} outside [0, {session.total_steps}]")
    return SessionLog(
        session_id=session.session_id,
        task=session.task,
        steps=list(session.steps[:t]),
        termination=None,
        provenance=session.provenance,
    )


def export_session(session: SessionLog) -> bytes:
    """Canonical JSONL: one header line, then one line per step."""
    lines = [canonical_json(session.header_dict())]
    lines.extend(canonical_json(s.to_dict()) for s in session.steps)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_native_jsonl(data: bytes) -> SessionLog:
    text = data.decode("utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise ParseError("empty session file", offset=0)
    offset = 0
    parsed = []
    for ln in lines:
        try:
            parsed.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON line: {exc}", offset=offset + exc.pos) from exc
        offset += len(ln.encode("utf-8")) + 1
    header = parsed[0]
    if header.get("schema_version", 0) > SCHEMA_VERSION:
        raise VersionMismatch(
            f"session schema_version {header['schema_version']} is newer than "
            f"supported version {SCHEMA_VERSION}"
        )
    session = SessionLog(
        session_id=header["session_id"],
        task=Task.from_dict(header["task"]),
        steps=[Step.from_dict(d) for d in parsed[1:]],
        termination=Termination(header["termination"]) if header.get("termination") else None,
        provenance=Provenance(header["provenance"]),
    )
    for i, step in enumerate(session.steps):
        if step.index != i:
            raise ParseError(f"non-contiguous step index {step.index} at position {i}")
    return session


def _infer_imported_kind(index: int, content: str) -> StepKind:
    if content.startswith(PLAN_MARKER):
        return StepKind.PLAN if index == 0 else StepKind.REPLAN
    return StepKind.OBSERVATION


def _parse_ww_json(data: bytes) -> SessionLog:
    """Parse a Who&When-style array of ``{"agent": ..., "message": ...}``."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", offset=exc.pos) from exc
    if isinstance(doc, dict):
        entries = doc.get("history", doc.get("messages", []))
        task = Task(
            description=doc.get("question", doc.get("task", "")),
            ground_truth_answer=doc.get("ground_truth"),
        )
        session_id = str(doc.get("id", "imported"))
    elif isinstance(doc, list):
        entries = doc
        task = Task(description="")
        session_id = "imported"
    else:
        raise ParseError("expected a JSON object or array", offset=0)

    session = SessionLog(
        session_id=session_id, task=task, provenance=Provenance.IMPORTED
    )
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "agent" not in entry:
            raise ParseError(f"entry {i} is not an agent/message object")
        content = str(entry.get("message", entry.get("content", "")))
        agent = str(entry["agent"])
        kind = _infer_imported_kind(i, content)
        role = Role.ORCHESTRATOR if kind in (StepKind.PLAN, StepKind.REPLAN) else Role.AGENT
        session.steps.append(
            make_step(session, agent, Message(role, content), kind)
        )
    session.termination = Termination.ABORTED
    return session


def import_external_log(data: bytes, format_tag: str) -> SessionLog:
    if format_tag == "jsonl_native":
        return _parse_native_jsonl(data)
    if format_tag == "ww_json":
        return _parse_ww_json(data)
    raise UnknownFormat(f"unknown import format: {format_tag}")


class SessionStore:
    """File-backed session/checkpoint store with per-session write locks.

    Appends to one session are serialized; different sessions may be written
    concurrently.  Files are rewritten atomically so readers always see a
    consistent snapshot.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, SessionLog] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._load_existing()

    def _load_existing(self) -> None:
        for path in sorted(self.root.glob("*.jsonl")):
            try:
                session = _parse_native_jsonl(path.read_bytes())
            except (ParseError, VersionMismatch):
                continue
            self._sessions[session.session_id] = session

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _session_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def _write(self, session: SessionLog) -> None:
        path = self._session_path(session.session_id)
        tmp = path.with_suffix(".jsonl.tmp")
        try:
            tmp.write_bytes(export_session(session))
            tmp.replace(path)
        except OSError as exc:
            raise StoreUnavailable(str(exc)) from exc

    # --- sessions ---

    def create_session(
        self,
        session_id: str,
        task: Task,
        provenance: Provenance = Provenance.NATIVE,
    ) -> SessionLog:
        with self._lock_for(session_id):
            if session_id in self._sessions:
                raise StoreUnavailable(f"session {session_id} already exists")
            session = SessionLog(session_id=session_id, task=task, provenance=provenance)
            self._sessions[session_id] = session
            self._write(session)
            return session

    def put_session(self, session: SessionLog) -> SessionLog:
        """Register an already-built session (e.g. an import) verbatim."""
        with self._lock_for(session.session_id):
            self._sessions[session.session_id] = session
            self._write(session)
            return session

    def get(self, session_id: str) -> SessionLog:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise StoreUnavailable(f"unknown session: {session_id}") from None

    def has(self, session_id: str) -> bool:
        return session_id in self._sessions

    def list_sessions(self) -> list[SessionLog]:
        return [self._sessions[k] for k in sorted(self._sessions)]

    def append_step(
        self,
        session_id: str,
        agent_id: str,
        message: Message,
        kind: StepKind,
        checkpoint_ref: str | None = None,
    ) -> Step:
        with self._lock_for(session_id):
            session = self.get(session_id)
            if session.sealed:
                raise SessionSealed(f"session {session_id} is sealed")
            step = make_step(session, agent_id, message, kind, checkpoint_ref)
            session.steps.append(step)
            self._write(session)
            return step

    def seal(self, session_id: str, termination: Termination) -> SessionLog:
        with self._lock_for(session_id):
            session = self.get(session_id)
            if session.sealed:
                raise SessionSealed(f"session {session_id} is already sealed")
            session.termination = termination
            self._write(session)
            return session

    # --- checkpoints ---

    def _checkpoint_path(self, session_id: str, index: int) -> Path:
        return self.root / session_id / f"ckpt_{index}.json"

    def save_checkpoint(self, session_id: str, checkpoint: Checkpoint) -> str:
        path = self._checkpoint_path(session_id, checkpoint.step_index)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(canonical_json(checkpoint.to_dict()), encoding="utf-8")
        tmp.replace(path)
        return checkpoint.id

    def load_checkpoint(self, session_id: str, index: int) -> Checkpoint:
        path = self._checkpoint_path(session_id, index)
        if not path.exists():
            from .errors import NoCheckpoint

            raise NoCheckpoint(f"no checkpoint for {session_id} step {index}")
        return Checkpoint.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def has_checkpoint(self, session_id: str, index: int) -> bool:
        return self._checkpoint_path(session_id, index).exists()

    def copy_checkpoints(self, src_id: str, dst_id: str, upto: int) -> None:
        """Copy checkpoints for step indices <= upto to another session."""
        for index in range(upto + 1):
            if self.has_checkpoint(src_id, index):
                ckpt = self.load_checkpoint(src_id, index)
                self.save_checkpoint(dst_id, ckpt)
