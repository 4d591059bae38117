"""HTTP API exposing sessions, trials, interventions, and replay control.

Single-tenant developer service: bind to loopback, no auth.  Long
operations (task runs, replays) return a job id pollable at /jobs/{id}.
Mutating endpoints honor a client-supplied Idempotency-Key header.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from fastapi import FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import attributor, evaluator, intervenor, pipeline, segmenter
from .errors import DoverError, StoreUnavailable
from .intervenor import Intervention, InterventionRun
from .provider import Provider
from .runtime import RunConfig, Runtime, ToolRegistry, default_tool_registry
from .trace import Provenance, SessionStore, StepKind, Task


class JobStage(str, Enum):
    RUN = "run"
    SEGMENT = "segment"
    ATTRIBUTE = "attribute"
    INTERVENE = "intervene"
    EVALUATE = "evaluate"
    REPORT = "report"


class JobStatus(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


_STATUS_ORDER = [JobStatus.QUEUED, JobStatus.RUNNING, JobStatus.DONE, JobStatus.FAILED]


@dataclass
class PipelineJob:
    job_id: str
    stage: JobStage
    status: JobStatus = JobStatus.QUEUED
    artifact_refs: list[str] = field(default_factory=list)
    error: str | None = None

    def advance(self, status: JobStatus) -> None:
        if _STATUS_ORDER.index(status) < _STATUS_ORDER.index(self.status):
            raise ValueError("job status transitions only move forward")
        self.status = status

    def to_dict(self) -> dict:
        return {
            "artifact_refs": list(self.artifact_refs),
            "error": self.error,
            "job_id": self.job_id,
            "stage": self.stage.value,
            "status": self.status.value,
        }


class NewSessionBody(BaseModel):
    description: str
    ground_truth_answer: str | None = None
    annotated_solution: str | None = None
    session_id: str | None = None


class InterventionBody(BaseModel):
    target_step: int
    category: str
    replacement_text: str
    rationale: str = ""


class ReplayBody(BaseModel):
    runs: int | None = None


@dataclass
class ApiState:
    store: SessionStore
    provider: Provider
    config: RunConfig
    tools: ToolRegistry
    interventions: dict = field(default_factory=dict)  # id -> (session_id, Intervention)
    runs: dict = field(default_factory=dict)  # run id -> (intervention id, InterventionRun)
    jobs: dict = field(default_factory=dict)
    idempotency: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(
    store: SessionStore,
    provider: Provider,
    config: RunConfig | None = None,
    tools: ToolRegistry | None = None,
    workers: int = 2,
) -> FastAPI:
    state = ApiState(
        store=store,
        provider=provider,
        config=config or RunConfig(),
        tools=tools or default_tool_registry(),
    )
    pool = ThreadPoolExecutor(max_workers=workers)
    app = FastAPI(title="dover", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.dover = state

    def get_session(session_id: str):
        try:
            return state.store.get(session_id)
        except StoreUnavailable:
            raise HTTPException(404, f"unknown session: {session_id}")

    def submit_job(stage: JobStage, fn) -> PipelineJob:
        job = PipelineJob(job_id=f"job-{uuid.uuid4().hex[:12]}", stage=stage)
        with state.lock:
            state.jobs[job.job_id] = job

        def wrapped():
            job.advance(JobStatus.RUNNING)
            try:
                job.artifact_refs = fn()
                job.advance(JobStatus.DONE)
            except Exception as exc:  # job errors surface via polling
                job.error = str(exc)
                job.advance(JobStatus.FAILED)

        pool.submit(wrapped)
        return job

    def idempotent(key: str | None, build):
        if key is None:
            return build()
        with state.lock:
            if key in state.idempotency:
                return state.idempotency[key]
        response = build()
        with state.lock:
            state.idempotency.setdefault(key, response)
            return state.idempotency[key]

    # --- sessions ---

    @app.get("/sessions")
    def list_sessions():
        return [
            {
                "session_id": s.session_id,
                "provenance": s.provenance.value,
                "termination": s.termination.value if s.termination else None,
                "steps": s.total_steps,
                "task": s.task.to_dict(),
            }
            for s in state.store.list_sessions()
        ]

    @app.get("/sessions/{session_id}")
    def session_detail(session_id: str):
        session = get_session(session_id)
        header = session.header_dict()
        header["steps"] = session.total_steps
        header["digest"] = session.digest()
        return header

    @app.get("/sessions/{session_id}/steps")
    def session_steps(session_id: str):
        return [s.to_dict() for s in get_session(session_id).steps]

    @app.get("/sessions/{session_id}/trials")
    def session_trials(session_id: str):
        session = get_session(session_id)
        try:
            trials = segmenter.segment(session, state.provider)
        except DoverError as exc:
            raise HTTPException(422, str(exc))
        return [t.to_dict() for t in trials]

    @app.get("/sessions/{session_id}/hypotheses")
    def session_hypotheses(session_id: str):
        session = get_session(session_id)
        out = []
        try:
            trials = segmenter.segment(session, state.provider)
        except DoverError as exc:
            raise HTTPException(422, str(exc))
        for trial in trials:
            try:
                out.append(attributor.attribute(trial, session, state.provider).to_dict())
            except DoverError as exc:
                out.append({"trial_index": trial.trial_index, "error": str(exc)})
        return out

    @app.post("/sessions", status_code=202)
    def new_session(body: NewSessionBody,
                    idempotency_key: str | None = Header(default=None)):
        def build():
            session_id = body.session_id or f"run-{uuid.uuid4().hex[:12]}"
            if state.store.has(session_id):
                raise HTTPException(409, f"session {session_id} already exists")
            task = Task(body.description, body.ground_truth_answer,
                        body.annotated_solution)

            def work():
                pipeline.run_default_task(
                    state.store, state.provider, task, state.config,
                    state.tools, session_id=session_id,
                )
                return [session_id]

            job = submit_job(JobStage.RUN, work)
            return {"job_id": job.job_id, "session_id": session_id}

        return idempotent(idempotency_key, build)

    # --- interventions ---

    @app.post("/sessions/{session_id}/interventions", status_code=201)
    def create_intervention(session_id: str, body: InterventionBody,
                            idempotency_key: str | None = Header(default=None)):
        session = get_session(session_id)

        def build():
            if body.category not in ("ModifiedInstruction", "PlanUpdate"):
                raise HTTPException(422, f"invalid category: {body.category}")
            if not (0 <= body.target_step < session.total_steps):
                raise HTTPException(
                    422, f"target_step {body.target_step} outside [0, {session.total_steps})"
                )
            if not body.replacement_text.strip():
                raise HTTPException(422, "replacement_text must be non-empty")
            original = session.steps[body.target_step].message.content
            if body.replacement_text == original:
                raise HTTPException(422, "replacement_text equals the original message")
            intervention_id = f"iv-{uuid.uuid4().hex[:12]}"
            intervention = Intervention(
                id=intervention_id,
                hypothesis_ref=0,
                category=body.category,
                target_step=body.target_step,
                replacement_text=body.replacement_text,
                rationale=body.rationale,
            )
            with state.lock:
                state.interventions[intervention_id] = (session_id, intervention, [])
            return {"intervention_id": intervention_id,
                    "intervention": intervention.to_dict()}

        return idempotent(idempotency_key, build)

    def get_intervention(intervention_id: str):
        with state.lock:
            entry = state.interventions.get(intervention_id)
        if entry is None:
            raise HTTPException(404, f"unknown intervention: {intervention_id}")
        return entry

    @app.post("/interventions/{intervention_id}/replay", status_code=202)
    def replay_intervention(intervention_id: str, body: ReplayBody,
                            idempotency_key: str | None = Header(default=None)):
        session_id, intervention, _ = get_intervention(intervention_id)
        session = get_session(session_id)
        if session.provenance is not Provenance.NATIVE:
            raise HTTPException(409, "imported sessions cannot be replayed")

        def build():
            runs = body.runs or state.config.runs_per_intervention
            run_config = RunConfig(
                max_replans=state.config.max_replans,
                max_steps=state.config.max_steps,
                runs_per_intervention=runs,
                seed=state.config.seed,
            )
            specs = (pipeline.agent_specs_from_checkpoint(state.store, session)
                     or pipeline.DEFAULT_AGENT_SPECS)

            def work():
                def factory():
                    return Runtime(state.store, state.provider, specs,
                                   run_config, state.tools)

                results = intervenor.execute(
                    intervention, session, factory, run_config
                )
                refs = []
                with state.lock:
                    stored_runs = state.interventions[intervention_id][2]
                    for run in results:
                        result_session = state.store.get(run.result_session_ref)
                        try:
                            run.success = evaluator.judge_success(
                                result_session, session.task, state.provider
                            ).success
                        except DoverError:
                            run.success = False
                        run.fulfilled, run.fulfillment_evidence = (
                            evaluator.check_fulfilled(
                                session, result_session, intervention, state.provider
                            )
                        )
                        run_id = f"{intervention_id}-r{run.run_index}"
                        state.runs[run_id] = (intervention_id, run)
                        stored_runs.append(run)
                        refs.append(run_id)
                return refs

            job = submit_job(JobStage.INTERVENE, work)
            return {"job_id": job.job_id}

        return idempotent(idempotency_key, build)

    @app.get("/interventions/{intervention_id}/runs")
    def intervention_runs(intervention_id: str):
        _, _, runs = get_intervention(intervention_id)
        return [r.to_dict() for r in runs]

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str):
        with state.lock:
            entry = state.runs.get(run_id)
        if entry is None:
            raise HTTPException(404, f"unknown run: {run_id}")
        intervention_id, run = entry
        session_id, intervention, runs = get_intervention(intervention_id)
        complete = [r for r in runs if r.success is not None]
        outcome = None
        if len(complete) >= state.config.runs_per_intervention:
            outcome = evaluator.classify_outcome(
                complete[: state.config.runs_per_intervention], None
            ).to_dict()
        return {
            "run": run.to_dict(),
            "intervention": intervention.to_dict(),
            "session_id": session_id,
            "outcome": outcome,
        }

    @app.get("/jobs/{job_id}")
    def job_detail(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job: {job_id}")
        return job.to_dict()

    return app
