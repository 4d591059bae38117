"""Command-line entry points for the pipeline and the HTTP service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import evaluator, pipeline, scenarios, segmenter
from .attributor import attribute
from .canonical import canonical_json
from .errors import DoverError
from .provider import Provider, ScriptedProvider
from .runtime import RunConfig, Runtime
from .trace import (
    Message,
    Role,
    SessionStore,
    Task,
    import_external_log,
    slice_prefix,
)


def _fail(stage: str, exc: Exception, code: int = 1) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc), "stage": stage}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _provider(script: str | None) -> Provider:
    if script:
        return ScriptedProvider.from_file(script)
    try:
        from .provider import LiveProvider

        return LiveProvider()
    except DoverError:
        return ScriptedProvider([])


def _resolve_session(store_dir: str, session_ref: str):
    """Accept either a session id within the store or a path to a .jsonl."""
    path = Path(session_ref)
    if session_ref.endswith(".jsonl") and path.exists():
        store = SessionStore(path.parent)
        return store, store.get(path.stem)
    store = SessionStore(store_dir)
    return store, store.get(session_ref)


def _run_config(max_replans: int, max_steps: int, runs: int) -> RunConfig:
    return RunConfig(max_replans=max_replans, max_steps=max_steps,
                     runs_per_intervention=runs)


store_option = click.option("--store-dir", default=".dover", show_default=True,
                            help="Directory holding session files and checkpoints.")
script_option = click.option("--script", default=None, type=click.Path(exists=True),
                             help="Scripted-provider entries (JSON file).")


@click.group()
def main():
    """DoVer: record, segment, attribute, intervene, replay, and report."""


@main.command()
@click.option("--task", required=True, help="Task description.")
@click.option("--ground-truth", default=None)
@click.option("--annotated-solution", default=None)
@click.option("--session-id", default=None)
@click.option("--max-replans", default=3, show_default=True)
@click.option("--max-steps", default=30, show_default=True)
@store_option
@script_option
def run(task, ground_truth, annotated_solution, session_id, max_replans,
        max_steps, store_dir, script):
    """Run a task on the built-in runtime and record a session."""
    try:
        store = SessionStore(store_dir)
        session = pipeline.run_default_task(
            store,
            _provider(script),
            Task(task, ground_truth, annotated_solution),
            _run_config(max_replans, max_steps, 3),
            session_id=session_id,
        )
        click.echo(json.dumps({
            "session_id": session.session_id,
            "steps": session.total_steps,
            "termination": session.termination.value,
        }))
    except DoverError as exc:
        _fail("run", exc)


@main.command("import")
@click.argument("source", type=click.Path(exists=True))
@click.option("--format", "format_tag", required=True,
              type=click.Choice(["ww_json", "jsonl_native"]))
@store_option
def import_cmd(source, format_tag, store_dir):
    """Import an external log; imported sessions cannot be replayed."""
    try:
        session = import_external_log(Path(source).read_bytes(), format_tag)
        store = SessionStore(store_dir)
        store.put_session(session)
        click.echo(json.dumps({
            "session_id": session.session_id,
            "steps": session.total_steps,
            "provenance": session.provenance.value,
        }))
    except DoverError as exc:
        _fail("import", exc)


@main.command()
@click.argument("session_ref")
@store_option
@script_option
def segment(session_ref, store_dir, script):
    """Emit the trial table for a session as JSON."""
    try:
        _, session = _resolve_session(store_dir, session_ref)
        trials = segmenter.segment(session, _provider(script))
        click.echo(canonical_json([t.to_dict() for t in trials]))
    except DoverError as exc:
        _fail("segment", exc)


@main.command("attribute")
@click.argument("session_ref")
@store_option
@script_option
def attribute_cmd(session_ref, store_dir, script):
    """Emit one failure hypothesis per trial as JSON."""
    try:
        _, session = _resolve_session(store_dir, session_ref)
        provider = _provider(script)
        trials = segmenter.segment(session, provider)
        hypotheses = []
        for trial in trials:
            try:
                hypotheses.append(attribute(trial, session, provider).to_dict())
            except DoverError as exc:
                hypotheses.append({"trial_index": trial.trial_index,
                                   "error": str(exc)})
        click.echo(canonical_json(hypotheses))
    except DoverError as exc:
        _fail("attribute", exc)


@main.command()
@click.argument("session_ref")
@click.option("--trial", "trial_index", default=None, type=int,
              help="Only intervene on this trial.")
@click.option("--runs", default=3, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--max-replans", default=3, show_default=True)
@click.option("--max-steps", default=30, show_default=True)
@store_option
@script_option
def intervene(session_ref, trial_index, runs, workers, max_replans, max_steps,
              store_dir, script):
    """Generate and execute interventions; print the per-trial outcomes."""
    try:
        store, session = _resolve_session(store_dir, session_ref)
        result = pipeline.debug_session(
            session, store, _provider(script),
            _run_config(max_replans, max_steps, runs),
            workers=workers, only_trial=trial_index,
        )
        click.echo(canonical_json(result.case_result.to_dict()))
    except DoverError as exc:
        _fail("intervene", exc)


@main.command()
@click.argument("session_ref")
@click.option("--step", required=True, type=int)
@click.option("--message-file", required=True, type=click.Path(exists=True))
@click.option("--max-replans", default=3, show_default=True)
@click.option("--max-steps", default=30, show_default=True)
@store_option
@script_option
def replay(session_ref, step, message_file, max_replans, max_steps, store_dir, script):
    """Replay a session from a step with an edited message spliced in."""
    try:
        store, session = _resolve_session(store_dir, session_ref)
        specs = (pipeline.agent_specs_from_checkpoint(store, session)
                 or pipeline.DEFAULT_AGENT_SPECS)
        runtime = Runtime(store, _provider(script), specs,
                          _run_config(max_replans, max_steps, 3))
        text = Path(message_file).read_text(encoding="utf-8")
        role = session.steps[step].message.role if step < session.total_steps else Role.ORCHESTRATOR
        result = runtime.replay_with_edit(session, step, Message(role, text))
        click.echo(str(store.root / f"{result.session_id}.jsonl"))
    except DoverError as exc:
        _fail("replay", exc)


@main.command()
@click.argument("result_files", nargs=-1, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="JSON only, no table.")
def report(result_files, as_json):
    """Aggregate saved debug results into the metrics table."""
    try:
        cases = []
        for path in result_files:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            case = doc.get("case_result", doc)
            cases.append(evaluator.case_result_from_dict(case))
        metrics = evaluator.aggregate_report(cases)
        click.echo(canonical_json(metrics.to_dict()))
        if not as_json:
            click.echo(evaluator.report_markdown(metrics))
    except (DoverError, KeyError, json.JSONDecodeError) as exc:
        _fail("report", exc)


@main.command()
@click.argument("session_ref")
@click.option("--runs", default=3, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--max-replans", default=3, show_default=True)
@click.option("--max-steps", default=30, show_default=True)
@click.option("--out", default=None, type=click.Path(),
              help="Also write the result JSON to this file.")
@store_option
@script_option
def debug(session_ref, runs, workers, max_replans, max_steps, out, store_dir, script):
    """Full pipeline: segment, attribute, intervene, evaluate, report."""
    try:
        store, session = _resolve_session(store_dir, session_ref)
        result = pipeline.debug_session(
            session, store, _provider(script),
            _run_config(max_replans, max_steps, runs),
            workers=workers,
        )
        text = result.to_json()
        if out:
            Path(out).write_text(text, encoding="utf-8")
        click.echo(text)
    except DoverError as exc:
        _fail("debug", exc)


@main.group()
def scenario():
    """Built-in deterministic scenarios."""


@scenario.command("run")
@click.argument("name", required=False)
@click.option("--all", "run_all", is_flag=True)
@store_option
def scenario_run(name, run_all, store_dir):
    """Run one built-in scenario (or --all) and report mismatches."""
    names = scenarios.list_scenarios() if run_all else ([name] if name else [])
    if not names:
        _fail("scenario", DoverError("provide a scenario name or --all"), code=2)
    failed = False
    for n in names:
        try:
            verdict = scenarios.run_scenario(n, Path(store_dir) / n)
        except DoverError as exc:
            _fail("scenario", exc)
        status = "pass" if verdict.passed else "fail"
        click.echo(json.dumps({"scenario": n, "status": status,
                               "mismatches": verdict.mismatches}))
        failed = failed or not verdict.passed
    sys.exit(1 if failed else 0)


@scenario.command("list")
def scenario_list():
    click.echo(json.dumps(scenarios.list_scenarios()))


@main.command()
@click.option("--bind", default="127.0.0.1:8765", show_default=True)
@click.option("--workers", default=2, show_default=True)
@click.option("--runs", default=3, show_default=True)
@click.option("--max-replans", default=3, show_default=True)
@click.option("--max-steps", default=30, show_default=True)
@store_option
@script_option
def serve(bind, workers, runs, max_replans, max_steps, store_dir, script):
    """Serve the HTTP API backing the console."""
    import uvicorn

    from .api import create_app

    host, _, port = bind.partition(":")
    app = create_app(
        SessionStore(store_dir),
        _provider(script),
        _run_config(max_replans, max_steps, runs),
        workers=workers,
    )
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8765))


if __name__ == "__main__":
    main()
