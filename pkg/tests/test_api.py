import time

import pytest
from fastapi.testclient import TestClient

from dover import scenarios
from dover.api import create_app
from dover.runtime import RunConfig, Runtime, default_tool_registry
from dover.trace import PLAN_MARKER, SessionStore, import_external_log

SCENARIO = scenarios.get_scenario("flip-recoverable")
GOOD_EDIT = "@worker: search the web for 'capital of Freedonia' and report back"


def wait_for_job(client, job_id, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] in ("done", "failed"):
            return job
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} never finished")


@pytest.fixture
def client(tmp_path):
    store = SessionStore(tmp_path / "store")
    tools = default_tool_registry(dict(SCENARIO.web_pages))
    runtime = Runtime(store, SCENARIO.provider(), scenarios.AGENT_SPECS,
                      RunConfig(), tools)
    runtime.run_task(SCENARIO.task, "base")

    imported = import_external_log(
        (
            '{"id": "imp", "question": "q", "history": '
            '[{"agent": "o", "message": "' + PLAN_MARKER + '"}]}'
        ).encode(),
        "ww_json",
    )
    store.put_session(imported)

    app = create_app(
        store, SCENARIO.provider(), RunConfig(),
        tools=default_tool_registry(dict(SCENARIO.web_pages)),
    )
    return TestClient(app)


def create_intervention(client, body=None, headers=None):
    payload = {
        "target_step": 1,
        "category": "ModifiedInstruction",
        "replacement_text": GOOD_EDIT,
    }
    payload.update(body or {})
    return client.post("/sessions/base/interventions", json=payload,
                       headers=headers or {})


class TestSessions:
    def test_list_sessions(self, client):
        sessions = client.get("/sessions").json()
        by_id = {s["session_id"]: s for s in sessions}
        assert by_id["base"]["provenance"] == "native"
        assert by_id["imp"]["provenance"] == "imported"

    def test_session_detail_includes_digest(self, client):
        detail = client.get("/sessions/base").json()
        assert detail["steps"] == 5
        assert len(detail["digest"]) == 16

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/ghost").status_code == 404
        assert client.get("/sessions/ghost/steps").status_code == 404

    def test_steps_and_trials(self, client):
        steps = client.get("/sessions/base/steps").json()
        assert [s["index"] for s in steps] == list(range(5))
        trials = client.get("/sessions/base/trials").json()
        assert len(trials) == 1
        assert trials[0]["start_step"] == 0

    def test_hypotheses(self, client):
        hypotheses = client.get("/sessions/base/hypotheses").json()
        assert hypotheses[0]["failure_step"] == 1

    def test_new_session_runs_as_a_job(self, client):
        response = client.post("/sessions", json={
            "description": SCENARIO.task.description,
            "ground_truth_answer": "Fredville",
            "session_id": "fresh",
        })
        assert response.status_code == 202
        job = wait_for_job(client, response.json()["job_id"])
        assert job["status"] == "done", job
        assert client.get("/sessions/fresh").json()["steps"] > 0

    def test_duplicate_session_id_conflicts(self, client):
        response = client.post("/sessions", json={
            "description": "x", "session_id": "base",
        })
        assert response.status_code == 409


class TestInterventionValidation:
    def test_create_returns_201(self, client):
        response = create_intervention(client)
        assert response.status_code == 201
        assert response.json()["intervention"]["target_step"] == 1

    def test_out_of_range_step_is_422(self, client):
        assert create_intervention(
            client, {"target_step": 99}
        ).status_code == 422

    def test_bad_category_is_422(self, client):
        assert create_intervention(
            client, {"category": "Telepathy"}
        ).status_code == 422

    def test_blank_replacement_is_422(self, client):
        assert create_intervention(
            client, {"replacement_text": "   "}
        ).status_code == 422

    def test_noop_replacement_is_422(self, client):
        original = client.get("/sessions/base/steps").json()[1]
        assert create_intervention(
            client, {"replacement_text": original["message"]["content"]}
        ).status_code == 422

    def test_idempotency_key_repeats_the_response(self, client):
        first = create_intervention(client, headers={"Idempotency-Key": "k"})
        second = create_intervention(client, headers={"Idempotency-Key": "k"})
        assert first.json() == second.json()
        third = create_intervention(client, headers={"Idempotency-Key": "k2"})
        assert third.json()["intervention_id"] != first.json()["intervention_id"]


class TestReplayAndRuns:
    def test_full_replay_cycle(self, client):
        iv_id = create_intervention(client).json()["intervention_id"]
        response = client.post(f"/interventions/{iv_id}/replay", json={})
        assert response.status_code == 202
        job = wait_for_job(client, response.json()["job_id"])
        assert job["status"] == "done", job
        assert len(job["artifact_refs"]) == 3

        runs = client.get(f"/interventions/{iv_id}/runs").json()
        assert len(runs) == 3
        assert all(r["success"] for r in runs)

        report = client.get(f"/runs/{job['artifact_refs'][0]}/report").json()
        assert report["outcome"]["category"] == "Validated"
        assert report["run"]["run_index"] == 1

    def test_replay_on_imported_session_is_409(self, client):
        iv = client.post("/sessions/imp/interventions", json={
            "target_step": 0,
            "category": "PlanUpdate",
            "replacement_text": "try something else",
        })
        assert iv.status_code == 201
        response = client.post(
            f"/interventions/{iv.json()['intervention_id']}/replay", json={}
        )
        assert response.status_code == 409

    def test_unknown_ids_are_404(self, client):
        assert client.post("/interventions/ghost/replay", json={}).status_code == 404
        assert client.get("/interventions/ghost/runs").status_code == 404
        assert client.get("/runs/ghost/report").status_code == 404
        assert client.get("/jobs/ghost").status_code == 404
