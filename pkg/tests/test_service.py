import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from screenprio.service import create_app

from conftest import random_session_data


@pytest.fixture
def session_env(tmp_path):
    datasets, qrels, relevant = random_session_data(np.random.default_rng(42), 12, 4)
    journal_dir = tmp_path / "journals"
    app = create_app(datasets, journal_dir)
    with TestClient(app) as client:
        yield {
            "client": client,
            "datasets": datasets,
            "qrels": qrels,
            "journal_dir": journal_dir,
        }


def create_session(client, k=5, **overrides):
    body = {
        "topic_id": "T1",
        "strategy": "dense_rocchio",
        "weights": {"alpha": 1.0, "beta": 1.0, "gamma": 1.0},
        "k": k,
    }
    body.update(overrides)
    return client.post("/api/sessions", json=body)


def judge_all(batch, relevant=True):
    return [{"doc_id": d["doc_id"], "relevant": relevant} for d in batch]


class TestHealthAndCatalog:
    def test_health(self, session_env):
        r = session_env["client"].get("/api/health")
        assert r.status_code == 200

    def test_topics(self, session_env):
        r = session_env["client"].get("/api/topics")
        assert r.status_code == 200
        assert r.json() == [{"topic_id": "T1", "title_query": "test topic", "pool_size": 12}]

    def test_document(self, session_env):
        r = session_env["client"].get("/api/documents/D0000")
        assert r.status_code == 200
        assert r.json()["doc_id"] == "D0000"

    def test_document_not_found(self, session_env):
        assert session_env["client"].get("/api/documents/NOPE").status_code == 404


class TestCreateSession:
    def test_batch_size_and_fields(self, session_env):
        r = create_session(session_env["client"], k=5)
        assert r.status_code == 201
        payload = r.json()
        assert len(payload["batch"]) == 5
        assert payload["batch_token"]
        doc = payload["batch"][0]
        assert {"doc_id", "title", "abstract", "score"} <= set(doc)
        assert payload["progress"]["total"] == 12

    def test_k_clamped_to_pool(self, session_env):
        r = create_session(session_env["client"], k=100)
        assert r.status_code == 201
        assert len(r.json()["batch"]) == 12

    def test_invalid_k(self, session_env):
        assert create_session(session_env["client"], k=0).status_code == 400

    def test_unknown_topic(self, session_env):
        r = create_session(session_env["client"], topic_id="NOPE")
        assert r.status_code == 404


class TestJudgments:
    def test_full_flow_to_completion(self, session_env):
        client = session_env["client"]
        created = create_session(client, k=5).json()
        sid, token, batch = created["session_id"], created["batch_token"], created["batch"]
        iterations = 0
        while True:
            r = client.post(
                f"/api/sessions/{sid}/judgments",
                json={"batch_token": token, "judgments": judge_all(batch)},
            )
            assert r.status_code == 200, r.text
            payload = r.json()
            iterations += 1
            if payload["finished"]:
                assert payload["batch_token"] is None
                break
            token, batch = payload["batch_token"], payload["batch"]
        assert iterations == 3  # ceil(12/5)
        summary = client.get(f"/api/sessions/{sid}").json()
        assert summary["finished"] and summary["screened"] == 12

    def test_stale_token_conflict(self, session_env):
        client = session_env["client"]
        created = create_session(client, k=5).json()
        sid, token, batch = created["session_id"], created["batch_token"], created["batch"]
        body = {"batch_token": token, "judgments": judge_all(batch)}
        assert client.post(f"/api/sessions/{sid}/judgments", json=body).status_code == 200
        r = client.post(f"/api/sessions/{sid}/judgments", json=body)
        assert r.status_code == 409
        assert r.json()["error"] == "conflict"

    def test_incomplete_judgments_rejected(self, session_env):
        client = session_env["client"]
        created = create_session(client, k=5).json()
        sid, token, batch = created["session_id"], created["batch_token"], created["batch"]
        r = client.post(
            f"/api/sessions/{sid}/judgments",
            json={"batch_token": token, "judgments": judge_all(batch[:-1])},
        )
        assert r.status_code == 400
        assert r.json()["error"] == "invalid-input"

    def test_finished_session_gone(self, session_env):
        client = session_env["client"]
        created = create_session(client, k=12).json()
        sid, token, batch = created["session_id"], created["batch_token"], created["batch"]
        body = {"batch_token": token, "judgments": judge_all(batch)}
        assert client.post(f"/api/sessions/{sid}/judgments", json=body).status_code == 200
        r = client.post(f"/api/sessions/{sid}/judgments", json=body)
        assert r.status_code == 410

    def test_unknown_session(self, session_env):
        r = session_env["client"].post(
            "/api/sessions/nope/judgments", json={"batch_token": "x", "judgments": []}
        )
        assert r.status_code == 404

    def test_get_session_snapshot(self, session_env):
        client = session_env["client"]
        created = create_session(client, k=5).json()
        sid = created["session_id"]
        summary = client.get(f"/api/sessions/{sid}").json()
        assert summary["iteration"] == 0
        assert summary["outstanding_batch"] == [d["doc_id"] for d in created["batch"]]


class TestJournalRecovery:
    def test_replay_restores_state(self, tmp_path):
        datasets, _qrels, _rel = random_session_data(np.random.default_rng(5), 10, 4)
        journal_dir = tmp_path / "j"
        app = create_app(datasets, journal_dir)
        with TestClient(app) as client:
            created = create_session(client, k=4).json()
            sid, token, batch = created["session_id"], created["batch_token"], created["batch"]
            r = client.post(
                f"/api/sessions/{sid}/judgments",
                json={"batch_token": token, "judgments": judge_all(batch)},
            )
            next_token = r.json()["batch_token"]
            before = client.get(f"/api/sessions/{sid}").json()

        # simulate a crash: brand-new app over the same journal dir
        app2 = create_app(datasets, journal_dir)
        with TestClient(app2) as client2:
            after = client2.get(f"/api/sessions/{sid}").json()
            assert after == before
            # the outstanding batch is still judgeable
            batch2 = after["outstanding_batch"]
            r = client2.post(
                f"/api/sessions/{sid}/judgments",
                json={
                    "batch_token": next_token,
                    "judgments": [{"doc_id": d, "relevant": False} for d in batch2],
                },
            )
            assert r.status_code == 200

    def test_corrupt_journal_quarantined(self, tmp_path):
        datasets, _qrels, _rel = random_session_data(np.random.default_rng(6), 8, 4)
        journal_dir = tmp_path / "j"
        app = create_app(datasets, journal_dir)
        with TestClient(app) as client:
            good = create_session(client, k=4).json()["session_id"]
            bad = create_session(client, k=4).json()["session_id"]
        bad_path = journal_dir / f"{bad}.journal"
        data = bad_path.read_text()
        bad_path.write_text(data[: len(data) // 2])  # truncate mid-entry

        app2 = create_app(datasets, journal_dir)
        registry = app2.state.registry
        assert good in registry.sessions
        assert bad in registry.quarantined
        assert bad not in registry.sessions

    def test_empty_journal_dir(self, tmp_path):
        datasets, _qrels, _rel = random_session_data(np.random.default_rng(7), 8, 4)
        app = create_app(datasets, tmp_path / "empty")
        assert app.state.registry.sessions == {}


class TestConcurrentSubmit:
    def test_exactly_one_winner(self, session_env):
        client = session_env["client"]
        created = create_session(client, k=5).json()
        sid, token, batch = created["session_id"], created["batch_token"], created["batch"]
        body = {"batch_token": token, "judgments": judge_all(batch)}
        results = []
        barrier = threading.Barrier(4)

        def submit():
            barrier.wait()
            r = client.post(f"/api/sessions/{sid}/judgments", json=body)
            results.append(r.status_code)

        threads = [threading.Thread(target=submit) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results.count(200) == 1
        assert all(code in (200, 409) for code in results)
