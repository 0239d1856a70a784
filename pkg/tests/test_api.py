import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from conftest import FIXTURES_DIR
from ontoforge.api import create_app
from ontoforge.service import ServiceConfig, SessionService

TK = (FIXTURES_DIR / "tk.txt").read_text(encoding="utf-8")
TC = (FIXTURES_DIR / "tc.txt").read_text(encoding="utf-8")


@pytest.fixture()
def service(tmp_path):
    config = ServiceConfig(backend="replay", fixture=str(FIXTURES_DIR / "fixture.json"),
                           data_dir=str(tmp_path / "data"))
    return SessionService(config)


@pytest.fixture()
def client(service):
    with TestClient(create_app(service)) as c:
        yield c


def accept(client, sid):
    body = {"kind": "decision", "text": json.dumps({"kind": "accept"})}
    r = client.post(f"/sessions/{sid}/message", json=body)
    assert r.status_code == 200, r.text
    return r.json()


class TestSessions:
    def test_create_returns_201_snapshot(self, client):
        r = client.post("/sessions")
        assert r.status_code == 201
        assert r.json()["stage"] == "AwaitTargetedKnowledge"

    def test_get_roundtrip(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.get(f"/sessions/{sid}")
        assert r.status_code == 200
        assert r.json()["id"] == sid

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/" + "0" * 32).status_code == 404
        r = client.post("/sessions/" + "0" * 32 + "/advance")
        assert r.status_code == 404
        assert r.json()["error"] == "UnknownSession"


class TestMessageAndAdvance:
    def test_message_flow(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.post(f"/sessions/{sid}/message",
                        json={"kind": "freeText", "text": TK})
        assert r.status_code == 200
        payload = r.json()
        assert payload["session"]["stage"] == "ConceptConfirm"
        assert "*Equipment System*" in payload["reply"]

    def test_bad_kind_400(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.post(f"/sessions/{sid}/message",
                        json={"kind": "telepathy", "text": "hi"})
        assert r.status_code == 400
        assert r.json()["error"] == "BadParams"

    def test_missing_body_fields_400(self, client):
        sid = client.post("/sessions").json()["id"]
        assert client.post(f"/sessions/{sid}/message", json={}).status_code == 400

    def test_decision_at_wrong_stage_409(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.post(f"/sessions/{sid}/message",
                        json={"kind": "decision", "text": json.dumps({"kind": "accept"})})
        assert r.status_code == 409
        assert r.json()["error"] == "StageError"

    def test_advance_not_ready_409(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.post(f"/sessions/{sid}/advance")
        assert r.status_code == 409
        assert r.json()["error"] == "NotReady"

    def test_bad_edits_422(self, client):
        sid = client.post("/sessions").json()["id"]
        client.post(f"/sessions/{sid}/message", json={"kind": "freeText", "text": TK})
        dup = [{"name": "Machine", "examples": ["A", "B"]},
               {"name": "machine", "examples": ["C", "D"]}]
        r = client.post(
            f"/sessions/{sid}/message",
            json={"kind": "decision",
                  "text": json.dumps({"kind": "acceptWithEdits", "edits": dup})})
        assert r.status_code == 422
        assert r.json()["error"] == "EditValidationFailed"

    def test_fixture_miss_500(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.post(f"/sessions/{sid}/message",
                        json={"kind": "freeText", "text": "Completely different input."})
        assert r.status_code == 500
        assert r.json()["error"] == "FixtureMiss"


class TestEventsRoute:
    def test_events_returned_immediately(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.get(f"/sessions/{sid}/events", params={"after": 0, "timeout": 0})
        assert r.status_code == 200
        events = r.json()["events"]
        assert events[0]["kind"] == "sessionCreated"

    def test_negative_timeout_clamped(self, client):
        sid = client.post("/sessions").json()["id"]
        start = time.monotonic()
        r = client.get(f"/sessions/{sid}/events", params={"after": 5, "timeout": -3})
        assert r.json()["events"] == []
        assert time.monotonic() - start < 1.0

    def test_long_poll_wakes(self, client, service):
        sid = client.post("/sessions").json()["id"]

        def later():
            time.sleep(0.05)
            service.handle_message(sid, "freeText", TK)

        t = threading.Thread(target=later)
        t.start()
        r = client.get(f"/sessions/{sid}/events", params={"after": 1, "timeout": 5})
        t.join()
        assert r.json()["events"], "poll should wake when the message lands"


class TestArtifactsRoute:
    def drive_to_complete(self, client):
        sid = client.post("/sessions").json()["id"]
        client.post(f"/sessions/{sid}/message", json={"kind": "freeText", "text": TK})
        accept(client, sid)
        assert client.post(f"/sessions/{sid}/advance").status_code == 200
        accept(client, sid)
        assert client.post(f"/sessions/{sid}/advance").status_code == 200
        accept(client, sid)
        client.post(f"/sessions/{sid}/message", json={"kind": "freeText", "text": TC})
        while True:
            snap = client.post(f"/sessions/{sid}/advance").json()
            if snap["stage"] == "Complete":
                return sid

    def test_not_available_before_complete_409(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.get(f"/sessions/{sid}/artifacts/ontology")
        assert r.status_code == 409
        assert r.json()["error"] == "NotAvailable"

    def test_unknown_artifact_409(self, client):
        sid = client.post("/sessions").json()["id"]
        assert client.get(f"/sessions/{sid}/artifacts/hologram").status_code == 409

    def test_artifacts_match_bundled_goldens(self, client):
        sid = self.drive_to_complete(client)
        ontology = client.get(f"/sessions/{sid}/artifacts/ontology")
        kg = client.get(f"/sessions/{sid}/artifacts/kg")
        cypher = client.get(f"/sessions/{sid}/artifacts/cypher")
        assert ontology.headers["content-type"].startswith("application/json")
        assert kg.headers["content-type"].startswith("application/json")
        assert cypher.headers["content-type"].startswith("text/plain")
        assert ontology.content == (FIXTURES_DIR / "ontology.golden.json").read_bytes()
        assert kg.content == (FIXTURES_DIR / "kg.golden.json").read_bytes()
        assert cypher.content == (FIXTURES_DIR / "kg.golden.cypher").read_bytes()

    def test_push_db_requires_endpoint(self, client):
        sid = client.post("/sessions").json()["id"]
        r = client.post(f"/sessions/{sid}/push-db", json={})
        assert r.status_code == 400

    def test_push_db_roundtrip(self, client, stub_server):
        sid = self.drive_to_complete(client)
        r = client.post(f"/sessions/{sid}/push-db",
                        json={"endpoint": stub_server.url,
                              "username": "neo4j", "password": "pw"})
        assert r.status_code == 200
        assert r.json()["ok"] is True
        assert stub_server.requests[0]["path"] == "/db/neo4j/tx/commit"


class TestStaticMount:
    def test_static_dir_served(self, service, tmp_path):
        static = tmp_path / "dist"
        static.mkdir()
        (static / "index.html").write_text("<!doctype html><p>ui</p>", encoding="utf-8")
        with TestClient(create_app(service, static_dir=static)) as c:
            r = c.get("/")
            assert r.status_code == 200
            assert "ui" in r.text
            # API routes still win over the static mount
            assert c.post("/sessions").status_code == 201

    def test_missing_static_dir_ignored(self, service, tmp_path):
        with TestClient(create_app(service, static_dir=tmp_path / "nope")) as c:
            assert c.post("/sessions").status_code == 201
