import pytest
from fastapi.testclient import TestClient

from conftest import make_full_script
from counselkit.clock import ManualClock
from counselkit.config import EngineConfig
from counselkit.gateway import ScriptedProvider
from counselkit.orchestrator import Engine
from counselkit.service import create_app
from counselkit.storage import Store

ADMIN_TOKEN = "admin-secret"


@pytest.fixture
def app_client(tmp_path):
    engine = Engine(
        store=Store(tmp_path / "store"),
        provider=ScriptedProvider(make_full_script()),
        config=EngineConfig(),
        clock=ManualClock(),
    )
    app = create_app(engine, admin_token=ADMIN_TOKEN)
    return TestClient(app)


def register(client, name="Ada"):
    response = client.post("/clients", json={"display_name": name})
    assert response.status_code == 200
    body = response.json()
    return body["client_id"], {"Authorization": f"Bearer {body['token']}"}


def open_session(client, headers, mode="ca_plus"):
    response = client.post("/sessions", json={"mode": mode, "persona_id": "ellis"}, headers=headers)
    assert response.status_code == 200
    return response.json()


class TestLifecycle:
    def test_healthz(self, app_client):
        response = app_client.get("/healthz")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_personas_listed(self, app_client):
        body = app_client.get("/personas").json()
        assert body["personas"][0]["persona_id"] == "ellis"
        assert body["personas"][0]["approach"] == "REBT"

    def test_full_round_trip(self, app_client):
        _, headers = register(app_client)
        session = open_session(app_client, headers)
        assert session["status"] == "open"
        assert session["opening_message"]
        assert session["recap"] is False

        response = app_client.post(
            f"/sessions/{session['session_id']}/messages",
            json={"text": "work is heavy"}, headers=headers)
        assert response.status_code == 200
        turn = response.json()
        assert turn["agent_text"]
        assert turn["action_executed"]["technique"] == "clarifying question"
        assert turn["degraded"] is False

        transcript = app_client.get(
            f"/sessions/{session['session_id']}/transcript", headers=headers).json()
        roles = [m["role"] for m in transcript["messages"]]
        assert roles == ["agent", "client", "agent"]

        close = app_client.post(
            f"/sessions/{session['session_id']}/close", json={}, headers=headers)
        assert close.status_code == 200
        assert close.json()["status"] == "ended"

    def test_open_session_twice_conflicts(self, app_client):
        _, headers = register(app_client)
        open_session(app_client, headers)
        response = app_client.post("/sessions", json={"mode": "ca_plus", "persona_id": "ellis"},
                                   headers=headers)
        assert response.status_code == 409
        assert response.json()["code"] == "conflict"

    def test_second_session_sets_recap_flag(self, app_client):
        _, headers = register(app_client)
        first = open_session(app_client, headers)
        app_client.post(f"/sessions/{first['session_id']}/messages",
                        json={"text": "work stress"}, headers=headers)
        app_client.post(f"/sessions/{first['session_id']}/close", json={}, headers=headers)
        second = open_session(app_client, headers)
        assert second["recap"] is True

    def test_baseline_turn_has_null_plan_fields(self, app_client):
        _, headers = register(app_client)
        session = open_session(app_client, headers, mode="baseline")
        turn = app_client.post(f"/sessions/{session['session_id']}/messages",
                               json={"text": "hello"}, headers=headers).json()
        assert turn["action_executed"] is None
        assert turn["assessment"] is None
        assert turn["revisions"] == []
        assert turn["knowledge_used"] is None

    def test_metrics_endpoint_a_a_b_b(self, app_client):
        _, headers = register(app_client)
        session = open_session(app_client, headers)
        app_client.post(f"/sessions/{session['session_id']}/messages",
                        json={"text": "a a b b"}, headers=headers)
        metrics = app_client.get(f"/sessions/{session['session_id']}/metrics",
                                 headers=headers).json()
        assert metrics["rounds"] == 1
        assert metrics["informativeness"] == pytest.approx(4.0)

    def test_profile_endpoint_includes_versions(self, app_client):
        client_id, headers = register(app_client)
        session = open_session(app_client, headers)
        app_client.post(f"/sessions/{session['session_id']}/messages",
                        json={"text": "hello"}, headers=headers)
        body = app_client.get(f"/clients/{client_id}/profile", headers=headers).json()
        assert body["profile"]["version"] == 1
        assert body["record"]["version"] == 1
        assert "preferences" in body


class TestAuth:
    def test_missing_token_reads_as_not_found(self, app_client):
        response = app_client.post("/sessions", json={"mode": "ca_plus", "persona_id": "ellis"})
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"

    def test_foreign_token_cannot_see_session(self, app_client):
        _, headers_a = register(app_client, "Ada")
        _, headers_b = register(app_client, "Bea")
        session = open_session(app_client, headers_a)
        response = app_client.get(f"/sessions/{session['session_id']}/transcript",
                                  headers=headers_b)
        assert response.status_code == 404

    def test_foreign_profile_read_denied_without_existence_leak(self, app_client):
        client_a, _ = register(app_client, "Ada")
        _, headers_b = register(app_client, "Bea")
        response = app_client.get(f"/clients/{client_a}/profile", headers=headers_b)
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"

    def test_unknown_session_not_found(self, app_client):
        _, headers = register(app_client)
        response = app_client.post("/sessions/ghost/messages", json={"text": "x"},
                                   headers=headers)
        assert response.status_code == 404

    def test_validation_errors_carry_api_error_shape(self, app_client):
        response = app_client.post("/clients", json={})
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "bad_request"
        assert "message" in body


class TestAdminIngest:
    def pack_text(self):
        import json

        from counselkit.knowledge import KnowledgePack
        from test_knowledge import entry

        pack = KnowledgePack(entries=(entry("k1"), entry("k2", keywords=("work",))))
        lines = [json.dumps({"format_version": 1, "entry_count": 2})]
        lines.extend(json.dumps(e.to_dict()) for e in pack.entries)
        return "\n".join(lines)

    def test_upload_requires_admin_token(self, app_client):
        response = app_client.post("/admin/knowledge/ingest", content=self.pack_text())
        assert response.status_code == 404

    def test_upload_installs_pack(self, app_client):
        response = app_client.post(
            "/admin/knowledge/ingest", content=self.pack_text(),
            headers={"Authorization": f"Bearer {ADMIN_TOKEN}"})
        assert response.status_code == 200
        assert response.json() == {"entry_count": 2, "dropped_count": 0}

    def test_invalid_entries_counted_as_dropped(self, app_client):
        text = self.pack_text() + '\n{"not": "an entry"}'
        response = app_client.post(
            "/admin/knowledge/ingest", content=text,
            headers={"Authorization": f"Bearer {ADMIN_TOKEN}"})
        assert response.json()["dropped_count"] == 1


class TestStatelessness:
    def test_responses_identical_with_app_recreated_between_calls(self, tmp_path):
        clock = ManualClock()

        def fresh_client():
            engine = Engine(
                store=Store(tmp_path / "store"),
                provider=ScriptedProvider(make_full_script()),
                config=EngineConfig(),
                clock=clock,
            )
            return TestClient(create_app(engine, admin_token=ADMIN_TOKEN))

        # Continuous run.
        continuous = fresh_client()
        response = continuous.post("/clients", json={"display_name": "Ada"})
        token = response.json()["token"]
        headers = {"Authorization": f"Bearer {token}"}
        session = continuous.post("/sessions", json={"mode": "ca_plus", "persona_id": "ellis"},
                                  headers=headers).json()
        continuous_responses = []
        for text in ("one", "two", "three"):
            clock.advance(60)
            continuous_responses.append(continuous.post(
                f"/sessions/{session['session_id']}/messages",
                json={"text": text}, headers=headers).json())
        continuous_transcript = continuous.get(
            f"/sessions/{session['session_id']}/transcript", headers=headers).json()

        # Same sequence against a second store, recreating the app before
        # every call so every response is served from restored state.
        clock2 = ManualClock()

        def fresh_client2():
            engine = Engine(
                store=Store(tmp_path / "store2"),
                provider=ScriptedProvider(make_full_script()),
                config=EngineConfig(),
                clock=clock2,
            )
            return TestClient(create_app(engine, admin_token=ADMIN_TOKEN))

        client2 = fresh_client2()
        response = client2.post("/clients", json={"display_name": "Ada"})
        token2 = response.json()["token"]
        headers2 = {"Authorization": f"Bearer {token2}"}
        session2 = client2.post("/sessions", json={"mode": "ca_plus", "persona_id": "ellis"},
                                headers=headers2).json()
        restored_responses = []
        for text in ("one", "two", "three"):
            clock2.advance(60)
            client2 = fresh_client2()
            restored_responses.append(client2.post(
                f"/sessions/{session2['session_id']}/messages",
                json={"text": text}, headers=headers2).json())
        client2 = fresh_client2()
        restored_transcript = client2.get(
            f"/sessions/{session2['session_id']}/transcript", headers=headers2).json()

        assert restored_responses == continuous_responses
        assert [m["text"] for m in restored_transcript["messages"]] == \
            [m["text"] for m in continuous_transcript["messages"]]
