"""HTTP service: routes, validation, idempotency, engine equivalence."""

import pytest
from fastapi.testclient import TestClient

from grindbo.plant import default_plant, simulate_run
from grindbo.service import create_app
from grindbo.session import plant_run_seed
from grindbo.store import SessionStore

ANCHOR_TRIAL = {
    "params": {"cutting_speed_mps": 24.3, "feed_rate_mmpm": 11.7},
    "outcome": {
        "first_side_temp_C": 420.0,
        "max_roughness_nm": 190.0,
        "dressing_interval_inserts": 7.5,
        "censored": False,
    },
}


@pytest.fixture
def client(tmp_path):
    store = SessionStore(tmp_path / "sessions")
    app = create_app(store, default_seed=0)
    with TestClient(app) as test_client:
        test_client.store = store
        yield test_client


def create_session(client, **overrides):
    body = {"seed": 5, "session_id": "svc-test"}
    body.update(overrides)
    response = client.post("/sessions", json=body)
    assert response.status_code == 201, response.text
    return response.json()


def feasible_trial(temp=400.0, rough=180.0, interval=6.0, **extra):
    body = {
        "params": {"cutting_speed_mps": 22.0, "feed_rate_mmpm": 16.0},
        "outcome": {
            "first_side_temp_C": temp,
            "max_roughness_nm": rough,
            "dressing_interval_inserts": interval,
        },
    }
    body.update(extra)
    return body


class TestCreateSession:
    def test_returns_id_and_two_proposals(self, client):
        created = create_session(client)
        assert created["session_id"] == "svc-test"
        assert len(created["initial_proposals"]) == 2
        for proposal in created["initial_proposals"]:
            assert proposal["origin"] == "random-init"
            assert 12.0 <= proposal["cutting_speed_mps"] <= 30.0
            assert 10.0 <= proposal["feed_rate_mmpm"] <= 40.0

    def test_validation_failure_is_422(self, client):
        response = client.post("/sessions", json={"epsilon_U": 0.0})
        assert response.status_code == 422
        response = client.post(
            "/sessions",
            json={"constraints": [{"name": "temperature", "limit": 585.0, "p_min": 1.5}]},
        )
        assert response.status_code == 422

    def test_duplicate_id_conflicts(self, client):
        create_session(client)
        response = client.post("/sessions", json={"session_id": "svc-test"})
        assert response.status_code == 409

    def test_snapshot_roundtrip(self, client):
        create_session(client)
        snapshot = client.get("/sessions/svc-test")
        assert snapshot.status_code == 200
        data = snapshot.json()
        assert data["config"]["seed"] == 5
        assert data["trials"] == []
        assert len(data["pending_proposals"]) == 2

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/missing").status_code == 404


class TestPostTrial:
    def test_reference_cost_recorded(self, client):
        create_session(client)
        response = client.post("/sessions/svc-test/trials", json=ANCHOR_TRIAL)
        assert response.status_code == 200, response.text
        body = response.json()
        assert body["trial"]["cost_U"] == pytest.approx(0.781, abs=1e-3)
        snapshot = client.get("/sessions/svc-test").json()
        assert snapshot["trials"][0]["cost_U"] == pytest.approx(0.781, abs=1e-3)

    def test_second_trial_fits_models_and_proposes(self, client):
        create_session(client)
        client.post("/sessions/svc-test/trials", json=feasible_trial())
        response = client.post(
            "/sessions/svc-test/trials", json=feasible_trial(temp=450.0, rough=160.0)
        )
        body = response.json()
        assert body["model_summary"] is not None
        assert set(body["model_summary"]) == {"cost", "temperature", "roughness"}
        assert body["recommendation"] is not None
        assert body["next_proposal"]["origin"] in {"random-init", "acquisition"}
        assert body["convergence"]["converged"] is False

    def test_malformed_outcome_422(self, client):
        create_session(client)
        bad = feasible_trial()
        bad["outcome"]["dressing_interval_inserts"] = -1.0
        assert client.post("/sessions/svc-test/trials", json=bad).status_code == 422

    def test_out_of_domain_needs_manual(self, client):
        create_session(client)
        outside = feasible_trial()
        outside["params"]["cutting_speed_mps"] = 99.0
        response = client.post("/sessions/svc-test/trials", json=outside)
        assert response.status_code == 422
        outside["origin"] = "manual"
        response = client.post("/sessions/svc-test/trials", json=outside)
        assert response.status_code == 200
        assert response.json()["trial"]["out_of_domain"] is True

    def test_trial_cap_conflicts(self, client):
        create_session(client, max_trials=2)
        client.post("/sessions/svc-test/trials", json=feasible_trial())
        client.post("/sessions/svc-test/trials", json=feasible_trial(temp=430.0))
        response = client.post("/sessions/svc-test/trials", json=feasible_trial(temp=460.0))
        assert response.status_code == 409

    def test_idempotent_token_replay(self, client):
        create_session(client)
        body = feasible_trial(trial_token="tok-1")
        first = client.post("/sessions/svc-test/trials", json=body)
        assert first.status_code == 200
        replay = client.post("/sessions/svc-test/trials", json=body)
        assert replay.status_code == 200
        assert replay.json() == first.json()
        # no duplicate trial was recorded
        snapshot = client.get("/sessions/svc-test").json()
        assert len(snapshot["trials"]) == 1
        # same token with a different payload conflicts
        changed = feasible_trial(temp=555.0, trial_token="tok-1")
        assert client.post("/sessions/svc-test/trials", json=changed).status_code == 409


class TestRecommendationRoute:
    def test_fresh_infeasible_session_gives_204(self, client):
        create_session(client)
        client.post(
            "/sessions/svc-test/trials", json=feasible_trial(temp=700.0, interval=1.0)
        )
        client.post(
            "/sessions/svc-test/trials",
            json=feasible_trial(temp=720.0, rough=300.0, interval=0.5),
        )
        response = client.get("/sessions/svc-test/recommendation?pT=0.5&pRa=0.5")
        assert response.status_code == 204

    def test_recommendation_with_defaults(self, client):
        create_session(client)
        client.post("/sessions/svc-test/trials", json=feasible_trial())
        client.post(
            "/sessions/svc-test/trials",
            json=feasible_trial(temp=470.0, rough=150.0, interval=5.0),
        )
        response = client.get("/sessions/svc-test/recommendation")
        assert response.status_code == 200
        body = response.json()
        assert body["feasibility"]["temperature"] >= 0.5
        assert body["expected_cost_U"] > 0

    def test_invalid_threshold_422(self, client):
        create_session(client)
        assert (
            client.get("/sessions/svc-test/recommendation?pT=1.5").status_code == 422
        )


class TestSurfacesRoute:
    def test_grid_shape_and_nonnegative_variance(self, client):
        create_session(client)
        client.post("/sessions/svc-test/trials", json=feasible_trial())
        client.post(
            "/sessions/svc-test/trials", json=feasible_trial(temp=470.0, interval=5.0)
        )
        response = client.get("/sessions/svc-test/surfaces?quantity=cost&n=21")
        assert response.status_code == 200
        body = response.json()
        assert body["columns"] == ["cutting_speed_mps", "feed_rate_mmpm", "mean", "variance"]
        assert len(body["rows"]) == 21 * 21
        assert all(row[3] >= 0.0 for row in body["rows"])

    def test_bad_quantity_422(self, client):
        create_session(client)
        assert (
            client.get("/sessions/svc-test/surfaces?quantity=entropy").status_code == 422
        )


class TestExportRoute:
    def test_header_line(self, client):
        create_session(client)
        client.post("/sessions/svc-test/trials", json=ANCHOR_TRIAL)
        response = client.get("/sessions/svc-test/export")
        assert response.status_code == 200
        lines = response.text.strip().split("\n")
        assert lines[0].startswith("index,cutting_speed_mps,feed_rate_mmpm,")
        assert len(lines) == 2


class TestEngineEquivalence:
    def test_http_driven_run_matches_direct_engine(self, client, monkeypatch):
        """Driving the plant loop over HTTP reproduces the direct-engine
        session document, so the service adds no optimization logic."""
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1754006400")
        from grindbo.runner import run_simulated_session
        from grindbo.session import SessionConfig
        from grindbo.store import SessionDocument, document_to_dict

        plant = default_plant()
        config = SessionConfig(seed=2, max_trials=6)
        direct = run_simulated_session(config, plant)
        direct_doc = document_to_dict(
            SessionDocument(session=direct, session_id="equiv")
        )

        created = create_session(client, session_id="equiv", seed=2, max_trials=6)
        proposal = created["initial_proposals"][0]
        for index in range(len(direct.trials)):
            params_wire = {k: proposal[k] for k in ("cutting_speed_mps", "feed_rate_mmpm")}
            from grindbo.store import params_from_wire

            outcome = simulate_run(
                plant, params_from_wire(params_wire), seed=plant_run_seed(2, index)
            )
            response = client.post(
                "/sessions/equiv/trials",
                json={
                    "params": params_wire,
                    "outcome": {
                        "first_side_temp_C": outcome.first_side_temperature,
                        "max_roughness_nm": outcome.max_roughness,
                        "dressing_interval_inserts": outcome.dressing_interval,
                        "censored": outcome.censored,
                    },
                },
            )
            assert response.status_code == 200, response.text
            proposal = response.json()["next_proposal"]
            if proposal is None:
                break

        http_doc = client.get("/sessions/equiv").json()
        for volatile in ("created_at_utc", "updated_at_utc"):
            assert http_doc[volatile] == direct_doc[volatile]
        assert http_doc == direct_doc
