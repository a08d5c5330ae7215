"""HTTP service surface: endpoint happy paths and error-code mapping."""

import pytest
from fastapi.testclient import TestClient

from energaize.service.app import create_app


@pytest.fixture()
def client():
    return TestClient(create_app())


@pytest.fixture()
def workspace(client, tmp_path):
    scen = tmp_path / "scenario" / "scenario.json"
    r = client.post(
        "/synthetic",
        json={"seed": 9, "dwellings": 2, "days": 1, "out": str(scen)},
    )
    assert r.status_code == 200
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'scenario = "{scen}"\n'
        f'out = "{tmp_path / "out"}"\n'
        "episodes = 1\n"
        "seed = 11\n"
        "actor_hidden = [8, 8]\n"
        "critic_units = [16, 16]\n"
        "batch_size = 8\n"
    )
    return tmp_path, scen, cfg


class TestHealth:
    def test_health_ok(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["version"]


class TestSynthetic:
    def test_synthetic_reports_fingerprint(self, client, tmp_path):
        out = tmp_path / "s" / "scenario.json"
        r = client.post(
            "/synthetic", json={"seed": 3, "dwellings": 2, "days": 1, "out": str(out)}
        )
        assert r.status_code == 200
        body = r.json()
        assert body["horizon_steps"] == 24
        assert body["dwellings"] == 2
        assert len(body["fingerprint"]) == 64
        assert out.exists()

    def test_rejects_nonpositive_dwellings(self, client, tmp_path):
        r = client.post(
            "/synthetic",
            json={"seed": 3, "dwellings": 0, "days": 1, "out": str(tmp_path / "x.json")},
        )
        assert r.status_code == 422  # schema-level validation


class TestValidate:
    def test_valid_scenario(self, client, workspace):
        _, scen, _ = workspace
        r = client.post("/validate", json={"scenario": str(scen)})
        assert r.status_code == 200
        assert r.json() == {"valid": True, "violations": []}

    def test_missing_descriptor_reported_not_raised(self, client, tmp_path):
        r = client.post("/validate", json={"scenario": str(tmp_path / "nope.json")})
        assert r.status_code == 200
        body = r.json()
        assert body["valid"] is False
        assert body["violations"]


class TestPipeline:
    def test_baseline_train_eval_report(self, client, workspace):
        tmp, _, cfg = workspace
        r = client.post("/baseline", json={"config": str(cfg)})
        assert r.status_code == 200
        assert r.json()["community_import_kwh"] > 0

        r = client.post("/train", json={"config": str(cfg)})
        assert r.status_code == 200
        body = r.json()
        assert body["episodes"] == 1
        assert (tmp / "out" / "train" / "checkpoints" / "manifest.json").exists()

        r = client.post("/eval", json={"config": str(cfg)})
        assert r.status_code == 200
        assert r.json()["mean_departure_shortfall"] >= 0

        r = client.post("/report", json={"config": str(cfg)})
        assert r.status_code == 200
        rows = r.json()["rows"]
        assert any(row["level"] == "rec" for row in rows)
        assert any(row["level"] == "dwelling" for row in rows)

    def test_train_episode_override(self, client, workspace):
        tmp, _, cfg = workspace
        r = client.post("/train", json={"config": str(cfg), "episodes": 0})
        assert r.status_code == 200
        assert r.json()["episodes"] == 0
        assert r.json()["final_mean_reward"] is None


class TestErrorMapping:
    def test_bad_config_path_is_400(self, client):
        r = client.post("/baseline", json={"config": "/nonexistent/run.toml"})
        assert r.status_code == 400

    def test_eval_before_train_is_400(self, client, workspace):
        _, _, cfg = workspace
        r = client.post("/eval", json={"config": str(cfg)})
        assert r.status_code == 400

    def test_checkpoint_scenario_mismatch_is_409(self, client, workspace, tmp_path):
        tmp, _, cfg = workspace
        assert client.post("/train", json={"config": str(cfg)}).status_code == 200

        other = tmp_path / "other"
        scen2 = other / "scenario" / "scenario.json"
        r = client.post(
            "/synthetic", json={"seed": 10, "dwellings": 2, "days": 1, "out": str(scen2)}
        )
        assert r.status_code == 200
        cfg2 = other / "run.toml"
        cfg2.write_text(
            f'scenario = "{scen2}"\n'
            f'out = "{other / "out"}"\n'
            "episodes = 1\n"
            "actor_hidden = [8, 8]\n"
            "critic_units = [16, 16]\n"
            "batch_size = 8\n"
        )
        r = client.post(
            "/eval",
            json={
                "config": str(cfg2),
                "checkpoints": str(tmp / "out" / "train" / "checkpoints"),
            },
        )
        assert r.status_code == 409

    def test_report_without_traces_is_400(self, client, workspace):
        _, _, cfg = workspace
        r = client.post("/report", json={"config": str(cfg)})
        assert r.status_code == 400
