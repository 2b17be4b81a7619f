"""
Endpoint tests for the PAARS service, driven through FastAPI's TestClient
"""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import TABLE_RAND_PEER, TABLE_RAND_REPORTER, TABLE_TOKEN_HEX
from main import create_app, main
from paars_engine.client.token import Token
from paars_engine.psi import PsiSession, decode_element, encode_element

OTHER_TOKEN_HEX = "ab" * 32
ERROR_KEYS = {"error", "error_code", "details", "timestamp", "type"}


def upload(client, token=TABLE_TOKEN_HEX, rand=TABLE_RAND_PEER, epoch=100, ap_id=0):
    return client.post("/v1/records", json={"token": token, "rand": str(rand), "epoch": epoch, "ap_id": ap_id})


def diagnose(client, code="code-1", rand=TABLE_RAND_REPORTER, token=TABLE_TOKEN_HEX, epoch=100):
    return client.post("/v1/diagnosis", json={
        "code": code,
        "onset_epoch": epoch,
        "entries": [{"token": token, "rand": str(rand), "epoch": epoch}],
    })


def psi_lookup(client, tokens):
    session = PsiSession(tokens)
    blinded = [encode_element(y) for y in session.round1()]
    response = client.post("/v1/psi/round1", json=blinded)
    assert response.status_code == 200
    body = response.json()
    return session.finish([decode_element(v) for v in body["client"]], [decode_element(v) for v in body["server"]])


@pytest.fixture
def table_client(client):
    assert upload(client, rand=TABLE_RAND_PEER).status_code == 201
    assert upload(client, rand=TABLE_RAND_REPORTER).status_code == 201
    return client


class TestHealth:

    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "healthy"
        assert data["rows"] == 0
        assert data["current_epoch"] >= 0


class TestRecords:

    def test_upload_created(self, client):
        response = upload(client)
        assert response.status_code == 201
        assert response.json() == {"stored": True, "epoch": 100}

    def test_duplicate_conflict(self, client):
        upload(client)
        response = upload(client)
        assert response.status_code == 409
        assert response.json()["error_code"] == "DUPLICATE_ROW"
        assert set(response.json()) == ERROR_KEYS

    @pytest.mark.parametrize("token, rand", [
        ("ff56", TABLE_RAND_PEER),
        ("FF" * 32, TABLE_RAND_PEER),
        (TABLE_TOKEN_HEX, "-5"),
        (TABLE_TOKEN_HEX, "12ab"),
    ])
    def test_malformed_upload(self, client, token, rand):
        response = client.post("/v1/records", json={"token": token, "rand": str(rand), "epoch": 1})
        assert response.status_code == 400
        assert response.json()["error_code"] == "MALFORMED_REQUEST"

    def test_malformed_body_does_not_echo_values(self, client):
        bogus = "cd" * 31 + "zz"
        response = client.post("/v1/records", json={"token": bogus, "rand": "1", "epoch": 1})
        assert response.status_code == 400
        assert bogus not in response.text

    def test_rand_outside_64_bits(self, client):
        response = upload(client, rand=2 ** 64)
        assert response.status_code == 400


class TestDiagnosis:

    def test_table_workflow(self, table_client, service):
        response = diagnose(table_client)
        assert response.status_code == 200
        assert response.json() == {"updated": 1, "peers_scored": 1}

        token = Token.from_hex(TABLE_TOKEN_HEX)
        reporter = service.store.get(token, TABLE_RAND_REPORTER, 100)
        peer = service.store.get(token, TABLE_RAND_PEER, 100)
        assert reporter.status.value == "INFECTED"
        assert peer.status.value in ("SCORED", "NA")

    def test_unknown_code_changes_nothing(self, table_client, service):
        before = service.store.persisted_bytes()
        response = diagnose(table_client, code="forged")
        assert response.status_code == 403
        assert response.json()["error_code"] == "VERIFICATION_FAILED"
        assert service.store.persisted_bytes() == before

    def test_code_is_single_use(self, table_client):
        assert diagnose(table_client).status_code == 200
        assert diagnose(table_client).status_code == 403

    def test_no_matching_rows(self, table_client, service):
        response = diagnose(table_client, token=OTHER_TOKEN_HEX)
        assert response.status_code == 404
        assert service.registry.is_valid("code-1")

    def test_reporter_alone_has_no_peers(self, client):
        upload(client, rand=TABLE_RAND_REPORTER)
        assert diagnose(client).json() == {"updated": 1, "peers_scored": 0}

    def test_empty_entries(self, client):
        response = client.post("/v1/diagnosis", json={"code": "code-1", "onset_epoch": 0, "entries": []})
        assert response.status_code == 400

    def test_diagnosis_rotates_psi_secret(self, table_client, service):
        generation = service.psi.generation
        diagnose(table_client)
        assert service.psi.generation == generation + 1


class TestPsiAndScores:

    def test_empty_server_set(self, table_client):
        assert psi_lookup(table_client, [Token.from_hex(TABLE_TOKEN_HEX)]) == []

    def test_peer_finds_and_scores_its_contact(self, table_client):
        diagnose(table_client)
        token = Token.from_hex(TABLE_TOKEN_HEX)
        matches = psi_lookup(table_client, [Token.from_hex(OTHER_TOKEN_HEX), token])
        assert matches == [(1, token)]

        response = table_client.post("/v1/scores", json=[{"token": TABLE_TOKEN_HEX, "rand": str(TABLE_RAND_PEER)}])
        assert response.status_code == 200
        [score] = response.json()
        assert score["rand"] == str(TABLE_RAND_PEER)
        assert 0.0 <= score["p"] <= 1.0

    def test_reporter_row_scores_one(self, table_client):
        diagnose(table_client)
        response = table_client.post("/v1/scores", json=[{"token": TABLE_TOKEN_HEX, "rand": str(TABLE_RAND_REPORTER)}])
        assert response.json()[0]["p"] == 1.0

    def test_wrong_rand_is_not_found(self, table_client):
        diagnose(table_client)
        response = table_client.post("/v1/scores", json=[{"token": TABLE_TOKEN_HEX, "rand": "1"}])
        assert response.status_code == 404
        assert response.json()["error_code"] == "UNKNOWN_PAIR"

    def test_empty_psi_request(self, client):
        assert client.post("/v1/psi/round1", json=[]).status_code == 400

    def test_non_group_element(self, client):
        response = client.post("/v1/psi/round1", json=["AAAA"])
        assert response.status_code == 400
        assert response.json()["error_code"] == "DATA_VALIDATION_ERROR"


class TestOccupancy:

    def test_window(self, client):
        for rand in range(3):
            upload(client, token=f"{rand:064x}", rand=rand, epoch=7, ap_id=rand % 2)
        response = client.get("/v1/occupancy", params={"from": 7, "to": 7})
        assert response.status_code == 200
        data = response.json()
        assert data["from"] == 7
        assert data["total"] == 3
        assert data["per_ap"] == {"0": 2, "1": 1}
        assert data["alert"] is False

    def test_alert(self, make_settings):
        cfg = make_settings(OCCUPANCY_THRESHOLD=2)
        with TestClient(create_app(cfg, np.random.default_rng(0))) as c:
            for rand in range(3):
                upload(c, token=f"{rand:064x}", rand=rand, epoch=1)
            data = c.get("/v1/occupancy", params={"from": 0, "to": 5}).json()
        assert data["alert"] is True
        assert data["threshold"] == 2

    def test_reversed_window(self, client):
        response = client.get("/v1/occupancy", params={"from": 5, "to": 4})
        assert response.status_code == 400

    def test_current(self, client):
        response = client.get("/v1/occupancy/current")
        assert response.status_code == 200
        assert response.json()["total"] == 0


class TestPrivacy:

    def test_accounting(self, client):
        data = client.get("/v1/privacy", params={"n": 4}).json()
        assert data["alpha"] == pytest.approx(0.1)
        assert data["epsilon_per_event"] == pytest.approx(40.0)
        assert data["expected_error"] == pytest.approx(0.00125)
        assert data["measured_variance"] == pytest.approx(2 * 0.01 / 64, rel=0.15)

    def test_noise_disabled(self, make_settings):
        with TestClient(create_app(make_settings(EPI_ALPHA=0.0))) as c:
            data = c.get("/v1/privacy").json()
        assert data["epsilon_per_event"] is None
        assert data["expected_error"] is None


class TestPersistenceAcrossRestart:

    def test_rows_survive_restart(self, make_settings):
        cfg = make_settings()
        with TestClient(create_app(cfg)) as c:
            upload(c)
        with TestClient(create_app(cfg)) as c:
            assert c.get("/health").json()["rows"] == 1
            assert upload(c).status_code == 409


class TestEntryPoint:

    def test_bad_seed_exits_2(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("system.seed = nothex\n")
        assert main(["--config", str(path)]) == 2

    def test_oversized_cell_exits_2(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text(f"grid.cell_size_m = 3.0\nlog.file = {tmp_path / 'paars.log'}\nstore.path =\n")
        assert main(["--config", str(path)]) == 2

    def test_unknown_key_exits_2(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("no.such.key = 1\n")
        assert main(["--config", str(path)]) == 2

    def test_bad_environment_seed_exits_2(self, monkeypatch):
        monkeypatch.setenv("PAARS_SYSTEM_SEED", "")
        assert main([]) == 2
