"""
Shared fixtures for the PAARS test suites
"""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from config import load_settings
from main import create_app
from paars_engine.client.token import Token
from paars_engine.environment import build_grid

# one token shared by two co-located users
TABLE_TOKEN_HEX = "ff56182345fa6bf7" + "00" * 24
TABLE_RAND_PEER = 18728712789
TABLE_RAND_REPORTER = 74826390017

TEST_SEED = "a5" * 32


@pytest.fixture
def table_token():
    return Token.from_hex(TABLE_TOKEN_HEX)


@pytest.fixture
def grid():
    return build_grid((0.0, 0.0), 1.0, 3, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def make_settings(tmp_path):
    """Settings with a temporary store file and a known set of verification codes"""
    def factory(**overrides):
        values = {
            "STORE_PATH": str(tmp_path / "contacts.ndjson"),
            "REGISTRY_CODES": "code-1,code-2,code-3",
            "SYSTEM_SEED": TEST_SEED,
            "LOG_FILE": str(tmp_path / "paars.log"),
        }
        values.update(overrides)
        return load_settings(None, **values)
    return factory


@pytest.fixture
def test_settings(make_settings):
    return make_settings()


@pytest.fixture
def client(test_settings):
    app = create_app(test_settings, np.random.default_rng(7))
    with TestClient(app) as c:
        yield c


@pytest.fixture
def service(client):
    return client.app.state.service
