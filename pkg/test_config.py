"""
Tests for settings loading from defaults, overrides and the flat config file
"""

import pytest

from config import Settings, get_settings, load_settings, parse_config_file
from paars_engine.exceptions import ConfigError


def test_defaults():
    cfg = load_settings(None)
    assert cfg.GRID_CELL_SIZE_M == 2.0
    assert cfg.EPOCH_TAU_SECONDS == 15
    assert cfg.EPI_ALPHA == 0.1
    assert cfg.OCCUPANCY_THRESHOLD == 50
    assert len(cfg.seed_bytes) == 32


def test_flat_file(tmp_path):
    path = tmp_path / "paars.conf"
    path.write_text(
        "# deployment\n"
        "grid.width = 12\n"
        "grid.cell_size_m = 1.5   # metres\n"
        "epi.alpha = 0\n"
        "registry.codes = a, b ,c\n"
        "\n"
    )
    cfg = load_settings(path)
    assert cfg.GRID_WIDTH == 12
    assert cfg.GRID_CELL_SIZE_M == 1.5
    assert cfg.EPI_ALPHA == 0.0
    assert cfg.registry_code_list == ["a", "b", "c"]


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "paars.conf"
    path.write_text("grid.width = 12\n")
    assert load_settings(path, GRID_WIDTH=7).GRID_WIDTH == 7


def test_unknown_key(tmp_path):
    path = tmp_path / "paars.conf"
    path.write_text("grid.depth = 3\n")
    with pytest.raises(ConfigError) as exc:
        load_settings(path)
    assert exc.value.details["key"] == "GRID_DEPTH"


def test_line_without_value(tmp_path):
    path = tmp_path / "paars.conf"
    path.write_text("grid.width\n")
    with pytest.raises(ConfigError):
        parse_config_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.conf")


@pytest.mark.parametrize("overrides", [
    {"SYSTEM_SEED": "abcd"},
    {"SYSTEM_SEED": "zz" * 32},
    {"EPI_ALPHA": -0.1},
    {"GRID_CELL_SIZE_M": 0},
    {"EPOCH_TAU_SECONDS": 0},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_settings(None, **overrides)


def test_effective_threshold_uses_capacity():
    assert Settings(OCCUPANCY_THRESHOLD=50).effective_occupancy_threshold == 50
    assert Settings(OCCUPANCY_THRESHOLD=50, OCCUPANCY_CAPACITY=40).effective_occupancy_threshold == 20
    assert Settings(OCCUPANCY_THRESHOLD=10, OCCUPANCY_CAPACITY=40).effective_occupancy_threshold == 10


def test_environment_prefix(monkeypatch):
    monkeypatch.setenv("PAARS_GRID_HEIGHT", "9")
    assert load_settings(None).GRID_HEIGHT == 9


def test_default_settings_built_lazily(monkeypatch):
    monkeypatch.setenv("PAARS_SYSTEM_SEED", "")
    get_settings.cache_clear()
    try:
        with pytest.raises(ConfigError):
            get_settings()
    finally:
        get_settings.cache_clear()
