"""
PAARS Configuration Management
Centralized configuration for environment variables, the flat key-value
config file and logging setup
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from paars_engine.exceptions import ConfigError

DEV_SEED = "00" * 32


class Settings(BaseSettings):
    """Application settings with environment variable support"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PAARS_",
        case_sensitive=False,
        extra="ignore",
    )

    # API Configuration
    API_TITLE: str = "PAARS API"
    API_VERSION: str = "1.0.0"
    API_DESCRIPTION: str = "Privacy-aware access regulation and contact detection"

    # Environment
    ENVIRONMENT: str = "development"
    DEBUG: bool = False

    # Server Configuration
    HOST: str = "0.0.0.0"
    PORT: int = 8000

    # Logging Configuration
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = "paars.log"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Environment grid (metres)
    GRID_ORIGIN_X: float = 0.0
    GRID_ORIGIN_Y: float = 0.0
    GRID_CELL_SIZE_M: float = 2.0
    GRID_WIDTH: int = 20
    GRID_HEIGHT: int = 20
    GRID_ACCESS_POINTS: int = 4

    # Epoch clock
    EPOCH_TAU_SECONDS: int = 15
    EPOCH_T0: float = 0.0

    # Hex-encoded 256-bit seed for the network key schedule
    SYSTEM_SEED: str = DEV_SEED

    # Contact store; empty path keeps the store in memory
    STORE_PATH: str = "paars_contacts.ndjson"

    # Occupancy regulation
    OCCUPANCY_THRESHOLD: int = 50
    OCCUPANCY_CAPACITY: Optional[int] = None
    OCCUPANCY_MAX_FRACTION: float = 0.5

    # Probability model
    EPI_SIGMOID_MIDPOINT_S: float = 300.0
    EPI_SIGMOID_SLOPE: float = 0.01
    EPI_DISTANCE_REF_M: float = 1.0
    EPI_PEAK_DAY: float = 0.5
    EPI_RISE_RATE: float = 2.0
    EPI_DECAY_RATE: float = 0.3
    EPI_ALPHA: float = 0.1
    EPI_NOISE_SEED: Optional[int] = None

    # Verification registry mock: comma-separated single-use codes
    REGISTRY_CODES: str = ""

    # Device-side alert level
    ALERT_THRESHOLD: float = 0.5

    @field_validator("SYSTEM_SEED")
    @classmethod
    def validate_seed(cls, v: str) -> str:
        v = v.strip().lower()
        if len(v) != 64:
            raise ValueError("system seed must be 64 hex characters (256 bits)")
        bytes.fromhex(v)
        return v

    @field_validator("GRID_CELL_SIZE_M", "EPI_SIGMOID_MIDPOINT_S", "EPI_SIGMOID_SLOPE",
                     "EPI_DISTANCE_REF_M", "EPI_RISE_RATE", "EPI_DECAY_RATE")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("EPOCH_TAU_SECONDS", "GRID_WIDTH", "GRID_HEIGHT", "GRID_ACCESS_POINTS")
    @classmethod
    def validate_positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("EPI_ALPHA", "EPI_PEAK_DAY")
    @classmethod
    def validate_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @property
    def seed_bytes(self) -> bytes:
        return bytes.fromhex(self.SYSTEM_SEED)

    @property
    def registry_code_list(self) -> list:
        return [c.strip() for c in self.REGISTRY_CODES.split(",") if c.strip()]

    @property
    def effective_occupancy_threshold(self) -> int:
        if self.OCCUPANCY_CAPACITY is None:
            return self.OCCUPANCY_THRESHOLD
        return min(self.OCCUPANCY_THRESHOLD, int(self.OCCUPANCY_CAPACITY * self.OCCUPANCY_MAX_FRACTION))


def parse_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a flat `key = value` file into field names (`grid.width` -> `GRID_WIDTH`)"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}", key=None) from e

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", key=line)
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace(".", "_").upper()] = value
    return values


def load_settings(path: Optional[Union[str, Path]] = None, **overrides: Any) -> Settings:
    """Build settings from defaults, environment and an optional config file"""
    values: Dict[str, Any] = parse_config_file(path) if path else {}
    values.update(overrides)
    unknown = sorted(k for k in values if k not in Settings.model_fields)
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}", key=unknown[0])
    try:
        return Settings(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first.get("loc") else None
        raise ConfigError(f"Invalid configuration: {first['msg']}", key=key) from e


def configure_logging(cfg: "Settings") -> None:
    """Configure root logging the way every entry point does"""
    logging.basicConfig(
        level=logging.DEBUG if cfg.DEBUG else getattr(logging, cfg.LOG_LEVEL.upper(), logging.INFO),
        format=cfg.LOG_FORMAT,
        handlers=[
            logging.FileHandler(cfg.LOG_FILE),
            logging.StreamHandler()
        ]
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Default settings from the environment, built on first use"""
    return load_settings(None)
