from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


# Get the project root directory
BASE_DIR = Path(__file__).resolve().parent.parent.parent


class Settings(BaseSettings):
    """Engine settings, overridable through CRC_* environment variables or .env"""

    model_config = SettingsConfigDict(
        env_prefix="CRC_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Application Settings
    APP_NAME: str = "crc-rates"
    APP_VERSION: str = "1.0.0"

    # Simulation grid
    DELTA: float = Field(default=1.0 / 240.0, gt=0)
    SEED: int = 7

    # Estimator Settings
    WINDOW: int = Field(default=100, ge=2)
    TAU1: float = Field(default=0.25, gt=0)
    TAU2: float = Field(default=2.0, gt=0)
    RANK_THRESHOLD: float = Field(default=1e-6, gt=0)

    # Worker Settings
    THREADS: int = Field(default=1, ge=1)
    BLOCK_SIZE: int = Field(default=256, ge=1)

    # Model defaults used when a command does not supply them
    DEFAULT_LEVEL: float = Field(default=1e-4, ge=0)
    DEFAULT_BETA: float = Field(default=-0.5, lt=0)
    FLAT_RATE: float = 0.02

    # Analytics Settings
    JACKKNIFE_BLOCKS: int = Field(default=1000, ge=2)

    # Output Settings
    OUTPUT_DIR: Path = BASE_DIR / "output"
    DATA_DIR: Path = BASE_DIR / "data"

    # Logging Settings
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = ""
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_DATE_FORMAT: str = "%Y-%m-%d %H:%M:%S"


settings = Settings()


def get_settings() -> Settings:
    """Get engine settings"""
    return settings
