from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process configuration loaded from environment variables.

    Experiment parameters live in the TOML experiment config, not here.
    """

    # -------------------------------------------------
    # Application
    # -------------------------------------------------
    APP_NAME: str = "levy-she-lab"
    APP_ENV: str = Field(
        default="development",
        description="Environment name: development | production",
    )
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # -------------------------------------------------
    # Execution
    # -------------------------------------------------
    THREADS: int | None = Field(
        default=None,
        validation_alias="SHELAB_THREADS",
        description="Thread budget, used only when --threads is absent",
    )
    DEFAULT_SEED: int = 20240601

    # -------------------------------------------------
    # Artifacts
    # -------------------------------------------------
    OUTPUT_DIR: Path = Path("runs")

    # -------------------------------------------------
    # Numerics
    # -------------------------------------------------
    DEFAULT_MARGIN_TOLERANCE: float = Field(
        default=1e-6,
        gt=0,
        lt=1,
        description="Window padding tolerance when the config omits margin_tolerance",
    )

    # -------------------------------------------------
    # Run Registry (Optional)
    # -------------------------------------------------
    RUN_REGISTRY_URL: str | None = Field(
        default=None,
        description="SQLAlchemy URL, e.g. sqlite:///runs/registry.db",
    )
    DB_ECHO: bool = False

    # -------------------------------------------------
    # Pydantic Settings Config
    # -------------------------------------------------
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        populate_by_name=True,
        extra="ignore",
    )


@lru_cache
def get_settings() -> Settings:
    """
    Returns a cached Settings instance.
    """
    return Settings()
