import os
from pathlib import Path
from typing import Optional

import dotenv
from pydantic import BaseSettings, validator

_settings = None


class Settings(BaseSettings):
    """Process-wide knobs; every field can be set through a DIMERLAB_* variable."""

    output_dir: Path = Path("runs")
    log_level: str = "INFO"
    workers: int = 1
    api_key: Optional[str] = None
    dense_budget: int = 200_000
    two_body_max_sites: int = 96
    testing: bool = False

    class Config:
        env_prefix = "DIMERLAB_"

    @validator("log_level")
    def _known_level(cls, value):
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {value}")
        return value

    @validator("workers", "dense_budget", "two_body_max_sites")
    def _positive(cls, value):
        if value < 1:
            raise ValueError("must be at least 1")
        return value


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        testing = os.environ.get('TESTING') == 'true'

        if not testing:
            dotenv.load_dotenv()

        _settings = Settings(testing=testing)

    return _settings


def reset_settings():
    """Forget the cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None
