from pathlib import Path

import pytest
from pydantic import ValidationError

from src.settings import Settings, get_settings, reset_settings


class TestSettings:
    """Environment-driven configuration"""

    @pytest.fixture(autouse=True)
    def fresh(self):
        reset_settings()
        yield
        reset_settings()

    def test_defaults(self, monkeypatch):
        for name in ("WORKERS", "LOG_LEVEL", "OUTPUT_DIR", "DENSE_BUDGET", "API_KEY"):
            monkeypatch.delenv(f"DIMERLAB_{name}", raising=False)
        settings = get_settings()
        assert settings.workers == 1
        assert settings.output_dir == Path("runs")
        assert settings.dense_budget == 200_000
        assert settings.testing is True

    def test_prefixed_variables_override(self, monkeypatch):
        monkeypatch.setenv("DIMERLAB_WORKERS", "3")
        monkeypatch.setenv("DIMERLAB_LOG_LEVEL", "debug")
        monkeypatch.setenv("DIMERLAB_API_KEY", "secret")
        settings = get_settings()
        assert settings.workers == 3
        assert settings.log_level == "DEBUG"
        assert settings.api_key == "secret"

    def test_unprefixed_variables_ignored(self, monkeypatch):
        monkeypatch.delenv("DIMERLAB_WORKERS", raising=False)
        monkeypatch.setenv("WORKERS", "7")
        assert get_settings().workers == 1

    def test_cached_until_reset(self, monkeypatch):
        monkeypatch.setenv("DIMERLAB_WORKERS", "2")
        first = get_settings()
        monkeypatch.setenv("DIMERLAB_WORKERS", "5")
        assert get_settings() is first
        reset_settings()
        assert get_settings().workers == 5

    @pytest.mark.parametrize("name, value", [("WORKERS", "0"), ("WORKERS", "many"), ("LOG_LEVEL", "loud")])
    def test_bad_values_rejected(self, monkeypatch, name, value):
        monkeypatch.setenv(f"DIMERLAB_{name}", value)
        with pytest.raises(ValidationError):
            Settings()
