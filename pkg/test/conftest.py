import os
os.environ['TESTING'] = 'true'

import pytest
from pathlib import Path
from src.logging_config import logging_manager
from src.settings import reset_settings

def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run the long TEBD and figure reproduction checks"
    )

def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running physics check (needs --runslow)")

def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

@pytest.fixture(scope="session", autouse=True)
def test_environment():
    """Ensure we're in test environment"""
    reset_settings()
    yield
    os.environ.pop('TESTING', None)
    reset_settings()

@pytest.fixture(scope="session", autouse=True)
def test_logs_setup():
    """Setup and cleanup test logs directory at session level"""
    test_dir = Path(__file__).parent / "test_logs"
    test_dir.mkdir(parents=True, exist_ok=True)
    logging_manager.cleanup_test_directory()
    yield

@pytest.fixture
def test_logger(request):
    """Provide test-specific logger"""
    module_name = request.module.__name__
    logger = logging_manager.setup_test_logging(module_name)

    yield logger

    logging_manager.cleanup_test_logging(logger)

@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Point DIMERLAB_OUTPUT_DIR at a temporary directory"""
    monkeypatch.setenv("DIMERLAB_OUTPUT_DIR", str(tmp_path))
    reset_settings()
    yield tmp_path
    reset_settings()
