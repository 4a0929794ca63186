import logging
from pathlib import Path

import pytest

from prosoref.core.exceptions import expand_env, setup_logger

REPO_CONFIG = Path(__file__).resolve().parents[2] / "logging.json"


@pytest.fixture
def restore_logging():
    root = logging.getLogger()
    level, handlers = root.level, list(root.handlers)
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_expand_env_substitutes_nested_values(monkeypatch):
    monkeypatch.setenv("PROSOREF_TEST_LEVEL", "ERROR")
    monkeypatch.delenv("PROSOREF_TEST_MISSING", raising=False)

    raw = {
        "a": "${PROSOREF_TEST_LEVEL}",
        "b": ["${PROSOREF_TEST_MISSING:INFO}", "${PROSOREF_TEST_MISSING}"],
        "c": {"d": "plain ${PROSOREF_TEST_LEVEL}", "e": 3},
    }
    assert expand_env(raw) == {
        "a": "ERROR",
        "b": ["INFO", ""],
        "c": {"d": "plain ${PROSOREF_TEST_LEVEL}", "e": 3},
    }


def test_repo_config_levels_follow_environment(monkeypatch, restore_logging):
    monkeypatch.setenv("PROSOREF_ROOT_LOG_LEVEL", "ERROR")
    monkeypatch.setenv("PROSOREF_LOG_HANDLER_LEVEL", "WARNING")

    logger = setup_logger("debug", dev=False, config_path=REPO_CONFIG)

    root = logging.getLogger()
    assert root.level == logging.ERROR
    assert logger.level == logging.DEBUG
    assert [h.level for h in logger.handlers] == [logging.WARNING]


def test_repo_config_defaults(monkeypatch, restore_logging):
    monkeypatch.delenv("PROSOREF_ROOT_LOG_LEVEL", raising=False)
    monkeypatch.delenv("PROSOREF_LOG_HANDLER_LEVEL", raising=False)

    logger = setup_logger("info", dev=False, config_path=REPO_CONFIG)

    assert logging.getLogger().level == logging.WARNING
    assert [h.level for h in logger.handlers] == [logging.DEBUG]
