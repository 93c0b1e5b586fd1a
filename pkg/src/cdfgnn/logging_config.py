"""Console logging for the CLI and the simulated workers."""

from __future__ import annotations

import logging
import logging.config
from typing import Any

from cdfgnn.config import get_settings

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | worker=%(worker)s | %(message)s"


def get_logging_config(level: str | None = None) -> dict[str, Any]:
    """
    Build the dictConfig layout: one stderr handler, worker-tagged records.

    Args:
        level: Root level; taken from settings when None

    Returns:
        dictConfig-compatible dictionary
    """
    if level is None:
        level = get_settings().log_level
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "standard": {
                "format": LOG_FORMAT,
            },
        },
        "filters": {
            "worker": {
                "()": "cdfgnn.logging_config.WorkerIdFilter",
            },
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "stream": "ext://sys.stderr",
                "formatter": "standard",
                "filters": ["worker"],
            },
        },
        "root": {
            "level": level,
            "handlers": ["console"],
        },
    }


class WorkerIdFilter(logging.Filter):
    """Fill `worker` with "-" for records logged outside a worker."""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "worker"):
            record.worker = "-"
        return True


def configure_logging(config: dict[str, Any] | None = None) -> None:
    """
    Install the logging configuration; `run()` calls this once per invocation.

    Args:
        config: dictConfig dictionary; built from settings when None
    """
    if config is None:
        config = get_logging_config()
    logging.config.dictConfig(config)
