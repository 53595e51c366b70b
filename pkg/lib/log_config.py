#!/usr/bin/env python3
"""
REPAC Toolkit - Logging
structlog setup shared by the CLI and tests. Logs go to stderr so command
output on stdout stays machine-readable.
"""

import logging
import os
import sys
from typing import Optional

import structlog

DEFAULT_LEVEL = "WARNING"


def _resolve_level(level: Optional[str]) -> int:
    name = (level or os.environ.get("REPAC_LOG_LEVEL", DEFAULT_LEVEL)).upper()
    value = logging.getLevelName(name)
    if not isinstance(value, int):
        raise ValueError(f"Unknown log level '{name}'")
    return value


def configure_logging(level: Optional[str] = None, json_output: Optional[bool] = None) -> None:
    """Configure structlog; level from REPAC_LOG_LEVEL, JSON when REPAC_LOG_JSON=true"""
    if json_output is None:
        json_output = os.environ.get("REPAC_LOG_JSON", "false").lower() == "true"

    renderer = structlog.processors.JSONRenderer() if json_output else \
        structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(_resolve_level(level)),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
