"""
Structured logging configuration using structlog.

Provides JSON-formatted logs for batch runs and colored logs for development.
Logs go to stderr; stdout carries reports only.
"""

import logging
import sys

import structlog

from src.common.config import settings


def configure_logging(level: str | None = None):
    """Configure structured logging with environment-specific output format."""

    # Determine output format based on environment
    if settings.environment == "development":
        # Colored console output for development
        renderer = structlog.dev.ConsoleRenderer()
    else:
        # JSON output for batch runs
        renderer = structlog.processors.JSONRenderer()

    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
        renderer,
    ]

    # Configure structlog
    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    # Configure standard logging
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, (level or settings.log_level).upper()),
        force=True,
    )


# Initialize logging on module import
configure_logging()

# Export logger factory
get_logger = structlog.get_logger
