#!/usr/bin/env python3
"""
Lab Logging - Console and JSON log setup
Part of the CINF Lab outlier-noise mitigation infrastructure

Library modules only call logging.getLogger(__name__). Handlers are installed
once, by the CLI or by a notebook, through configure_logging().
"""

import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv
from pythonjsonlogger.json import JsonFormatter

load_dotenv()

# ── CONFIG ───────────────────────────────────────────────
LOGGER_NAME = "cinf_lab"
TEXT_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
JSON_FIELDS = "%(asctime)s %(levelname)s %(name)s %(message)s"
DEFAULT_LEVEL = os.getenv("CINF_LOG_LEVEL", "INFO")
# ─────────────────────────────────────────────────────────


def configure_logging(level: Optional[str] = None, json_format: bool = False,
                      log_file: Optional[str] = None) -> logging.Logger:
    """Attach exactly one handler to the package logger and return it."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel((level or DEFAULT_LEVEL).upper())

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    handler: logging.Handler
    if log_file:
        handler = logging.FileHandler(log_file, encoding="utf-8")
    else:
        handler = logging.StreamHandler(sys.stderr)

    if json_format:
        handler.setFormatter(JsonFormatter(JSON_FIELDS))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    logger.addHandler(handler)
    logger.propagate = False
    return logger
