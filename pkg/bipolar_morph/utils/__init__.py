"""Logging utilities for the bipolar morphological network package.

Console logs go to stderr so tables printed by the CLI on stdout stay
machine-readable.
"""

import logging
import sys
from pathlib import Path

from bipolar_morph.config import logging_config

PACKAGE = "bipolar_morph"


def setup_logger(
    name: str,
    log_file: Path | None = None,
    level: str | None = None,
) -> logging.Logger:
    """Set up a logger with console and file handlers.

    Args:
        name: Logger name, normally the module's ``__name__``
        log_file: Optional path to log file. Uses config default if None.
        level: Optional log level. Uses config default if None.

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Avoid adding handlers multiple times
    if logger.handlers:
        return logger

    log_level = _level(level or logging_config.log_level)
    logger.setLevel(log_level)
    formatter = logging.Formatter(logging_config.log_format, datefmt=logging_config.date_format)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file is None:
        log_file = Path(logging_config.log_file)
    try:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
    except OSError:
        # Read-only working directory: console logging only
        return logger
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    return logger


def set_log_level(level: str) -> None:
    """Change the level of every package logger created so far."""
    log_level = _level(level)
    for name, logger in logging.Logger.manager.loggerDict.items():
        if isinstance(logger, logging.Logger) and name.split(".")[0] == PACKAGE:
            logger.setLevel(log_level)


def progress_enabled(logger: logging.Logger) -> bool:
    """Whether tqdm progress bars should be shown for this logger."""
    return logger.isEnabledFor(logging.INFO)


def _level(name: str) -> int:
    level = logging.getLevelName(name.upper())
    if not isinstance(level, int):
        raise ValueError(f"unknown log level {name!r}")
    return level
