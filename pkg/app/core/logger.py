import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from app.core.config import settings

LOGGER_NAME = "crc_rates"
CONSOLE_FORMAT = "%(levelname)s - %(name)s - %(message)s"
LOG_FILE_BYTES = 10 * 1024 * 1024
LOG_FILE_BACKUPS = 5


def _level(name: str) -> int:
    level = logging.getLevelName(name.upper())
    if not isinstance(level, int):
        raise ValueError(f"unknown log level {name!r}")
    return level


def _console_handler(level: int) -> logging.Handler:
    # stderr keeps stdout free for command output
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    return handler


def _file_handler(log_file: str, level: int) -> logging.Handler:
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(
        log_file, maxBytes=LOG_FILE_BYTES, backupCount=LOG_FILE_BACKUPS, encoding="utf-8"
    )
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(settings.LOG_FORMAT, datefmt=settings.LOG_DATE_FORMAT))
    return handler


def setup_logger(
    name: str = LOGGER_NAME,
    log_level: Optional[str] = None,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """
    Engine logger: console on stderr, plus a rotating file when LOG_FILE is set.

    Calling it again for a configured logger only updates the level.
    """
    level = _level(log_level or settings.LOG_LEVEL)
    log_file = log_file or settings.LOG_FILE

    engine_logger = logging.getLogger(name)
    engine_logger.setLevel(level)
    if engine_logger.handlers:
        return engine_logger

    engine_logger.addHandler(_console_handler(level))
    if log_file:
        try:
            engine_logger.addHandler(_file_handler(log_file, level))
        except OSError as e:
            engine_logger.warning(f"Failed to create file handler for {log_file}: {e}")
    return engine_logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    return logging.getLogger(name or LOGGER_NAME)


logger = setup_logger()


def log_command(name: str, status: int, duration: float):
    logger.info(f"command {name} - exit {status} - {duration:.3f}s")


def log_error(error: Exception, context: str = ""):
    logger.error(f"{context}: {error}", exc_info=True)


def log_io_operation(operation: str, details: str = ""):
    logger.debug(f"IO Operation: {operation} - {details}")


def log_rejection(path: int, t: float, theta0: float):
    logger.warning(f"Path {path} rejected at t={t:.6f}: calibrated theta(0)={theta0:.6g} < 0")
