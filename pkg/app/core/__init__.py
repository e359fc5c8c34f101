"""
Core module - Engine configuration, logging and errors
"""
from app.core.config import settings, get_settings
from app.core.logger import logger, get_logger, setup_logger

__all__ = [
    "settings",
    "get_settings",
    "logger",
    "get_logger",
    "setup_logger",
]
