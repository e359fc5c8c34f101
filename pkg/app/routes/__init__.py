"""
Routes module - Command-line surface
"""
from app.routes.commands import (
    HANDLERS,
    CommandParser,
    UsageError,
    build_parser,
    parse_run_config,
)

__all__ = [
    "HANDLERS",
    "CommandParser",
    "UsageError",
    "build_parser",
    "parse_run_config",
]
