"""
Schemas module - Run configuration and result reports
"""
from app.schemas.reports import ConvergenceReport, MgfEstimate, MomentReport, PathEnsemble
from app.schemas.run_config import COMMANDS, RunConfig

__all__ = [
    "COMMANDS",
    "ConvergenceReport",
    "MgfEstimate",
    "MomentReport",
    "PathEnsemble",
    "RunConfig",
]
