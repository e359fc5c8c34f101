"""
Repository module - Yield panels, reports and ensemble files
"""
from app.repo.repository import (
    ReportRepository,
    YieldPanelRepository,
    get_panel_repo,
    get_report_repo,
    panel_repo,
    report_repo,
)

__all__ = [
    "ReportRepository",
    "YieldPanelRepository",
    "get_panel_repo",
    "get_report_repo",
    "panel_repo",
    "report_repo",
]
