"""
Sweep reports: CSV tables and matching SVG charts.
"""

from .report import ReportArtifacts, build_report
from .summary import SummaryRow, SweepSummary, format_number

__all__ = [
    "ReportArtifacts",
    "SummaryRow",
    "SweepSummary",
    "build_report",
    "format_number",
]
