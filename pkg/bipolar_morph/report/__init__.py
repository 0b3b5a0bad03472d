"""Reporting module for result tables and figures."""

from bipolar_morph.report.figures import FigureGenerator
from bipolar_morph.report.tables import (
    EMPTY_CELL,
    RESULT_COLUMNS,
    render_table,
    restart_spread,
    results_frame,
    write_table,
)

__all__ = [
    "EMPTY_CELL",
    "RESULT_COLUMNS",
    "FigureGenerator",
    "render_table",
    "restart_spread",
    "results_frame",
    "write_table",
]
