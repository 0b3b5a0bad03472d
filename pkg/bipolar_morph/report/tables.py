"""Result tables in the accuracy-vs-converted-part layout."""

import math
from pathlib import Path
from typing import Literal

import pandas as pd

from bipolar_morph.training.trainer import DepthReport
from bipolar_morph.utils import setup_logger

logger = setup_logger(__name__)

TableFormat = Literal["csv", "markdown"]

RESULT_COLUMNS = [
    "architecture",
    "converted_prefix",
    "method",
    "before_ft",
    "before_ft_mean",
    "before_ft_std",
    "after_ft",
    "after_ft_mean",
    "after_ft_std",
    "before_val",
    "after_val",
    "depth",
    "restart",
    "seed",
]

# Cell shown when nothing was retrained after conversion
EMPTY_CELL = "-"


def _percent(value: float | None) -> str:
    if value is None or math.isnan(value):
        return EMPTY_CELL
    return f"{100 * value:.2f}"


def _ft(report: DepthReport) -> tuple[float | None, float | None]:
    """(before, after) accuracy on the test split if one was evaluated, else validation."""
    if report.before_test is not None:
        return report.before_test, report.after_test
    return report.before_val, report.after_val


def restart_spread(reports: list[DepthReport]) -> pd.DataFrame:
    """Mean and population std of before_ft/after_ft over restarts, per (method, depth)."""
    rows = []
    for report in reports:
        before, after = _ft(report)
        rows.append(
            {
                "method": report.method,
                "depth": report.depth,
                "before": math.nan if before is None else before,
                "after": math.nan if after is None else after,
            }
        )
    frame = pd.DataFrame(rows, columns=["method", "depth", "before", "after"])
    return frame.groupby(["method", "depth"]).agg(
        before_ft_mean=("before", "mean"),
        before_ft_std=("before", lambda s: s.std(ddof=0)),
        after_ft_mean=("after", "mean"),
        after_ft_std=("after", lambda s: s.std(ddof=0)),
    )


def results_frame(
    reports: list[DepthReport],
    architecture: str | None = None,
    restarts: list[DepthReport] | None = None,
) -> pd.DataFrame:
    """One row per (method, depth); accuracies in percent with "-" for empty cells.

    Args:
        reports: Per-depth reports of the kept restart of one or more schedules
        architecture: Label for the architecture column (each report's own if None)
        restarts: Reports of every restart, for the mean/std columns
            (``reports`` alone if None)

    Returns:
        DataFrame with ``RESULT_COLUMNS``; before_ft/after_ft are test accuracies
        when a test split was evaluated, validation accuracies otherwise
    """
    spread = restart_spread(restarts if restarts is not None else reports)
    rows = []
    for report in reports:
        before, after = _ft(report)
        stats = spread.loc[(report.method, report.depth)]
        rows.append(
            {
                "architecture": architecture or report.architecture,
                "converted_prefix": report.converted_prefix,
                "method": report.method,
                "before_ft": _percent(before),
                "before_ft_mean": _percent(stats["before_ft_mean"]),
                "before_ft_std": _percent(stats["before_ft_std"]),
                "after_ft": _percent(after),
                "after_ft_mean": _percent(stats["after_ft_mean"]),
                "after_ft_std": _percent(stats["after_ft_std"]),
                "before_val": _percent(report.before_val),
                "after_val": _percent(report.after_val),
                "depth": report.depth,
                "restart": report.restart,
                "seed": report.seed,
            }
        )
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def render_table(frame: pd.DataFrame, fmt: TableFormat = "csv") -> str:
    if fmt == "csv":
        return frame.to_csv(index=False)
    if fmt == "markdown":
        return frame.to_markdown(index=False)
    raise ValueError(f"Unknown table format: {fmt}")


def write_table(frame: pd.DataFrame, path: str | Path, fmt: TableFormat = "csv") -> Path:
    """Write ``frame`` to ``path`` as CSV or Markdown, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_table(frame, fmt))
    logger.info(f"Saved {len(frame)} result rows to {path}")
    return path
