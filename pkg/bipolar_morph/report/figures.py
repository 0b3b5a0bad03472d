"""Figures for conversion sweeps and operation profiles."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from bipolar_morph.config import path_config  # noqa: E402
from bipolar_morph.report.tables import EMPTY_CELL  # noqa: E402
from bipolar_morph.utils import setup_logger  # noqa: E402

logger = setup_logger(__name__)

plt.style.use("seaborn-v0_8-paper")
sns.set_palette("husl")


def _accuracy(column: pd.Series) -> pd.Series:
    return pd.to_numeric(column.replace(EMPTY_CELL, np.nan), errors="coerce")


class FigureGenerator:
    """Render sweep and profiling figures to an output directory."""

    def __init__(self, output_dir: Path | None = None, dpi: int = 300):
        """Initialize the figure generator.

        Args:
            output_dir: Directory to save figures. Defaults to config.
            dpi: DPI for saved figures
        """
        self.output_dir = Path(output_dir) if output_dir is not None else path_config.figures_dir
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.dpi = dpi

    def save_figure(self, fig: plt.Figure, filename: str) -> Path:
        filepath = self.output_dir / filename
        fig.savefig(filepath, dpi=self.dpi, bbox_inches="tight")
        logger.info(f"Saved figure to {filepath}")
        return filepath

    def plot_accuracy_grid(
        self,
        results: pd.DataFrame,
        title: str | None = None,
        filename: str = "accuracy_vs_depth.png",
    ) -> plt.Figure:
        """Plot accuracy before and after fine-tuning against the converted depth.

        Args:
            results: Frame from ``results_frame`` (percent strings, "-" for empty)
            title: Figure title; the architecture label if None
            filename: Output file name

        Returns:
            Matplotlib figure
        """
        logger.info("Plotting accuracy against converted depth...")

        frame = results.copy()
        frame["before_ft"] = _accuracy(frame["before_ft"])
        frame["after_ft"] = _accuracy(frame["after_ft"])
        methods = sorted(frame["method"].unique())

        fig, axes = plt.subplots(1, len(methods), figsize=(6 * len(methods), 4.5), squeeze=False)
        for ax, method in zip(axes[0], methods, strict=True):
            rows = frame[frame["method"] == method].sort_values("depth")
            ax.plot(rows["depth"], rows["before_ft"], marker="o", label="before fine-tuning")
            after = rows.dropna(subset=["after_ft"])
            if not after.empty:
                ax.plot(after["depth"], after["after_ft"], marker="s", label="after fine-tuning")
            ax.set_xticks(rows["depth"])
            ax.set_xticklabels(rows["converted_prefix"], rotation=30, ha="right")
            ax.set_xlabel("Converted layers")
            ax.set_ylabel("Accuracy (%)")
            ax.set_title(method)
            ax.legend()
            ax.grid(alpha=0.3)

        if title is None and "architecture" in frame and len(frame):
            title = str(frame["architecture"].iloc[0])
        if title:
            fig.suptitle(title)
        plt.tight_layout()
        self.save_figure(fig, filename)
        return fig

    def plot_op_profile(
        self,
        profile: pd.DataFrame,
        title: str = "Operations per layer",
        filename: str = "op_profile.png",
    ) -> plt.Figure:
        """Grouped bars of operation counts per layer, one panel per variant.

        Args:
            profile: Long frame from ``OpProfiler.compare``
            title: Figure title
            filename: Output file name

        Returns:
            Matplotlib figure
        """
        logger.info("Plotting operation profile...")

        frame = profile[profile["layer"] != "TOTAL"]
        kinds = [c for c in ("mults", "adds", "maxes", "exps", "lns") if c in frame]
        long = frame.melt(
            id_vars=["variant", "layer"], value_vars=kinds, var_name="op", value_name="count"
        )
        long = long[long["count"] > 0]
        variants = list(dict.fromkeys(frame["variant"]))

        fig, axes = plt.subplots(
            1, len(variants), figsize=(7 * len(variants), 4.5), sharey=True, squeeze=False
        )
        for ax, variant in zip(axes[0], variants, strict=True):
            rows = long[long["variant"] == variant]
            sns.barplot(data=rows, x="layer", y="count", hue="op", ax=ax)
            ax.set_yscale("log")
            ax.set_title(variant)
            ax.set_xlabel("Layer")
            ax.set_ylabel("Count per sample")
            ax.grid(alpha=0.3, axis="y")

        fig.suptitle(title)
        plt.tight_layout()
        self.save_figure(fig, filename)
        return fig
