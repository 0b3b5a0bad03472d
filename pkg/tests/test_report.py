"""Tests for result tables and figures."""

import matplotlib.pyplot as plt
import pytest

from bipolar_morph.bench.profiler import OpProfiler
from bipolar_morph.models.network import convert_layer
from bipolar_morph.report import EMPTY_CELL, RESULT_COLUMNS, FigureGenerator
from bipolar_morph.report.tables import render_table, results_frame, write_table
from bipolar_morph.training.trainer import DepthReport


@pytest.fixture
def reports():
    """A two-depth method 1 sweep with a test split, and a method 2 row without one."""
    return [
        DepthReport("CNN1", 0, "none", "method1", 0.98, None, before_test=0.96),
        DepthReport(
            "CNN1", 1, "conv1", "method1", 0.4, 0.97, before_test=0.41, after_test=0.9612
        ),
        DepthReport("CNN1", 0, "none", "method2", 0.98, None),
        DepthReport("CNN1", 1, "conv1", "method2", 0.4, 0.99),
    ]


def test_results_frame_layout(reports):
    """Percent cells, dashes where nothing was retrained, test columns preferred."""
    frame = results_frame(reports)

    assert list(frame.columns) == RESULT_COLUMNS
    assert frame.loc[0, "before_ft"] == "96.00"
    assert frame.loc[0, "after_ft"] == EMPTY_CELL
    assert frame.loc[1, "after_ft"] == "96.12"
    assert frame.loc[3, "after_ft"] == "99.00"
    assert frame.loc[1, "after_val"] == "97.00"


def test_results_frame_restart_spread():
    """Mean and std over every restart sit next to the kept restart's cells."""
    runs = [
        DepthReport("CNN1", 0, "none", "method2", 0.98, None, restart=0),
        DepthReport("CNN1", 1, "conv1", "method2", 0.40, 0.96, restart=0),
        DepthReport("CNN1", 0, "none", "method2", 0.97, None, restart=1),
        DepthReport("CNN1", 1, "conv1", "method2", 0.50, 0.98, restart=1),
    ]
    frame = results_frame(runs[2:], restarts=runs)

    assert frame.loc[1, "after_ft"] == "98.00"
    assert frame.loc[1, "after_ft_mean"] == "97.00"
    assert frame.loc[1, "after_ft_std"] == "1.00"
    assert frame.loc[1, "before_ft_mean"] == "45.00"
    assert frame.loc[1, "before_ft_std"] == "5.00"
    assert frame.loc[0, "after_ft_mean"] == EMPTY_CELL
    assert frame.loc[0, "after_ft_std"] == EMPTY_CELL


def test_results_frame_single_restart_has_zero_spread(reports):
    """Without other restarts the mean is the row itself and the std is zero."""
    frame = results_frame(reports)

    assert frame.loc[1, "after_ft_mean"] == frame.loc[1, "after_ft"]
    assert frame.loc[1, "after_ft_std"] == "0.00"


def test_results_frame_architecture_label(reports):
    """An explicit label replaces the stored notation."""
    assert set(results_frame(reports, architecture="CNN-A")["architecture"]) == {"CNN-A"}


def test_render_table_formats(reports):
    """CSV and Markdown renderings."""
    frame = results_frame(reports)

    csv = render_table(frame, "csv")
    markdown = render_table(frame, "markdown")

    assert csv.splitlines()[0] == ",".join(RESULT_COLUMNS)
    assert len(csv.splitlines()) == 5
    assert markdown.splitlines()[0].startswith("| architecture")
    with pytest.raises(ValueError):
        render_table(frame, "html")


def test_write_table(reports, tmp_path):
    """Tables land on disk, parent directories included."""
    path = write_table(results_frame(reports), tmp_path / "out" / "sweep.md", "markdown")
    assert path.read_text().startswith("|")


def test_plot_accuracy_grid(reports, tmp_path):
    """One panel per method, saved under the output directory."""
    figures = FigureGenerator(output_dir=tmp_path, dpi=50)
    fig = figures.plot_accuracy_grid(results_frame(reports))

    assert (tmp_path / "accuracy_vs_depth.png").exists()
    assert len(fig.axes) == 2
    assert fig.axes[0].get_title() == "method1"
    plt.close(fig)


def test_plot_op_profile(tiny_trained, tmp_path):
    """The classical/BM comparison plots as bar panels."""
    converted = convert_layer(tiny_trained, "conv1")
    profile = OpProfiler().compare(tiny_trained, converted)

    fig = FigureGenerator(output_dir=tmp_path, dpi=50).plot_op_profile(
        profile, filename="ops.png"
    )

    assert (tmp_path / "ops.png").exists()
    assert [ax.get_title() for ax in fig.axes[:2]] == ["classical", "bm"]
    plt.close(fig)
