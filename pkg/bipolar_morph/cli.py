"""Command-line interface for bipolar morphological networks.

Option values resolve as: command-line flag, then the ``--config`` TOML file,
then the defaults in ``bipolar_morph.config``. The TOML file may hold a
``[train]`` table with ``TrainConfig`` field names and a ``[data]`` table with
``mnist_dir``.
"""

import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Callable, Sequence
from dataclasses import fields, replace
from pathlib import Path
from typing import Any

import click
import numpy as np
import pandas as pd

from bipolar_morph import __version__
from bipolar_morph.bench.profiler import OpProfiler, counters_table, runtime_probe
from bipolar_morph.config import path_config
from bipolar_morph.data.idx import Dataset, load_idx_directory
from bipolar_morph.data.serialize import load_model, save_model
from bipolar_morph.errors import (
    BMError,
    ConversionError,
    DataError,
    DomainError,
    NumericError,
    ParseError,
    ShapeError,
)
from bipolar_morph.models.network import (
    NetworkSpec,
    convert_layer,
    converted_prefix,
    parse_architecture,
)
from bipolar_morph.models.notation import to_bm
from bipolar_morph.morph.bm import BMWeights
from bipolar_morph.morph.lut import make_exp_ln_lut
from bipolar_morph.report.figures import FigureGenerator
from bipolar_morph.report.tables import render_table, results_frame, write_table
from bipolar_morph.training.trainer import EvalReport, TrainConfig, Trainer, evaluate
from bipolar_morph.utils import set_log_level, setup_logger

logger = setup_logger("bipolar_morph.cli")

FORMATS = ("csv", "markdown")
METHODS = {"1": "method1", "2": "method2"}


# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------


def _load_config(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise click.UsageError(f"invalid config file {path}: {e}") from e


def train_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Attach the TrainConfig flags; every one defaults to None so the config file can fill it."""
    options = [
        click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default=None),
        click.option("--lr", "learning_rate", type=float, default=None, help="Learning rate"),
        click.option("--momentum", type=float, default=None, help="SGD momentum"),
        click.option("--batch-size", type=int, default=None),
        click.option("--epochs", type=int, default=None, help="Epochs per training phase"),
        click.option("--patience", type=int, default=None, help="Early-stopping patience"),
        click.option("--restarts", type=int, default=None, help="Seeds tried per schedule"),
        click.option("--val-fraction", type=float, default=None),
        click.option("--eval-workers", type=int, default=None, help="Evaluation threads"),
        click.option("--seed", type=int, default=None, help="Seed for every random choice"),
        click.option(
            "--overflow",
            type=click.Choice(["clamp", "raise"]),
            default=None,
            help="Handling of max-plus outputs beyond the exp range",
        ),
        click.option(
            "--reuse-base/--no-reuse-base",
            default=None,
            help="Fine-tune every restart from the given weights instead of retraining them",
        ),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _train_config(ctx: click.Context, **flags: Any) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    values = dict(ctx.obj["config"].get("train", {}))
    unknown = set(values) - known
    if unknown:
        raise click.UsageError(f"unknown [train] keys in config file: {sorted(unknown)}")
    values.update({key: value for key, value in flags.items() if value is not None})
    if "betas" in values:
        values["betas"] = tuple(values["betas"])
    try:
        cfg = TrainConfig(**values)
        cfg.validate()
    except (TypeError, ValueError) as e:
        raise click.UsageError(str(e)) from e
    return cfg


def _mnist_dir(ctx: click.Context, flag: Path | None) -> Path:
    if flag is not None:
        return flag
    configured = ctx.obj["config"].get("data", {}).get("mnist_dir")
    return Path(configured) if configured else path_config.mnist_dir


def _architecture(text: str, input_shape: str | None) -> NetworkSpec:
    """Notation, a preset name or a file holding notation."""
    path = Path(text)
    if path.suffix and path.is_file():
        text = path.read_text()
    shape = None
    if input_shape:
        try:
            shape = tuple(int(dim) for dim in input_shape.split(","))
        except ValueError as e:
            raise click.BadParameter(f"expected C,H,W, got {input_shape!r}") from e
    return parse_architecture(text, input_shape=shape)  # type: ignore[arg-type]


def _network(arch: str | None, model: Path | None, input_shape: str | None) -> NetworkSpec:
    if (arch is None) == (model is None):
        raise click.UsageError("give exactly one of --arch and --model")
    if model is not None:
        return load_model(model)
    assert arch is not None
    return _architecture(arch, input_shape)


def _model_name(arch: str) -> str:
    """Stem for default output files: the preset or notation-file name."""
    path = Path(arch)
    if path.suffix and path.is_file():
        return path.stem
    return arch.lower() if arch.isalnum() else "network"


def _datasets(directory: Path, net: NetworkSpec) -> tuple[Dataset, Dataset]:
    _, height, width = net.input_shape
    return load_idx_directory(directory, image_shape=(height, width), n_classes=net.n_classes)


def _emit(frame: pd.DataFrame, fmt: str, out: Path | None) -> None:
    if out is not None:
        write_table(frame, out, fmt)  # type: ignore[arg-type]
    click.echo(render_table(frame, fmt))  # type: ignore[arg-type]


def _eval_frame(reports: dict[str, EvalReport]) -> pd.DataFrame:
    return pd.DataFrame([{"split": split, **r.to_dict()} for split, r in reports.items()])


format_option = click.option("--format", "fmt", type=click.Choice(FORMATS), default="csv")
mnist_option = click.option(
    "--mnist-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Directory with train/test IDX files",
)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(version=__version__)
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="TOML file with [train] and [data] tables",
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
    help="Overrides LOG_LEVEL",
)
@click.pass_context
def cli(ctx: click.Context, config_path: Path | None, log_level: str | None) -> None:
    """Bipolar morphological networks.

    Train classical networks, convert their conv/fc layers to max-plus BM
    layers, fine-tune layer by layer and report accuracies and operation counts.
    """
    if log_level is not None:
        set_log_level(log_level)
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config(config_path)


@cli.command()
@click.option("--arch", required=True, help="Notation, preset (CNN1..CNN4) or notation file")
@click.option("--input-shape", default=None, help="C,H,W (preset or 1,28,28 if omitted)")
@mnist_option
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Model file (default: under outputs/models)",
)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None)
@format_option
@train_options
@click.pass_context
def train(
    ctx: click.Context,
    arch: str,
    input_shape: str | None,
    mnist_dir: Path | None,
    out: Path | None,
    report: Path | None,
    fmt: str,
    **flags: Any,
) -> None:
    """Train a classical baseline and save it."""
    cfg = _train_config(ctx, **flags)
    net = _architecture(arch, input_shape)
    train_set, test_set = _datasets(_mnist_dir(ctx, mnist_dir), net)

    trainer = Trainer(cfg)
    net, val_report = trainer.train_classical(net, train_set)
    save_model(net, out or path_config.models_dir / f"{_model_name(arch)}.bmnf")
    _emit(
        _eval_frame({"val": val_report, "test": trainer.evaluate(net, test_set)}), fmt, report
    )


@cli.command()
@click.option("--model", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--depth", type=int, required=True, help="Number of conv/fc layers to convert")
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Model file (default: under outputs/models)",
)
def convert(model: Path, depth: int, out: Path | None) -> None:
    """Convert the first DEPTH conv/fc layers to BM layers without any training."""
    net = load_model(model)
    names = net.convertible_layers()
    if not 0 <= depth <= len(names):
        raise click.BadParameter(f"must be in [0, {len(names)}]", param_hint="--depth")
    for name in names[:depth]:
        if not net.layer(name).bm:
            net = convert_layer(net, name)
    net.metadata["converted_depth"] = depth
    save_model(net, out or path_config.models_dir / f"{model.stem}_bm{depth}.bmnf")
    click.echo(f"converted: {converted_prefix(net, depth)}")
    click.echo(net.architecture())


@cli.command()
@click.option("--model", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--method", type=click.Choice(list(METHODS)), required=True)
@click.option("--depth", type=int, required=True, help="Convert and retrain up to this layer")
@mnist_option
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Model file (default: under outputs/models)",
)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None)
@format_option
@train_options
@click.pass_context
def finetune(
    ctx: click.Context,
    model: Path,
    method: str,
    depth: int,
    mnist_dir: Path | None,
    out: Path | None,
    report: Path | None,
    fmt: str,
    **flags: Any,
) -> None:
    """Convert layer by layer with Method 1 (freeze) or Method 2 (train all)."""
    cfg = replace(_train_config(ctx, **flags), depth=depth)
    net = load_model(model)
    train_set, test_set = _datasets(_mnist_dir(ctx, mnist_dir), net)

    trainer = Trainer(cfg)
    schedule = trainer.train_method1 if METHODS[method] == "method1" else trainer.train_method2
    result = schedule(net, train_set, test_set)
    out = out or path_config.models_dir / f"{model.stem}_m{method}_d{depth}.bmnf"
    save_model(result.net, out)
    _emit(results_frame(result.reports, restarts=result.all_reports), fmt, report)


@cli.command("eval")
@click.option("--model", type=click.Path(dir_okay=False, path_type=Path), required=True)
@mnist_option
@click.option("--split", type=click.Choice(["test", "train"]), default="test")
@click.option("--batch-size", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Evaluation threads")
@click.option("--lut-bins", type=int, default=None, help="Use exp/ln lookup tables of this size")
@click.option("--lut-range", type=float, default=30.0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None)
@format_option
@click.pass_context
def eval_command(
    ctx: click.Context,
    model: Path,
    mnist_dir: Path | None,
    split: str,
    batch_size: int | None,
    workers: int | None,
    lut_bins: int | None,
    lut_range: float,
    report: Path | None,
    fmt: str,
) -> None:
    """Report accuracy, loss and saturation of a saved model."""
    cfg = _train_config(ctx, eval_batch_size=batch_size, eval_workers=workers)
    net = load_model(model)
    train_set, test_set = _datasets(_mnist_dir(ctx, mnist_dir), net)
    activations = make_exp_ln_lut(lut_bins, lut_range) if lut_bins is not None else None

    result = evaluate(
        net,
        test_set if split == "test" else train_set,
        batch_size=cfg.eval_batch_size,
        workers=cfg.eval_workers,
        activations=activations,
        overflow=cfg.overflow,
    )
    _emit(_eval_frame({split: result}), fmt, report)


@cli.command()
@click.option("--arch", default=None, help="Notation, preset or notation file")
@click.option("--model", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--input-shape", default=None, help="C,H,W for --arch")
@click.option("--bm-depth", type=int, default=None, help="Layers converted in the BM twin")
@click.option("--reps", type=int, default=0, help="Timed forward passes (needs weights)")
@click.option("--seed", type=int, default=0, help="Seed of the random probe input")
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--figure", is_flag=True, help="Save the per-layer operation plot")
@format_option
def bench(
    arch: str | None,
    model: Path | None,
    input_shape: str | None,
    bm_depth: int | None,
    reps: int,
    seed: int,
    report: Path | None,
    figure: bool,
    fmt: str,
) -> None:
    """Per-layer operation counts of a network and its BM twin."""
    net = _network(arch, model, input_shape)
    names = net.convertible_layers()
    depth = len(names) if bm_depth is None else bm_depth
    if not 0 <= depth <= len(names):
        raise click.BadParameter(f"must be in [0, {len(names)}]", param_hint="--bm-depth")
    convert = {name for name in names[:depth] if not net.layer(name).bm}
    twin = NetworkSpec(
        input_shape=net.input_shape,
        layers=[to_bm(layer) if layer.name in convert else layer for layer in net.layers],
    )

    profile = OpProfiler().compare(net, twin)
    _emit(profile, fmt, report)
    click.echo(counters_table(OpProfiler().core_summary(net, twin), fmt))  # type: ignore[arg-type]
    if figure:
        FigureGenerator().plot_op_profile(profile, title=net.architecture())

    if reps > 0:
        if not net.is_parameterized:
            raise click.UsageError("--reps needs a network with weights (use --model)")
        stats = runtime_probe(net, reps=reps, seed=seed)
        click.echo(render_table(pd.DataFrame([stats.to_dict()]), fmt))  # type: ignore[arg-type]


@cli.command()
@click.option("--model", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--arch", default=None, help="Train this architecture first instead of --model")
@click.option("--input-shape", default=None, help="C,H,W for --arch")
@click.option("--method", type=click.Choice([*METHODS, "both"]), default="both")
@click.option("--max-depth", type=int, default=None, help="Deepest conversion (all if omitted)")
@mnist_option
@click.option(
    "--report",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Result table (default: under outputs/reports)",
)
@click.option("--figure", is_flag=True, help="Save the accuracy-vs-depth plot")
@format_option
@train_options
@click.pass_context
def sweep(
    ctx: click.Context,
    model: Path | None,
    arch: str | None,
    input_shape: str | None,
    method: str,
    max_depth: int | None,
    mnist_dir: Path | None,
    report: Path | None,
    figure: bool,
    fmt: str,
    **flags: Any,
) -> None:
    """Accuracy before and after fine-tuning for every conversion depth."""
    net = _network(arch, model, input_shape)
    if net.converted_layers():
        raise click.UsageError(
            f"sweep needs a classical network; {', '.join(net.converted_layers())} "
            "already converted (convert or finetune the classical model instead)"
        )
    cfg = _train_config(ctx, **flags)
    depth = len(net.convertible_layers()) if max_depth is None else max_depth
    cfg = replace(cfg, depth=depth)
    try:
        cfg.validate(net)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--max-depth") from e
    train_set, test_set = _datasets(_mnist_dir(ctx, mnist_dir), net)

    trainer = Trainer(cfg)
    if cfg.reuse_base and not net.is_parameterized:
        logger.info("Training the classical baseline first...")
        net, _ = trainer.train_classical(net, train_set)

    methods = list(METHODS.values()) if method == "both" else [METHODS[method]]
    reports, restarts = [], []
    for name in methods:
        logger.info("=" * 80)
        logger.info(f"Sweep {name} up to depth {depth}")
        schedule = trainer.train_method1 if name == "method1" else trainer.train_method2
        result = schedule(net, train_set, test_set)
        reports.extend(result.reports)
        restarts.extend(result.all_reports)

    frame = results_frame(reports, architecture=net.architecture(), restarts=restarts)
    if report is None:
        name = model.stem if model is not None else _model_name(arch or "")
        suffix = "md" if fmt == "markdown" else "csv"
        report = path_config.reports_dir / f"sweep_{name}.{suffix}"
    _emit(frame, fmt, report)
    if figure:
        FigureGenerator().plot_accuracy_grid(frame)


@cli.command()
@click.option("--arch", default=None, help="Notation, preset or notation file")
@click.option("--model", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--input-shape", default=None, help="C,H,W for --arch")
def inspect(arch: str | None, model: Path | None, input_shape: str | None) -> None:
    """Print the parsed architecture, output shapes and parameter shapes."""
    net = _network(arch, model, input_shape)
    click.echo(net.architecture())
    click.echo(f"input: {tuple(net.input_shape)}")

    rows = []
    for layer, (_, shape) in zip(net.layers, net.layer_shapes(), strict=True):
        row: dict[str, Any] = {"layer": layer.name, "kind": layer.kind, "output": shape}
        params = net.params.get(layer.name)
        if isinstance(params, BMWeights):
            row["params"] = f"V0/V1 {params.V0.shape}, bias {params.bias.shape}"
            dead = np.isneginf(params.V0.data) & np.isneginf(params.V1.data)
            row["neg_inf"] = int(dead.sum())
        elif params is not None:
            row["params"] = f"weight {params.weight.shape}, bias {params.bias.shape}"
        elif layer.convertible:
            row["params"] = f"weight {net.geometry(layer.name).weight_shape} (uninitialized)"
        rows.append(row)
    frame = pd.DataFrame(rows).fillna("")
    click.echo(frame.to_markdown(index=False))
    if net.metadata:
        click.echo(f"metadata: {net.metadata}")


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and map failures to exit codes (2 usage, 3 data, 4 numeric)."""
    try:
        result = cli.main(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except (ParseError, ConversionError, ShapeError) as e:
        click.echo(f"Error: {e}", err=True)
        return 2
    except (DataError, OSError) as e:
        click.echo(f"Data error: {e}", err=True)
        return 3
    except (NumericError, DomainError) as e:
        click.echo(f"Numeric error: {e}", err=True)
        return 4
    except BMError as e:
        click.echo(f"Error: {e}", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
