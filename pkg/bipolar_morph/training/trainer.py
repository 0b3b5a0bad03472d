"""Classical training, layer-by-layer BM conversion schedules and evaluation.

Two conversion schedules share one loop. For each conv/fc layer up to the
requested depth, in network order, the layer is converted and evaluated
("before" fine-tuning), then the network is retrained and evaluated again
("after"):

- Method 1 freezes every converted layer and retrains only the classical rest.
- Method 2 keeps converted layers trainable; their finite log-domain weights
  and biases are learned together with the rest of the network.

The whole procedure, classical training included, is repeated for several
seeds and the run with the best validation accuracy is kept. ``reuse_base``
skips the classical step and fine-tunes every restart from the given weights.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from tqdm import tqdm

from bipolar_morph.autograd import ops
from bipolar_morph.autograd.tensor import Graph, no_grad
from bipolar_morph.bench.counters import OpCounters
from bipolar_morph.config import training_defaults
from bipolar_morph.data.idx import Dataset, split_train_val
from bipolar_morph.errors import ConversionError, DataError, DivergenceError, ShapeError
from bipolar_morph.models.network import (
    NetworkSpec,
    convert_layer,
    converted_prefix,
    forward,
    initialize,
)
from bipolar_morph.morph.bm import Activations, OverflowPolicy, SaturationMonitor
from bipolar_morph.training.optim import make_optimizer
from bipolar_morph.utils import progress_enabled, setup_logger

logger = setup_logger(__name__)

Method = Literal["method1", "method2"]


@dataclass
class TrainConfig:
    """Hyperparameters for one training run (defaults from ``training_defaults``)."""

    optimizer: str = training_defaults.optimizer
    learning_rate: float = training_defaults.learning_rate
    betas: tuple[float, float] = training_defaults.betas
    momentum: float = training_defaults.momentum
    batch_size: int = training_defaults.batch_size
    epochs: int = training_defaults.epochs
    patience: int = training_defaults.patience
    restarts: int = training_defaults.restarts
    val_fraction: float = training_defaults.val_fraction
    eval_batch_size: int = training_defaults.eval_batch_size
    eval_workers: int = training_defaults.eval_workers
    seed: int = training_defaults.random_seed
    depth: int = 0
    reuse_base: bool = False  # fine-tune every restart from the given weights instead of retraining
    overflow: OverflowPolicy = "clamp"

    def validate(self, net: NetworkSpec | None = None) -> None:
        """Check value ranges; with ``net``, also check depth against its conv/fc count."""
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be at least 1, got {self.restarts}")
        if self.epochs < 0 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch sizes >= 1")
        if self.eval_workers < 1:
            raise ValueError(f"eval_workers must be at least 1, got {self.eval_workers}")
        if self.depth < 0:
            raise ValueError(f"depth must be non-negative, got {self.depth}")
        if net is not None and self.depth > len(net.convertible_layers()):
            raise ValueError(
                f"depth {self.depth} exceeds the {len(net.convertible_layers())} "
                "convertible layers of the network"
            )
        if self.overflow not in ("clamp", "raise"):
            raise ValueError(f"overflow must be 'clamp' or 'raise', got {self.overflow}")

    def digest(self) -> str:
        """Short stable hash of the configuration, stored with saved models."""
        payload = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class EvalReport:
    """Accuracy and diagnostics of one evaluation pass."""

    accuracy: float
    mean_loss: float
    n_samples: int
    saturation: dict[str, int] = field(default_factory=dict)
    saturation_fraction: float = 0.0
    counters: OpCounters = field(default_factory=OpCounters)

    def to_dict(self) -> dict[str, float | int]:
        return {
            "accuracy": self.accuracy,
            "mean_loss": self.mean_loss,
            "n_samples": self.n_samples,
            "saturation_fraction": self.saturation_fraction,
        }


@dataclass
class DepthReport:
    """One row of a conversion sweep; ``after_*`` is None when nothing was retrained."""

    architecture: str
    depth: int
    converted_prefix: str
    method: str
    before_val: float
    after_val: float | None
    before_test: float | None = None
    after_test: float | None = None
    restart: int = 0
    seed: int = 0

    @property
    def final_val(self) -> float:
        return self.before_val if self.after_val is None else self.after_val


@dataclass
class MethodResult:
    """Converted network of the best restart and its per-depth reports.

    ``base`` is the classical network the restart converted. ``runs`` holds the
    result of every restart in order, the best one included.
    """

    net: NetworkSpec
    reports: list[DepthReport]
    best_restart: int
    base: NetworkSpec | None = None
    runs: list[MethodResult] = field(default_factory=list)

    @property
    def all_reports(self) -> list[DepthReport]:
        """Reports of every restart, restart by restart."""
        if not self.runs:
            return list(self.reports)
        return [report for run in self.runs for report in run.reports]


def evaluate(
    net: NetworkSpec,
    split: Dataset,
    *,
    batch_size: int = training_defaults.eval_batch_size,
    workers: int = training_defaults.eval_workers,
    activations: Activations | None = None,
    overflow: OverflowPolicy = "clamp",
) -> EvalReport:
    """Eval-mode pass over ``split``: top-1 accuracy, mean loss and op counts.

    Batches may be spread over ``workers`` threads; each batch keeps its own
    counters and saturation monitor, merged in batch order afterwards.
    """
    if len(split) == 0:
        raise DataError(f"cannot evaluate on an empty {split.split} split")
    if split.image_shape != tuple(net.input_shape):
        raise ShapeError(f"dataset images {split.image_shape} vs network input {net.input_shape}")

    def run(start: int) -> tuple[int, float, OpCounters, SaturationMonitor]:
        images = split.images[start : start + batch_size]
        labels = split.labels[start : start + batch_size]
        counters, monitor = OpCounters(), SaturationMonitor()
        with no_grad():
            logits = forward(
                net,
                images,
                "eval",
                counters=counters,
                monitor=monitor,
                activations=activations,
                return_logits=True,
                overflow=overflow,
            )
            loss = ops.softmax_cross_entropy(logits, labels).item()
        correct = int((np.argmax(logits.data, axis=1) == labels).sum())
        return correct, loss * len(labels), counters, monitor

    starts = range(0, len(split), batch_size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(start) for start in starts]

    counters, monitor = OpCounters(), SaturationMonitor()
    correct, loss_sum = 0, 0.0
    for batch_correct, batch_loss, batch_counters, batch_monitor in results:
        correct += batch_correct
        loss_sum += batch_loss
        counters.merge(batch_counters)
        monitor.merge(batch_monitor)

    return EvalReport(
        accuracy=correct / len(split),
        mean_loss=loss_sum / len(split),
        n_samples=len(split),
        saturation=dict(monitor.saturated),
        saturation_fraction=monitor.fraction(),
        counters=counters,
    )


class Trainer:
    """Runs classical training and the two conversion schedules under one config."""

    def __init__(self, cfg: TrainConfig | None = None):
        """Initialize the trainer.

        Args:
            cfg: Training configuration; defaults from ``training_defaults`` if None
        """
        self.cfg = cfg or TrainConfig()
        self.cfg.validate()

    def evaluate(self, net: NetworkSpec, split: Dataset) -> EvalReport:
        return evaluate(
            net,
            split,
            batch_size=self.cfg.eval_batch_size,
            workers=self.cfg.eval_workers,
            overflow=self.cfg.overflow,
        )

    def split(self, dataset: Dataset) -> tuple[Dataset, Dataset]:
        return split_train_val(dataset, self.cfg.val_fraction, self.cfg.seed)

    # ------------------------------------------------------------------
    # Classical training
    # ------------------------------------------------------------------

    def train_classical(
        self, net: NetworkSpec, dataset: Dataset, val: Dataset | None = None
    ) -> tuple[NetworkSpec, EvalReport]:
        """Train every parameter on softmax cross-entropy, keeping the best validation epoch.

        Args:
            net: Network, initialized from ``cfg.seed`` if it has no weights yet
            dataset: Training data; split by ``cfg.val_fraction`` when ``val`` is None
            val: Explicit validation split

        Returns:
            Trained network and its validation report
        """
        if val is None:
            dataset, val = self.split(dataset)
        if not net.is_parameterized:
            net = initialize(net, self.cfg.seed)
        else:
            net = net.copy()
        for params in net.params.values():
            params.set_trainable(True)

        net = self._fit(net, dataset, val, "classical", self.cfg.seed)
        report = self.evaluate(net, val)
        net.metadata.update(self._provenance("classical", self.cfg.seed))
        logger.info(f"Classical training done: val_acc={report.accuracy:.4f}")
        return net, report

    def _fit(
        self, net: NetworkSpec, train: Dataset, val: Dataset, phase: str, seed: int
    ) -> NetworkSpec:
        cfg = self.cfg
        params = net.trainable_parameters()
        if cfg.epochs == 0 or not params:
            return net

        kwargs = {"betas": cfg.betas} if cfg.optimizer == "adam" else {"momentum": cfg.momentum}
        optimizer = make_optimizer(cfg.optimizer, params, cfg.learning_rate, **kwargs)
        rng = np.random.default_rng(seed)
        n_batches = math.ceil(len(train) / cfg.batch_size)

        best_acc, best_state, stale = -1.0, net.state(), 0
        for epoch in range(1, cfg.epochs + 1):
            monitor = SaturationMonitor()
            batches = tqdm(
                train.batches(cfg.batch_size, rng),
                total=n_batches,
                desc=f"{phase} epoch {epoch}",
                leave=False,
                disable=not progress_enabled(logger),
            )
            for batch, (images, labels) in enumerate(batches, start=1):
                with Graph() as graph:
                    logits = forward(
                        net,
                        images,
                        "train",
                        rng=rng,
                        monitor=monitor,
                        return_logits=True,
                        overflow=cfg.overflow,
                    )
                    loss = ops.softmax_cross_entropy(logits, labels)
                    if not np.isfinite(loss.item()):
                        raise DivergenceError(f"{phase}: training loss is not finite", epoch, batch)
                    optimizer.zero_grad()
                    graph.backward(loss)
                optimizer.step()
            monitor.check()

            report = self.evaluate(net, val)
            logger.info(
                f"{phase} epoch {epoch}: val_acc={report.accuracy:.4f} "
                f"val_loss={report.mean_loss:.4f}"
            )
            if report.accuracy > best_acc:
                best_acc, best_state, stale = report.accuracy, net.state(), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info(f"{phase}: early stop after epoch {epoch}")
                    break

        net.load_state(best_state)
        return net

    # ------------------------------------------------------------------
    # Conversion schedules
    # ------------------------------------------------------------------

    def train_method1(
        self, net: NetworkSpec, dataset: Dataset, test: Dataset | None = None
    ) -> MethodResult:
        """Convert layer by layer, freezing converted layers and retraining the rest."""
        return self._convert_schedule("method1", net, dataset, test)

    def train_method2(
        self, net: NetworkSpec, dataset: Dataset, test: Dataset | None = None
    ) -> MethodResult:
        """Convert layer by layer, retraining converted layers together with the rest."""
        return self._convert_schedule("method2", net, dataset, test)

    def _convert_schedule(
        self, method: Method, net: NetworkSpec, dataset: Dataset, test: Dataset | None
    ) -> MethodResult:
        cfg = self.cfg
        cfg.validate(net)
        converted = [layer.name for layer in net.layers if layer.bm]
        if converted:
            raise ConversionError(
                f"{method} starts from a classical network; already converted: "
                f"{', '.join(converted)}"
            )
        train, val = self.split(dataset)

        if cfg.depth == 0 and net.is_parameterized:
            report = self._baseline_report(net, method, val, test, 0, cfg.seed)
            return MethodResult(net=net, reports=[report], best_restart=0, base=net)

        if cfg.reuse_base and not net.is_parameterized:
            raise ValueError("reuse_base needs a network with weights")
        if net.is_parameterized and not cfg.reuse_base:
            logger.info(f"{method}: every restart retrains from scratch; given weights are unused")

        runs: list[MethodResult] = []
        for restart in range(cfg.restarts):
            seed = cfg.seed + restart
            logger.info(f"{method}: restart {restart + 1}/{cfg.restarts} (seed {seed})")
            runs.append(self._run_once(method, net, train, val, test, restart, seed))

        best = runs[0]
        for run in runs[1:]:
            if run.reports[-1].final_val > best.reports[-1].final_val:
                best = run
        logger.info(
            f"{method}: best restart {best.best_restart} "
            f"val_acc={best.reports[-1].final_val:.4f}"
        )
        return MethodResult(
            net=best.net,
            reports=best.reports,
            best_restart=best.best_restart,
            base=best.base,
            runs=runs,
        )

    def _run_once(
        self,
        method: Method,
        net: NetworkSpec,
        train: Dataset,
        val: Dataset,
        test: Dataset | None,
        restart: int,
        seed: int,
    ) -> MethodResult:
        if self.cfg.reuse_base:
            base = net.copy()
        else:
            # every restart starts over from classical training with its own seed
            base = initialize(net, seed)
            for params in base.params.values():
                params.set_trainable(True)
            base = self._fit(base, train, val, "classical", seed)

        reports = [self._baseline_report(base, method, val, test, restart, seed)]
        current = base
        for depth, name in enumerate(base.convertible_layers()[: self.cfg.depth], start=1):
            current = convert_layer(current, name)
            if method == "method1":
                current.params[name].set_trainable(False)
            else:
                for params in current.params.values():
                    params.set_trainable(True)

            before = self.evaluate(current, val)
            before_test = self.evaluate(current, test).accuracy if test is not None else None

            if method == "method1" and not current.trainable_parameters():
                logger.info(f"{method} depth {depth}: every layer converted, nothing to retrain")
                after = None
            else:
                current = self._fit(current, train, val, f"{method} depth {depth}", seed + depth)
                after = self.evaluate(current, val)

            reports.append(
                DepthReport(
                    architecture=current.architecture(),
                    depth=depth,
                    converted_prefix=converted_prefix(current, depth),
                    method=method,
                    before_val=before.accuracy,
                    after_val=after.accuracy if after is not None else None,
                    before_test=before_test,
                    after_test=(
                        self.evaluate(current, test).accuracy
                        if after is not None and test is not None
                        else None
                    ),
                    restart=restart,
                    seed=seed,
                )
            )
            logger.info(
                f"{method} depth {depth} ({name}): before={before.accuracy:.4f} "
                f"after={'-' if after is None else f'{after.accuracy:.4f}'}"
            )

        current.metadata.update(self._provenance(method, seed))
        return MethodResult(net=current, reports=reports, best_restart=restart, base=base)

    def _baseline_report(
        self,
        net: NetworkSpec,
        method: str,
        val: Dataset,
        test: Dataset | None,
        restart: int,
        seed: int,
    ) -> DepthReport:
        """Depth-0 row: the unconverted network, nothing retrained."""
        return DepthReport(
            architecture=net.architecture(),
            depth=0,
            converted_prefix="none",
            method=method,
            before_val=self.evaluate(net, val).accuracy,
            after_val=None,
            before_test=self.evaluate(net, test).accuracy if test is not None else None,
            restart=restart,
            seed=seed,
        )

    def _provenance(self, method: str, seed: int) -> dict[str, object]:
        return {"method": method, "seed": seed, "config_digest": self.cfg.digest()}
