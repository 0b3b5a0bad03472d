"""Analytic operation counts, instrumented passes and runtime probes.

Counting rules per sample (P output positions, L fan-in, O outputs per position):

    conv / fc      mults = adds = P * L * O
    bmconv / bmfc  mults = 0
                   adds  = 4 * P * L * O + 4 * P * O   (max-plus sums, path combination, bias)
                   maxes = 4 * (P * L * O - P * O)
                   exps  = 4 * P * O
                   lns   = compares = 2 * inputs   (ln ReLU(x), ln ReLU(-x))
    relu           compares = inputs
    maxpool        maxes = outputs * (kh * kw - 1)
    softmax        exps = mults = C, adds = C - 1
    dropout        nothing in eval mode

The same rules are tallied at run time by ``forward``; ``instrumented_counts``
runs one eval pass so both can be compared.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from bipolar_morph.autograd.tensor import no_grad
from bipolar_morph.bench.counters import OP_KINDS, OpCounters
from bipolar_morph.errors import ShapeError
from bipolar_morph.models.network import NetworkSpec, forward
from bipolar_morph.models.notation import ConvSpec, FCSpec, MaxPoolSpec, ReLUSpec, SoftmaxSpec
from bipolar_morph.report.tables import TableFormat, render_table
from bipolar_morph.utils import setup_logger

logger = setup_logger(__name__)

RUNTIME_LABEL = "indicative wall-clock on this host, not a hardware latency"


def _batch_of(net: NetworkSpec, input_shape: tuple[int, ...] | None) -> int:
    if input_shape is None:
        return 1
    shape = tuple(input_shape)
    if shape == tuple(net.input_shape):
        return 1
    if len(shape) == 4 and shape[1:] == tuple(net.input_shape):
        return shape[0]
    raise ShapeError(f"input shape {shape} does not match network input {net.input_shape}")


def count_ops(net: NetworkSpec, input_shape: tuple[int, ...] | None = None) -> OpCounters:
    """Per-layer operation counts derived from layer geometry alone.

    Args:
        net: Network (weights are not needed)
        input_shape: (C, H, W) or (B, C, H, W); the network's input shape if None

    Returns:
        OpCounters with one tally per layer, in network order
    """
    batch = _batch_of(net, input_shape)
    counters = OpCounters()
    in_shape: tuple[int, ...] = tuple(net.input_shape)

    for layer, (_, out_shape) in zip(net.layers, net.layer_shapes(), strict=True):
        tally = counters.tally(layer.name, layer.kind)
        n_in = int(np.prod(in_shape)) * batch
        n_out = int(np.prod(out_shape)) * batch

        if isinstance(layer, (ConvSpec, FCSpec)):
            if isinstance(layer, ConvSpec):
                positions = out_shape[1] * out_shape[2]
                fan_in = in_shape[0] * layer.kh * layer.kw
                outputs = layer.out_ch
            else:
                positions, fan_in, outputs = 1, int(np.prod(in_shape)), layer.units
            products = batch * positions * fan_in * outputs
            if layer.bm:
                tally.add(
                    adds=4 * products + 4 * n_out,
                    maxes=4 * (products - n_out),
                    exps=4 * n_out,
                    lns=2 * n_in,
                    compares=2 * n_in,
                )
            else:
                tally.add(mults=products, adds=products)
        elif isinstance(layer, ReLUSpec):
            tally.add(compares=n_in)
        elif isinstance(layer, MaxPoolSpec):
            tally.add(maxes=n_out * (layer.kh * layer.kw - 1))
        elif isinstance(layer, SoftmaxSpec):
            classes = int(np.prod(in_shape))
            tally.add(exps=batch * classes, adds=batch * (classes - 1), mults=batch * classes)

        in_shape = out_shape
    return counters


def instrumented_counts(
    net: NetworkSpec, input_shape: tuple[int, ...] | None = None, seed: int = 0
) -> OpCounters:
    """Counts tallied by one eval-mode forward pass on random input."""
    batch = _batch_of(net, input_shape)
    x = np.random.default_rng(seed).standard_normal((batch, *net.input_shape))
    counters = OpCounters()
    with no_grad():
        forward(net, x, "eval", counters=counters)
    return counters


@dataclass(frozen=True)
class RuntimeStats:
    """Forward-pass latency summary in seconds."""

    samples: int
    median: float
    stddev: float | None
    min: float
    max: float
    counters: OpCounters
    label: str = RUNTIME_LABEL

    def to_dict(self) -> dict[str, object]:
        return {
            "samples": self.samples,
            "median_s": self.median,
            "stddev_s": self.stddev,
            "min_s": self.min,
            "max_s": self.max,
            "label": self.label,
        }


def runtime_probe(
    net: NetworkSpec, input_shape: tuple[int, ...] | None = None, reps: int = 10, seed: int = 0
) -> RuntimeStats:
    """Time ``reps`` eval-mode forward passes; the first pass is also instrumented.

    Args:
        net: Parameterized network
        input_shape: (C, H, W) or (B, C, H, W); one sample of the network input if None
        reps: Number of timed passes (>= 1)
        seed: Seed of the random input

    Returns:
        RuntimeStats; ``stddev`` is None for a single pass
    """
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")
    batch = _batch_of(net, input_shape)
    x = np.random.default_rng(seed).standard_normal((batch, *net.input_shape))

    counters = OpCounters()
    times = []
    with no_grad():
        for rep in range(reps):
            start = time.perf_counter()
            forward(net, x, "eval", counters=counters if rep == 0 else None)
            times.append(time.perf_counter() - start)

    samples = np.asarray(times)
    stats = RuntimeStats(
        samples=reps,
        median=float(np.median(samples)),
        stddev=float(samples.std(ddof=1)) if reps > 1 else None,
        min=float(samples.min()),
        max=float(samples.max()),
        counters=counters,
    )
    logger.info(
        f"Runtime probe: median {stats.median * 1e3:.3f} ms over {reps} passes ({RUNTIME_LABEL})"
    )
    return stats


class OpProfiler:
    """Side-by-side operation profiles of a classical network and its BM twin."""

    def __init__(self, input_shape: tuple[int, ...] | None = None):
        """Initialize the profiler.

        Args:
            input_shape: Shape passed to ``count_ops`` (network input if None)
        """
        self.input_shape = input_shape

    def profile(self, net: NetworkSpec) -> pd.DataFrame:
        return count_ops(net, self.input_shape).to_frame()

    def compare(self, classical: NetworkSpec, converted: NetworkSpec) -> pd.DataFrame:
        """Per-layer counts of both networks, long format with a ``variant`` column."""
        frames = []
        for variant, net in (("classical", classical), ("bm", converted)):
            frame = self.profile(net)
            frame.insert(0, "variant", variant)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def core_summary(self, classical: NetworkSpec, converted: NetworkSpec) -> pd.DataFrame:
        """Totals over conv/fc cores only, one row per variant."""
        rows = []
        for variant, net in (("classical", classical), ("bm", converted)):
            totals = count_ops(net, self.input_shape).core_totals()
            rows.append({"variant": variant, **totals.as_dict()})
        return pd.DataFrame(rows, columns=["variant", *OP_KINDS])


def counters_table(counters: OpCounters | pd.DataFrame, fmt: TableFormat = "csv") -> str:
    """Render per-layer counters as CSV or a Markdown table."""
    frame = counters.to_frame() if isinstance(counters, OpCounters) else counters
    return render_table(frame, fmt)
