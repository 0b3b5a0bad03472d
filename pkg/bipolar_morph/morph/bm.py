"""Bipolar morphological (BM) layer.

A classical neuron sum_i x_i w_i is split by the signs of x_i and w_i into four
paths whose products are all non-negative. Each path is approximated by its
largest term, computed in the log domain as a max-plus correlation:

    Y^kj = exp(max_l(ln ReLU((-1)^k x)_l + V^j_l))
    Y    = (Y^00 - Y^01) - (Y^10 - Y^11) + bias

with V^0 = ln w where w > 0 and V^1 = ln|w| where w < 0 (NEG_INF elsewhere).
Inside the paths only additions and maxima occur; ln and exp act on the
activations at the layer boundary.
"""

from __future__ import annotations

from collections.abc import Callable
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Protocol

import numpy as np

from bipolar_morph.autograd import ops
from bipolar_morph.autograd.tensor import Tensor, grad_enabled, no_grad, record
from bipolar_morph.bench.counters import OpTally
from bipolar_morph.config import numeric_config
from bipolar_morph.errors import DomainError, NumericError, SaturationError, ShapeError
from bipolar_morph.utils import setup_logger

logger = setup_logger(__name__)

NEG_INF = numeric_config.neg_inf

OverflowPolicy = Literal["clamp", "raise"]


@dataclass(frozen=True)
class FCGeometry:
    """Fully-connected layer: ``out_features`` neurons over ``in_features`` inputs."""

    in_features: int
    out_features: int

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_features, self.in_features)


@dataclass(frozen=True)
class ConvGeometry:
    """Convolutional layer geometry, kernel laid out as (out_ch, in_ch, kh, kw)."""

    in_ch: int
    out_ch: int
    kh: int
    kw: int
    stride: int = 1
    pad: int = 0

    @property
    def out_features(self) -> int:
        return self.out_ch

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_ch, self.in_ch, self.kh, self.kw)


Geometry = FCGeometry | ConvGeometry


class Activations(Protocol):
    """Replacement ln/exp pair (e.g. look-up tables) for inference."""

    def exp(self, x: np.ndarray) -> np.ndarray: ...

    def ln(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class BMWeights:
    """Log-domain weight pair of a BM layer plus its bias."""

    V0: Tensor
    V1: Tensor
    bias: Tensor
    geometry: Geometry

    def __post_init__(self) -> None:
        if self.V0.shape != self.V1.shape:
            raise ShapeError(f"V0 {self.V0.shape} and V1 {self.V1.shape} differ in shape")
        if self.bias.shape != (self.geometry.out_features,):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match {self.geometry.out_features} outputs"
            )
        if not self.sign_exclusive():
            raise DomainError("V0 and V1 are both finite at some coordinate")

    def sign_exclusive(self) -> bool:
        return not (np.isfinite(self.V0.data) & np.isfinite(self.V1.data)).any()

    def to_classical(self) -> np.ndarray:
        """Reconstruct the classical weights exp(V0) - exp(V1)."""
        return np.exp(self.V0.data) - np.exp(self.V1.data)

    def parameters(self) -> list[Tensor]:
        return [self.V0, self.V1, self.bias]

    def set_trainable(self, trainable: bool) -> None:
        for tensor in self.parameters():
            tensor.requires_grad = trainable

    @property
    def requires_grad(self) -> bool:
        return any(tensor.requires_grad for tensor in self.parameters())

    def copy(self) -> BMWeights:
        return BMWeights(
            V0=Tensor(self.V0.data.copy(), requires_grad=self.V0.requires_grad),
            V1=Tensor(self.V1.data.copy(), requires_grad=self.V1.requires_grad),
            bias=Tensor(self.bias.data.copy(), requires_grad=self.bias.requires_grad),
            geometry=self.geometry,
        )


@dataclass(frozen=True)
class KFactorReport:
    """Approximation quality of one non-negative path: sum = (1 + k) * M."""

    M: float
    k: float
    n_terms: int


class SignPaths(NamedTuple):
    """Exact per-path sums S^kj = sum_i p_i^kj |x_i| |w_i|."""

    s00: float
    s01: float
    s10: float
    s11: float

    def recombine(self) -> float:
        return self.s00 - self.s01 - self.s10 + self.s11


@dataclass
class SaturationMonitor:
    """Counts max-plus outputs clamped below the exponent overflow threshold, per layer."""

    saturated: dict[str, int] = field(default_factory=dict)
    activations: dict[str, int] = field(default_factory=dict)

    def record(self, layer: str, n_saturated: int, n_total: int) -> None:
        self.saturated[layer] = self.saturated.get(layer, 0) + int(n_saturated)
        self.activations[layer] = self.activations.get(layer, 0) + int(n_total)

    def merge(self, other: SaturationMonitor) -> None:
        for layer in other.activations:
            self.record(layer, other.saturated[layer], other.activations[layer])

    def fraction(self) -> float:
        total = sum(self.activations.values())
        return sum(self.saturated.values()) / total if total else 0.0

    def check(self, limit: float = numeric_config.saturation_abort_fraction) -> None:
        """Raise SaturationError once more than ``limit`` of all outputs were clamped."""
        if self.fraction() > limit:
            worst = max(self.saturated, key=lambda name: self.saturated[name])
            raise SaturationError(
                f"{self.fraction():.2%} of max-plus outputs saturated (limit {limit:.2%})",
                layer=worst,
            )

    def reset(self) -> None:
        self.saturated.clear()
        self.activations.clear()


# ---------------------------------------------------------------------------
# Conversion and diagnostics
# ---------------------------------------------------------------------------


def _infer_geometry(shape: tuple[int, ...]) -> Geometry:
    if len(shape) == 1:
        return FCGeometry(in_features=shape[0], out_features=1)
    if len(shape) == 2:
        return FCGeometry(in_features=shape[1], out_features=shape[0])
    if len(shape) == 4:
        return ConvGeometry(in_ch=shape[1], out_ch=shape[0], kh=shape[2], kw=shape[3])
    raise ShapeError(f"Cannot infer layer geometry from weight shape {shape}")


def convert_weights(
    w: Tensor | np.ndarray,
    bias: Tensor | np.ndarray | None = None,
    geometry: Geometry | None = None,
) -> BMWeights:
    """Convert classical weights to the BM log-domain pair.

    Args:
        w: Classical weights, (N,), (out, in) or (out_ch, in_ch, kh, kw)
        bias: Per-output bias, copied unchanged (zeros if None)
        geometry: Layer geometry; inferred from the weight shape if None

    Returns:
        BMWeights with V0 = ln w on w > 0, V1 = ln|w| on w < 0, NEG_INF elsewhere
    """
    weights = np.array(w.data if isinstance(w, Tensor) else w, dtype=np.float64)
    if not np.isfinite(weights).all():
        raise DomainError("Classical weights must be finite")

    if geometry is None:
        geometry = _infer_geometry(weights.shape)
    elif weights.ndim != 1 and weights.shape != geometry.weight_shape:
        raise ShapeError(f"weight shape {weights.shape} does not match {geometry}")

    v0 = np.full(weights.shape, NEG_INF)
    v1 = np.full(weights.shape, NEG_INF)
    positive, negative = weights > 0, weights < 0
    v0[positive] = np.log(weights[positive])
    v1[negative] = np.log(-weights[negative])

    if bias is None:
        b = np.zeros(geometry.out_features)
    else:
        b = np.array(bias.data if isinstance(bias, Tensor) else bias, dtype=np.float64)

    return BMWeights(V0=Tensor(v0), V1=Tensor(v1), bias=Tensor(b), geometry=geometry)


def sign_path_decompose(x: np.ndarray, w: np.ndarray) -> SignPaths:
    """Exact four-path split of a dot product; S00 - S01 - S10 + S11 = sum x_i w_i."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise ShapeError(f"x {x.shape} and w {w.shape} differ in shape")
    if not (np.isfinite(x).all() and np.isfinite(w).all()):
        raise DomainError("sign_path_decompose needs finite inputs")

    magnitude = np.abs(x) * np.abs(w)
    x_sign = (x > 0, x < 0)
    w_sign = (w > 0, w < 0)
    return SignPaths(
        *(float(magnitude[x_sign[k] & w_sign[j]].sum()) for k in (0, 1) for j in (0, 1))
    )


def k_factor(x: np.ndarray, w: np.ndarray) -> KFactorReport:
    """Largest term M and excess k of a non-negative product sum."""
    products = np.asarray(x, dtype=np.float64) * np.asarray(w, dtype=np.float64)
    if (products < 0).any():
        raise DomainError("k_factor needs x_i * w_i >= 0 for every term")
    largest = float(products.max()) if products.size else 0.0
    if largest <= 0:
        raise DomainError("k_factor is undefined when all products are zero")
    return KFactorReport(M=largest, k=float(products.sum()) / largest - 1.0, n_terms=products.size)


# ---------------------------------------------------------------------------
# Max-plus correlation
# ---------------------------------------------------------------------------


def _maxplus_rows(rows: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """out[n, o] = max_l(rows[n, l] + weights[o, l]) and the (lowest) winning l."""
    n_rows, fan_in = rows.shape
    n_out = weights.shape[0]
    step = max(1, numeric_config.maxplus_chunk_elems // max(1, n_out * fan_in))

    values = np.empty((n_rows, n_out))
    winners = np.empty((n_rows, n_out), dtype=np.intp)
    for start in range(0, n_rows, step):
        block = rows[start : start + step, None, :] + weights[None, :, :]
        index = np.argmax(block, axis=2)
        winners[start : start + step] = index
        values[start : start + step] = np.take_along_axis(block, index[..., None], axis=2)[..., 0]
    return values, winners


def _route(grad: np.ndarray, winners: np.ndarray, owner: np.ndarray, n_owner: int, fan_in: int):
    flat = (owner * fan_in + winners).ravel()
    routed = np.bincount(flat, weights=grad.ravel(), minlength=n_owner * fan_in)
    return routed.reshape(n_owner, fan_in)


def maxplus_correlate(
    Xlog: Tensor,
    V: Tensor,
    geometry: Geometry,
    *,
    layer_name: str = "bm",
    monitor: SaturationMonitor | None = None,
    tally: OpTally | None = None,
    overflow: OverflowPolicy = "clamp",
) -> Tensor:
    """Max-plus correlation of log-domain inputs with log-domain weights.

    FC: out[..., k] = max_l(Xlog[..., l] + V[k, l]) for Xlog of shape (N,) or (B, N).
    Conv: the same over each receptive field of a (B, C, H, W) input; padding
    contributes NEG_INF. Outputs above the exponent clamp are clamped (and
    counted) or raise, depending on ``overflow``.
    """
    x = Xlog.data
    if isinstance(geometry, ConvGeometry):
        if x.ndim != 4 or x.shape[1] != geometry.in_ch:
            raise ShapeError(f"{layer_name}: conv input {x.shape} vs {geometry}")
        if V.shape != geometry.weight_shape:
            raise ShapeError(f"{layer_name}: kernel {V.shape} vs {geometry}")
        g = geometry
        cols, (out_h, out_w) = ops.im2col(x, g.kh, g.kw, g.stride, g.pad, pad_value=NEG_INF)
        batch, n_pos, fan_in = cols.shape
        rows = cols.reshape(batch * n_pos, fan_in)
        weights = V.data.reshape(g.out_ch, fan_in)
    else:
        weights = V.data.reshape(-1, V.shape[-1])
        fan_in = weights.shape[1]
        if x.ndim not in (1, 2) or x.shape[-1] != fan_in:
            raise ShapeError(f"{layer_name}: fc input {x.shape} vs weights {V.shape}")
        rows = x.reshape(-1, fan_in)

    values, winners = _maxplus_rows(rows, weights)
    n_rows, n_out = values.shape

    over = values > numeric_config.exp_clamp
    if over.any():
        if overflow == "raise":
            row, col = (int(i) for i in np.argwhere(over)[0])
            raise NumericError(
                f"max-plus output {values[row, col]:.4g} overflows exp", layer_name, (row, col)
            )
        values[over] = numeric_config.exp_clamp
        logger.debug(f"{layer_name}: {int(over.sum())} max-plus outputs clamped")
    if monitor is not None:
        monitor.record(layer_name, int(over.sum()), values.size)
    if tally is not None:
        tally.add(adds=n_rows * n_out * fan_in, maxes=n_rows * n_out * (fan_in - 1))

    row_owner = np.arange(n_rows)[:, None]
    col_owner = np.arange(n_out)[None, :]

    if isinstance(geometry, ConvGeometry):
        out = values.reshape(batch, n_pos, n_out).transpose(0, 2, 1)
        out = out.reshape(batch, n_out, out_h, out_w)

        def rule(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            g_rows = grad.reshape(batch, n_out, n_pos).transpose(0, 2, 1).reshape(n_rows, n_out)
            g_rows = np.where(over, 0.0, g_rows)
            g_cols = _route(g_rows, winners, row_owner, n_rows, fan_in)
            g_x = ops.col2im(
                g_cols.reshape(batch, n_pos, fan_in),
                x.shape,
                geometry.kh,
                geometry.kw,
                geometry.stride,
                geometry.pad,
                (out_h, out_w),
            )
            g_v = _route(g_rows, winners, col_owner, n_out, fan_in)
            return g_x, g_v.reshape(V.shape)

    else:
        out = values.reshape((n_out,) if x.ndim == 1 else (x.shape[0], n_out))

        def rule(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            g_rows = np.where(over, 0.0, grad.reshape(n_rows, n_out))
            g_x = _route(g_rows, winners, row_owner, n_rows, fan_in).reshape(x.shape)
            g_v = _route(g_rows, winners, col_owner, n_out, fan_in).reshape(V.shape)
            return g_x, g_v

    return record("maxplus_correlate", (Xlog, V), out, rule)


# ---------------------------------------------------------------------------
# Four-path forward
# ---------------------------------------------------------------------------


def _activation_fns(
    activations: Activations | None,
) -> tuple[Callable[[Tensor], Tensor], Callable[[Tensor], Tensor]]:
    if activations is None:
        return ops.log, ops.exp
    lut = activations
    return (lambda t: Tensor(lut.ln(t.data))), (lambda t: Tensor(lut.exp(t.data)))


def bm_forward(
    x: Tensor,
    bw: BMWeights,
    *,
    activations: Activations | None = None,
    layer_name: str = "bm",
    monitor: SaturationMonitor | None = None,
    tally: OpTally | None = None,
    overflow: OverflowPolicy = "clamp",
) -> Tensor:
    """BM layer output (Y00 - Y01) - (Y10 - Y11) + bias.

    Args:
        x: Layer input, (N,) / (B, N) for FC geometry or (B, C, H, W) for conv
        bw: Converted layer weights
        activations: Optional table-driven ln/exp (inference only)
        layer_name: Name used in diagnostics and counters
        monitor: Receives saturation counts
        tally: Receives operation counts
        overflow: "clamp" (count saturation) or "raise" on exponent overflow

    Returns:
        Layer output of shape (B, out) / (out,) or (B, out_ch, Ho, Wo)
    """
    if not np.isfinite(x.data).all():
        raise DomainError(f"{layer_name}: input must be finite")
    if activations is not None and grad_enabled() and (x.requires_grad or bw.requires_grad):
        raise ValueError("Table activations are inference-only; call under no_grad()")

    ln, exp = _activation_fns(activations)

    def path(x_log: Tensor, v: Tensor) -> Tensor:
        return exp(
            maxplus_correlate(
                x_log,
                v,
                bw.geometry,
                layer_name=layer_name,
                monitor=monitor,
                tally=tally,
                overflow=overflow,
            )
        )

    with no_grad() if activations is not None else nullcontext():
        excitatory = ln(ops.relu(x))
        inhibitory = ln(ops.relu(ops.neg(x)))
        y0 = ops.sub(path(excitatory, bw.V0), path(excitatory, bw.V1))
        y1 = ops.sub(path(inhibitory, bw.V0), path(inhibitory, bw.V1))
        y = ops.sub(y0, y1)
        if isinstance(bw.geometry, ConvGeometry):
            out = ops.add(y, ops.reshape(bw.bias, (1, bw.geometry.out_ch, 1, 1)))
        else:
            out = ops.add(y, bw.bias)

    if tally is not None:
        tally.add(lns=2 * x.size, compares=2 * x.size, exps=4 * y.size, adds=4 * y.size)
    return out


def bm_dot(x: np.ndarray, w: np.ndarray) -> float:
    """BM approximation of a single dot product sum_i x_i w_i (zero bias)."""
    with no_grad():
        out = bm_forward(Tensor(np.asarray(x, dtype=np.float64)), convert_weights(w))
    return out.item()
