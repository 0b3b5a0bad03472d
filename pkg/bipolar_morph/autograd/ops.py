"""Primitive operations with their registered backward rules.

Every function takes and returns ``Tensor`` objects and records itself on the
active graph when an input requires gradients. Maximum-style reductions route
the whole subgradient to the lowest index among tied maxima.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax
from scipy.special import softmax as _softmax

from bipolar_morph.autograd.tensor import Tensor, record
from bipolar_morph.errors import DomainError, NumericError, ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from e


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", (a, b), a.data + b.data, rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    if np.isneginf(a.data).any() and np.isneginf(b.data).any():
        if (np.isneginf(a.data) & np.isneginf(b.data)).any():
            raise NumericError("NEG_INF - NEG_INF is undefined")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record("sub", (a, b), a.data - b.data, rule)


def neg(a: Tensor) -> Tensor:
    return record("neg", (a,), -a.data, lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", (a, b), a.data * b.data, rule)


def relu(a: Tensor) -> Tensor:
    active = a.data > 0
    return record("relu", (a,), np.where(active, a.data, 0.0), lambda g: (g * active,))


def log(a: Tensor) -> Tensor:
    """Natural log; log(0) is NEG_INF and carries zero gradient."""
    if (a.data < 0).any():
        raise DomainError("log of a negative value")
    with np.errstate(divide="ignore"):
        out = np.log(a.data)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        positive = a.data > 0
        return (np.divide(g, a.data, out=np.zeros_like(g), where=positive),)

    return record("log", (a,), out, rule)


def exp(a: Tensor) -> Tensor:
    """Natural exp; exp(NEG_INF) is 0 with zero gradient."""
    out = np.exp(a.data)
    return record("exp", (a,), out, lambda g: (g * out,))


# ---------------------------------------------------------------------------
# Reductions and reshaping
# ---------------------------------------------------------------------------


def max(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    """Maximum along ``axis`` (all elements when None), lowest index wins ties."""
    if axis is None:
        flat = a.data.reshape(-1)
        index = int(np.argmax(flat))

        def rule_all(g: np.ndarray) -> tuple[np.ndarray]:
            grad = np.zeros(flat.size)
            grad[index] = g.reshape(-1)[0]
            return (grad.reshape(a.shape),)

        return record("max", (a,), np.asarray(flat[index]), rule_all)

    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"max: axis {axis} out of range for shape {a.shape}")
    index_nd = np.argmax(a.data, axis=axis)
    index_nd = np.expand_dims(index_nd, axis)
    out = np.take_along_axis(a.data, index_nd, axis=axis).squeeze(axis)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, index_nd, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return record("max", (a,), out, rule)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    out = np.asarray(a.data.sum(axis=axis))

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is None:
            return (np.full(a.shape, g.reshape(-1)[0]),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return record("sum", (a,), out, rule)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from e
    return record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], -1))


# ---------------------------------------------------------------------------
# Products
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix-matrix, matrix-vector, vector-matrix or vector-vector product."""
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports rank 1-2 operands, got {a.shape} @ {b.shape}")
    inner_b = b.shape[0]
    if a.shape[-1] != inner_b:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = np.asarray(a.data @ b.data)

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 2:
            return np.outer(g, b.data), a.data.T @ g
        if b.ndim == 2:
            return b.data @ g, np.outer(a.data, g)
        scalar = g.reshape(-1)[0]
        return scalar * b.data, scalar * a.data

    return record("matmul", (a, b), out, rule)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Dense layer x @ w.T + b with w laid out as (out_features, in_features)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(
            f"linear expects (B, N) input and (O, N) weights, got {x.shape}, {w.shape}"
        )
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input has {x.shape[1]} features, weights expect {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias shape {b.shape} does not match {w.shape[0]} outputs")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def rule(g: np.ndarray) -> tuple[np.ndarray, ...]:
        grads = (g @ w.data, g.T @ x.data)
        return grads if b is None else (*grads, g.sum(axis=0))

    inputs = (x, w) if b is None else (x, w, b)
    return record("linear", inputs, out, rule)


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ShapeError(f"kernel {kernel} does not fit input {size} with pad {pad}")
    return out


def im2col(
    x: np.ndarray, kh: int, kw: int, stride: int = 1, pad: int = 0, pad_value: float = 0.0
) -> tuple[np.ndarray, tuple[int, int]]:
    """Unfold (B, C, H, W) into receptive-field rows of shape (B, Ho*Wo, C*kh*kw)."""
    batch, channels, height, width = x.shape
    conv_output_size(height, kh, stride, pad)
    conv_output_size(width, kw, stride, pad)
    if pad:
        x = np.pad(
            x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="constant", constant_values=pad_value
        )
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch, out_h * out_w, channels * kh * kw)
    return cols, (out_h, out_w)


def col2im(
    cols: np.ndarray,
    x_shape: tuple[int, ...],
    kh: int,
    kw: int,
    stride: int,
    pad: int,
    out_hw: tuple[int, int],
) -> np.ndarray:
    """Fold receptive-field gradients back onto the (unpadded) input grid."""
    batch, channels, height, width = x_shape
    out_h, out_w = out_hw
    patches = cols.reshape(batch, out_h, out_w, channels, kh, kw)
    grad = np.zeros((batch, channels, height + 2 * pad, width + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            grad[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += patches[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    return grad[:, :, pad : pad + height, pad : pad + width]


def conv2d(
    x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0
) -> Tensor:
    """Cross-correlation of (B, C, H, W) with (O, C, kh, kw); valid padding by default."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    out_ch, _, kh, kw = w.shape
    if b is not None and b.shape != (out_ch,):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {out_ch} filters")

    cols, (out_h, out_w) = im2col(x.data, kh, kw, stride, pad)
    kernel = w.data.reshape(out_ch, -1)
    batch = x.shape[0]
    out = (cols @ kernel.T).transpose(0, 2, 1).reshape(batch, out_ch, out_h, out_w)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def rule(g: np.ndarray) -> tuple[np.ndarray, ...]:
        g_rows = g.reshape(batch, out_ch, out_h * out_w).transpose(0, 2, 1)
        grad_w = np.tensordot(g_rows, cols, axes=([0, 1], [0, 1])).reshape(w.shape)
        grad_x = col2im(g_rows @ kernel, x.shape, kh, kw, stride, pad, (out_h, out_w))
        if b is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=(0, 2, 3))

    inputs = (x, w) if b is None else (x, w, b)
    return record("conv2d", inputs, out, rule)


# ---------------------------------------------------------------------------
# Network layers
# ---------------------------------------------------------------------------


def maxpool2d(x: Tensor, kh: int, kw: int) -> Tensor:
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-D input, got {x.shape}")
    batch, channels, height, width = x.shape
    out_h, out_w = height // kh, width // kw
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"maxpool window {kh}x{kw} larger than input {height}x{width}")

    cropped = x.data[:, :, : out_h * kh, : out_w * kw]
    windows = (
        cropped.reshape(batch, channels, out_h, kh, out_w, kw)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, out_h, out_w, kh * kw)
    )
    index = np.argmax(windows, axis=-1)[..., None]
    out = np.take_along_axis(windows, index, axis=-1)[..., 0]

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad_windows = np.zeros_like(windows)
        np.put_along_axis(grad_windows, index, g[..., None], axis=-1)
        grad_cropped = (
            grad_windows.reshape(batch, channels, out_h, out_w, kh, kw)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, out_h * kh, out_w * kw)
        )
        grad = np.zeros_like(x.data)
        grad[:, :, : out_h * kh, : out_w * kw] = grad_cropped
        return (grad,)

    return record("maxpool2d", (x,), out, rule)


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool = True) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-p) in training, identity otherwise."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    keep = 1.0 - p
    mask = (rng.random(x.shape) < keep) / keep
    return record("dropout", (x,), x.data * mask, lambda g: (g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    probs = _softmax(x.data, axis=axis)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),)

    return record("softmax", (x,), probs, rule)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels (fused, stable)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not pair up")
    n_rows, n_classes = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeError(f"labels must lie in [0, {n_classes})")

    rows = np.arange(n_rows)
    log_probs = log_softmax(logits.data, axis=1)
    loss = -log_probs[rows, labels].mean()

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (g.reshape(-1)[0] / n_rows),)

    return record("softmax_cross_entropy", (logits,), np.asarray(loss), rule)
