"""Finite-difference check of analytic gradients."""

from collections.abc import Callable

import numpy as np

from bipolar_morph.autograd.tensor import Graph, Tensor, no_grad
from bipolar_morph.config import numeric_config


def numerical_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``, one coordinate at a time."""
    base = np.array(x, dtype=np.float64)
    grad = np.zeros_like(base)
    with no_grad():
        for i in range(base.size):
            shifted = base.copy()
            shifted.flat[i] += eps
            upper = f(Tensor(shifted)).item()
            shifted.flat[i] -= 2 * eps
            lower = f(Tensor(shifted)).item()
            grad.flat[i] = (upper - lower) / (2 * eps)
    return grad


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = numeric_config.grad_check_eps
) -> float:
    """Largest relative disagreement between backprop and central differences.

    The error per coordinate is |analytic - numeric| / max(1, |numeric|). ``x``
    must sit away from max ties and ReLU kinks by more than ``eps``.

    Args:
        f: Scalar-valued tensor function
        x: Point to check at (not modified)
        eps: Finite-difference step

    Returns:
        Maximum relative error over all coordinates
    """
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Graph() as graph:
        out = f(leaf)
        graph.backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    numeric = numerical_gradient(f, x.data, eps)
    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(error.max())
