"""Dense float64 tensor with tape-based reverse-mode differentiation.

Every primitive that touches a tensor requiring gradients appends one
``Node`` to the active ``Graph``. ``backward`` walks that tape once, in
reverse recording order.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any

import numpy as np

from bipolar_morph.config import numeric_config
from bipolar_morph.errors import NumericError, ShapeError

MAX_RANK = 4

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_state = threading.local()


class Tensor:
    """Row-major float64 array with an optional gradient buffer."""

    def __init__(self, data: Any, requires_grad: bool = False):
        array = np.ascontiguousarray(data, dtype=np.float64)
        if array.ndim > MAX_RANK:
            raise ShapeError(f"rank {array.ndim} exceeds the supported maximum of {MAX_RANK}")
        if any(dim <= 0 for dim in array.shape):
            raise ShapeError(f"shape {array.shape} has a non-positive dimension")
        if numeric_config.debug and np.isnan(array).any():
            raise NumericError("NaN stored in tensor")

        self.data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # Operator sugar; the rules live in ops.py
    def __add__(self, other: Tensor) -> Tensor:
        from bipolar_morph.autograd import ops

        return ops.add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        from bipolar_morph.autograd import ops

        return ops.sub(self, other)

    def __neg__(self) -> Tensor:
        from bipolar_morph.autograd import ops

        return ops.neg(self)

    def __mul__(self, other: Tensor) -> Tensor:
        from bipolar_morph.autograd import ops

        return ops.mul(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        from bipolar_morph.autograd import ops

        return ops.matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


@dataclass(eq=False)
class Node:
    """One recorded primitive: inputs, output and the rule mapping dL/dout to dL/dinputs."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Graph:
    """Ordered tape of recorded primitives.

    Use as a context manager to scope recording to one training step:

        with Graph() as graph:
            loss = ...
            graph.backward(loss)
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> Graph:
        _graph_stack().append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _graph_stack().pop()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        for node in self.nodes:
            node.output._node = None
        self.nodes.clear()

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor reachable from ``loss``."""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        reached: dict[int, Tensor] = {id(loss): loss}

        if loss._node is not None:
            end = self.nodes.index(loss._node)
            for node in reversed(self.nodes[: end + 1]):
                upstream = grads.get(id(node.output))
                if upstream is None:
                    continue
                for tensor, grad in zip(node.inputs, node.backward(upstream), strict=True):
                    if grad is None or not tensor.requires_grad:
                        continue
                    key = id(tensor)
                    if key in grads:
                        grads[key] = grads[key] + grad
                    else:
                        grads[key] = grad
                        reached[key] = tensor

        for key, tensor in reached.items():
            if not tensor.requires_grad:
                continue
            grad = grads[key].reshape(tensor.shape)
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad

        self.clear()


def _graph_stack() -> list[Graph]:
    if not hasattr(_state, "graphs"):
        _state.graphs = [Graph()]
    stack: list[Graph] = _state.graphs
    return stack


def current_graph() -> Graph:
    """Innermost active graph of this thread (a per-thread default otherwise)."""
    return _graph_stack()[-1]


def grad_enabled() -> bool:
    return not getattr(_state, "no_grad", False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording in this thread, e.g. for evaluation passes."""
    previous = getattr(_state, "no_grad", False)
    _state.no_grad = True
    try:
        yield
    finally:
        _state.no_grad = previous


def record(op: str, inputs: Sequence[Tensor], data: np.ndarray, rule: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and tape it if any input needs gradients."""
    needs_grad = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        node = Node(op=op, inputs=tuple(inputs), output=out, backward=rule)
        current_graph().record(node)
        out._node = node
    return out


def backward(loss: Tensor) -> None:
    """Reverse sweep over the graph that recorded ``loss``."""
    graph = current_graph()
    if loss._node is not None and loss._node not in graph.nodes:
        for candidate in _graph_stack():
            if loss._node in candidate.nodes:
                graph = candidate
                break
    graph.backward(loss)
