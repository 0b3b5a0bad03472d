"""First-order optimizers over Tensor parameters.

Updates touch finite entries only: log-domain BM weights stored as NEG_INF
stay NEG_INF, so a zero classical weight never comes back to life.
"""

from __future__ import annotations

import numpy as np

from bipolar_morph.autograd.tensor import Tensor
from bipolar_morph.config import training_defaults


class Optimizer:
    """Base class; ``step`` applies one update from the current ``.grad`` buffers."""

    def __init__(self, params: list[Tensor], lr: float):
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}")
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self._live = [np.isfinite(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for index, p in enumerate(self.params):
            if p.grad is None:
                continue
            live = self._live[index]
            grad = np.where(live, p.grad, 0.0)
            p.data[live] -= self._update(index, grad)[live]

    def _update(self, index: int, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    """Stochastic gradient descent with (heavy-ball) momentum."""

    def __init__(
        self, params: list[Tensor], lr: float, momentum: float = training_defaults.momentum
    ):
        super().__init__(params, lr)
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def _update(self, index: int, grad: np.ndarray) -> np.ndarray:
        velocity = self.momentum * self._velocity[index] + grad
        self._velocity[index] = velocity
        return self.lr * velocity


class Adam(Optimizer):
    """Adam with bias-corrected first and second moments."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        betas: tuple[float, float] = training_defaults.betas,
        eps: float = 1e-8,
    ):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self) -> None:
        self._t += 1
        super().step()

    def _update(self, index: int, grad: np.ndarray) -> np.ndarray:
        self._m[index] = self.beta1 * self._m[index] + (1 - self.beta1) * grad
        self._v[index] = self.beta2 * self._v[index] + (1 - self.beta2) * grad**2
        m_hat = self._m[index] / (1 - self.beta1**self._t)
        v_hat = self._v[index] / (1 - self.beta2**self._t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, params: list[Tensor], lr: float, **kwargs: object) -> Optimizer:
    """Build an optimizer by name ("adam" or "sgd")."""
    kind = kind.lower()
    if kind == "adam":
        return Adam(params, lr, **kwargs)  # type: ignore[arg-type]
    if kind == "sgd":
        return SGD(params, lr, **kwargs)  # type: ignore[arg-type]
    raise ValueError(f"Unknown optimizer: {kind}")
