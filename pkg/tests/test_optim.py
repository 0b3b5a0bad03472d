"""Tests for the optimizers."""

import numpy as np
import pytest

from bipolar_morph.autograd.tensor import Tensor
from bipolar_morph.training.optim import SGD, Adam, make_optimizer


def _param(values, grad):
    p = Tensor(np.array(values, dtype=float), requires_grad=True)
    p.grad = np.array(grad, dtype=float)
    return p


def test_sgd_step():
    """Plain SGD moves against the gradient."""
    p = _param([1.0, 2.0], [0.5, -1.0])
    SGD([p], lr=0.1, momentum=0.0).step()
    np.testing.assert_allclose(p.data, [0.95, 2.1])


def test_sgd_momentum_accumulates():
    """The second step adds momentum times the first."""
    p = _param([0.0], [1.0])
    opt = SGD([p], lr=1.0, momentum=0.5)

    opt.step()
    opt.step()

    assert p.data[0] == pytest.approx(-(1.0 + 1.5))


def test_adam_first_step_is_lr_sized():
    """Bias correction makes the first Adam step about lr * sign(grad)."""
    p = _param([0.0, 0.0], [3.0, -0.01])
    Adam([p], lr=0.01).step()
    np.testing.assert_allclose(p.data, [-0.01, 0.01], rtol=1e-5)


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_neg_inf_entries_stay_frozen(kind):
    """Zero classical weights stay NEG_INF whatever the gradient says."""
    p = _param([-np.inf, 0.5, -np.inf], [1.0, 1.0, -1.0])
    opt = make_optimizer(kind, [p], lr=0.1)

    for _ in range(3):
        opt.step()

    assert np.isneginf(p.data[[0, 2]]).all()
    assert p.data[1] < 0.5


def test_missing_grad_is_skipped():
    """Parameters without a gradient are left alone."""
    p = Tensor(np.ones(2), requires_grad=True)
    SGD([p], lr=0.1).step()
    np.testing.assert_array_equal(p.data, np.ones(2))


def test_frozen_parameters_are_filtered():
    """Only requires_grad tensors are optimized."""
    frozen = _param([1.0], [1.0])
    frozen.requires_grad = False
    live = _param([1.0], [1.0])

    opt = SGD([frozen, live], lr=0.1)
    opt.step()

    assert opt.params == [live]
    assert frozen.data[0] == 1.0


def test_zero_grad():
    """zero_grad clears every buffer."""
    p = _param([1.0], [1.0])
    opt = Adam([p], lr=0.1)
    opt.zero_grad()
    assert p.grad is None


@pytest.mark.parametrize("lr", [0.0, -1e-3])
def test_learning_rate_must_be_positive(lr):
    """Non-positive learning rates are rejected."""
    with pytest.raises(ValueError):
        SGD([], lr=lr)


def test_make_optimizer():
    """Names are case-insensitive; unknown names fail."""
    assert isinstance(make_optimizer("Adam", [], 1e-3), Adam)
    assert isinstance(make_optimizer("sgd", [], 1e-3, momentum=0.0), SGD)
    with pytest.raises(ValueError, match="Unknown optimizer"):
        make_optimizer("rmsprop", [], 1e-3)
