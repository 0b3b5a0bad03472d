"""Reproduction runs on the real MNIST files (skipped unless BM_MNIST_DIR is set)."""

from dataclasses import replace

import numpy as np
import pytest

from bipolar_morph.data.idx import load_mnist
from bipolar_morph.data.serialize import model_bytes, model_from_bytes
from bipolar_morph.models.network import forward, parse_architecture
from bipolar_morph.morph.bm import convert_weights
from bipolar_morph.morph.lut import make_exp_ln_lut
from bipolar_morph.training.trainer import TrainConfig, Trainer, evaluate
from tests.conftest import MNIST_DIR, requires_mnist

pytestmark = [pytest.mark.mnist, requires_mnist]

CONFIG = TrainConfig(epochs=20, patience=5, restarts=3, eval_workers=4, seed=42)


@pytest.fixture(scope="module")
def mnist():
    """(train, test) MNIST splits."""
    return load_mnist(MNIST_DIR)


@pytest.fixture(scope="module")
def cnn1(mnist):
    """Classically trained CNN1 and its test accuracy."""
    train, test = mnist
    trainer = Trainer(CONFIG)
    net, _ = trainer.train_classical(parse_architecture("CNN1"), train)
    return net, trainer.evaluate(net, test).accuracy


@pytest.fixture(scope="module")
def method1(cnn1, mnist):
    """Method 1 sweep of CNN1 to depth 1."""
    return Trainer(replace(CONFIG, depth=1)).train_method1(cnn1[0], mnist[0], mnist[1])


@pytest.fixture(scope="module")
def method2(cnn1, mnist):
    """Method 2 sweep of CNN1 to depth 1."""
    return Trainer(replace(CONFIG, depth=1)).train_method2(cnn1[0], mnist[0], mnist[1])


def test_classical_baseline(cnn1):
    """CNN1 reaches at least 98.2% on the test set."""
    assert cnn1[1] >= 0.982


def test_direct_conversion_collapses(method2):
    """Converting conv1 without retraining lands well below the baseline but above chance."""
    before = method2.reports[1].before_test
    assert 0.09 < before < 0.90


def test_method2_recovers(cnn1, method2):
    """Method 2 with conv1 converted is within half a point of the baseline."""
    after = method2.reports[1].after_test
    assert after >= 0.983
    assert after >= cnn1[1] - 0.005


def test_method1_recovers_with_frozen_layer(method1):
    """Method 1 reaches 98.0% and leaves the BM layer bitwise untouched."""
    expected = convert_weights(method1.base.params["conv1"].weight)
    params = method1.net.params["conv1"]

    assert method1.reports[1].after_test >= 0.980
    np.testing.assert_array_equal(params.V0.data, expected.V0.data)
    np.testing.assert_array_equal(params.V1.data, expected.V1.data)


def test_lookup_tables_cost_little(method2, mnist):
    """2^16-bin exp/ln tables lose at most 0.3 points."""
    test = mnist[1]
    exact = evaluate(method2.net, test, workers=4).accuracy
    tabled = evaluate(method2.net, test, workers=4, activations=make_exp_ln_lut(1 << 16, 30.0))
    assert exact - tabled.accuracy <= 0.003


def test_trained_bm_model_round_trips(method2, mnist):
    """Saved bytes reload to a network with bitwise-equal outputs."""
    raw = model_bytes(method2.net)
    loaded = model_from_bytes(raw)
    images = mnist[1].images[:256]

    assert model_bytes(loaded) == raw
    np.testing.assert_array_equal(
        forward(loaded, images).data, forward(method2.net, images).data
    )


@pytest.mark.slow
def test_cnn2_grid(mnist):
    """Method 2 on CNN2 with both convolutions converted reaches 98.8%."""
    train, test = mnist
    trainer = Trainer(replace(CONFIG, depth=2))
    result = trainer.train_method2(parse_architecture("CNN2"), train, test)
    assert result.reports[2].after_test >= 0.988
