"""Tests for the network container, forward pass and layer conversion."""

import numpy as np
import pytest

from bipolar_morph.autograd.tensor import Tensor
from bipolar_morph.errors import ConversionError, ParseError, ShapeError
from bipolar_morph.models.network import (
    DenseParams,
    NetworkSpec,
    convert_layer,
    converted_prefix,
    forward,
    initialize,
    parse_architecture,
)
from bipolar_morph.models.notation import BMConvSpec, BMFCSpec
from bipolar_morph.morph.bm import BMWeights, convert_weights


@pytest.fixture
def cnn1():
    """CNN1 with He-initialized weights."""
    return initialize(parse_architecture("CNN1"), seed=0)


def test_cnn1_zero_image_is_a_distribution(cnn1):
    """A blank 28x28 image gives ten probabilities summing to one."""
    probs = forward(cnn1, np.zeros((1, 1, 28, 28))).data

    assert probs.shape == (1, 10)
    assert np.all(probs >= 0)
    assert probs.sum() == pytest.approx(1.0)


def test_single_sample_is_batched(cnn1, rng):
    """A (C, H, W) sample is treated as a batch of one."""
    image = rng.uniform(size=(1, 28, 28))
    np.testing.assert_array_equal(forward(cnn1, image).data, forward(cnn1, image[None]).data)


def test_eval_mode_is_deterministic(cnn1, rng):
    """Dropout is inactive in eval mode."""
    images = rng.uniform(size=(4, 1, 28, 28))
    np.testing.assert_array_equal(forward(cnn1, images).data, forward(cnn1, images).data)


def test_train_mode_with_zero_dropout_matches_eval(rng):
    """p = 0 makes train mode identical to eval."""
    net = initialize(parse_architecture("fc1(6) - relu1 - dropout1(0) - fc2(3)", (1, 4, 4)))
    images = rng.uniform(size=(2, 1, 4, 4))

    train = forward(net, images, "train", rng=np.random.default_rng(1)).data
    np.testing.assert_array_equal(train, forward(net, images).data)


def test_logits_skip_final_softmax(cnn1, rng):
    """return_logits stops before the softmax layer."""
    images = rng.uniform(size=(2, 1, 28, 28))
    logits = forward(cnn1, images, return_logits=True).data

    expected = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(forward(cnn1, images).data, expected, atol=1e-12)


def test_batch_shape_mismatch(cnn1):
    """Images of the wrong size are rejected."""
    with pytest.raises(ShapeError):
        forward(cnn1, np.zeros((1, 1, 27, 28)))


def test_unparameterized_forward():
    """Parsed but uninitialized networks cannot run."""
    with pytest.raises(ValueError):
        forward(parse_architecture("CNN1"), np.zeros((1, 1, 28, 28)))


def test_shape_errors_name_the_layer():
    """A kernel larger than its input is reported against that layer."""
    with pytest.raises(ShapeError, match="conv2"):
        parse_architecture("conv1(4, 3, 3) - conv2(4, 7, 7)", (1, 8, 8))


def test_bad_preset_text():
    """Unknown names fall through to the notation parser."""
    with pytest.raises(ParseError):
        parse_architecture("CNN9")


@pytest.mark.parametrize(
    ("preset", "shapes"),
    [
        ("CNN1", [(30, 24, 24), (30, 24, 24), (30, 24, 24), (10,), (10,)]),
        ("CNN3", [(8, 19, 15)] * 2 + [(30, 15, 11)] * 2 + [(30, 11, 7)] * 3 + [(37,)] * 2),
    ],
)
def test_layer_shapes(preset, shapes):
    """Per-layer output shapes of the presets."""
    net = parse_architecture(preset)
    assert [shape for _, shape in net.layer_shapes()] == shapes


def test_cnn2_and_cnn4_shapes():
    """The pooled CNN2 feeds 40x8x8 into fc1; CNN4 ends in 37 classes."""
    cnn2 = parse_architecture("CNN2")
    assert cnn2.input_shape_of("fc1") == (40, 8, 8)
    assert cnn2.n_classes == 10

    cnn4 = parse_architecture("CNN4")
    assert cnn4.input_shape == (1, 21, 17)
    assert cnn4.input_shape_of("fc1") == (12, 7, 3)
    assert cnn4.n_classes == 37


def test_initialize_he_uniform(cnn1):
    """Weights are bounded by sqrt(6 / fan_in) and biases start at zero."""
    params = cnn1.params["conv1"]
    limit = np.sqrt(6.0 / 25)

    assert params.weight.shape == (30, 1, 5, 5)
    assert np.abs(params.weight.data).max() <= limit
    assert np.all(params.bias.data == 0)
    assert params.weight.requires_grad
    assert cnn1.metadata["init_seed"] == 0


def test_initialize_is_seeded():
    """Same seed, same weights."""
    a = initialize(parse_architecture("CNN1"), seed=3)
    b = initialize(parse_architecture("CNN1"), seed=3)
    np.testing.assert_array_equal(a.params["fc1"].weight.data, b.params["fc1"].weight.data)


def test_initialize_converts_bm_layers():
    """Layers parsed with bm: start as converted weights."""
    net = initialize(parse_architecture("bm:fc1(3)", (1, 2, 2)))
    assert isinstance(net.params["fc1"], BMWeights)


def test_convert_layer_round_trip(tiny_trained):
    """Converted weights reconstruct the classical ones; the input is untouched."""
    converted = convert_layer(tiny_trained, "conv1")
    original = tiny_trained.params["conv1"]
    params = converted.params["conv1"]

    assert isinstance(converted.layers[0], BMConvSpec)
    assert isinstance(tiny_trained.params["conv1"], DenseParams)
    np.testing.assert_allclose(params.to_classical(), original.weight.data, rtol=1e-12)
    np.testing.assert_array_equal(params.bias.data, original.bias.data)
    assert converted.params["fc1"].weight.data is not tiny_trained.params["fc1"].weight.data


def test_convert_fc_flattens_geometry(tiny_trained):
    """fc1 converts with its flattened fan-in."""
    converted = convert_layer(tiny_trained, "fc1")

    assert isinstance(converted.layers[3], BMFCSpec)
    assert converted.params["fc1"].geometry.in_features == 4 * 3 * 3


def test_converted_forward_is_a_distribution(tiny_trained, rng):
    """A fully converted network still outputs probabilities."""
    net = convert_layer(convert_layer(tiny_trained, "conv1"), "fc1")
    probs = forward(net, rng.uniform(size=(3, 1, 8, 8))).data
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(3))


def test_converted_network_is_exact_with_one_term_per_path(tiny_trained, rng):
    """One nonzero input pixel gives each conv output at most one product: BM equals classical."""
    images = np.zeros((4, 1, 8, 8))
    for sample, (i, j) in enumerate([(0, 0), (3, 4), (7, 7), (5, 1)]):
        images[sample, 0, i, j] = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])

    classical = forward(tiny_trained, images, return_logits=True).data
    converted = forward(convert_layer(tiny_trained, "conv1"), images, return_logits=True).data

    np.testing.assert_allclose(converted, classical, rtol=0, atol=1e-6)


def test_one_hot_weights_convert_exactly(tiny_trained, rng):
    """Kernels and rows with a single nonzero weight make every layer exact for any input."""
    net = tiny_trained.copy()
    kernel = np.zeros((4, 1, 3, 3))
    for out, (i, j) in enumerate([(0, 0), (1, 1), (2, 0), (1, 2)]):
        kernel[out, 0, i, j] = rng.uniform(0.5, 2.0) * (-1.0) ** out
    rows = np.zeros((2, 36))
    rows[0, 5], rows[1, 30] = 1.25, -0.75
    net.params["conv1"] = DenseParams(Tensor(kernel), Tensor(np.array([0.1, -0.2, 0.0, 0.3])))
    net.params["fc1"] = DenseParams(Tensor(rows), Tensor(np.array([0.05, -0.05])))
    images = rng.uniform(-1.0, 1.0, size=(5, 1, 8, 8))

    classical = forward(net, images, return_logits=True).data
    converted = forward(
        convert_layer(convert_layer(net, "conv1"), "fc1"), images, return_logits=True
    ).data

    np.testing.assert_allclose(converted, classical, rtol=0, atol=1e-6)


@pytest.mark.parametrize(
    ("layer", "message"),
    [("relu1", "not convertible"), ("missing", "not found")],
)
def test_convert_layer_rejects(tiny_trained, layer, message):
    """Only existing conv/fc layers convert."""
    with pytest.raises(ConversionError, match=message):
        convert_layer(tiny_trained, layer)


def test_convert_twice_is_rejected(tiny_trained):
    """An already converted layer cannot be converted again."""
    with pytest.raises(ConversionError, match="already"):
        convert_layer(convert_layer(tiny_trained, "conv1"), "conv1")


def test_convert_needs_weights(tiny_net):
    """Unparameterized layers have nothing to convert."""
    with pytest.raises(ConversionError, match="no trained weights"):
        convert_layer(tiny_net, "conv1")


def test_converted_prefix(tiny_net):
    """Prefix names run from the input to the depth-th convertible layer."""
    assert converted_prefix(tiny_net, 0) == "none"
    assert converted_prefix(tiny_net, 1) == "conv1"
    assert converted_prefix(tiny_net, 2) == "conv1 - relu1 - maxpool1 - fc1"
    with pytest.raises(ValueError):
        converted_prefix(tiny_net, 3)


def test_state_is_a_deep_copy(tiny_trained):
    """Mutating the live weights does not touch a saved state."""
    state = tiny_trained.state()
    tiny_trained.params["fc1"].weight.data[...] = 0.0

    assert np.any(state["fc1"].weight.data != 0)


def test_trainable_parameters_follow_flags(tiny_trained):
    """Frozen layers drop out of trainable_parameters."""
    tiny_trained.params["conv1"].set_trainable(False)
    trainable = tiny_trained.trainable_parameters()

    assert len(trainable) == 2
    assert all(t is not tiny_trained.params["conv1"].weight for t in trainable)


def test_bm_forward_matches_manual_network():
    """A one-layer BM network keeps the largest term of each sign path."""
    w = np.array([[0.5, -2.0]])
    net = NetworkSpec(
        input_shape=(1, 1, 2),
        layers=parse_architecture("bm:fc1(1)", (1, 1, 2)).layers,
        params={"fc1": convert_weights(w, np.array([0.25]))},
    )
    x = np.array([[[[3.0, 1.0]]]])

    out = forward(net, Tensor(x)).item()

    # Y00 = 3 * 0.5, Y01 = 1 * 2
    assert out == pytest.approx(1.5 - 2.0 + 0.25)
