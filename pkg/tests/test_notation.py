"""Tests for the architecture notation."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bipolar_morph.errors import ParseError
from bipolar_morph.models.network import ARCHITECTURES
from bipolar_morph.models.notation import (
    BMConvSpec,
    BMFCSpec,
    ConvSpec,
    DropoutSpec,
    FCSpec,
    MaxPoolSpec,
    ReLUSpec,
    SoftmaxSpec,
    format_architecture,
    parse_layers,
    to_bm,
)


def test_parse_cnn1():
    """The CNN1 string parses into its five layers."""
    layers = parse_layers("conv1(30, 5, 5) - relu1 - dropout1(0,2) - fc1(10) - softmax1")

    assert layers == [
        ConvSpec("conv1", out_ch=30, kh=5, kw=5),
        ReLUSpec("relu1"),
        DropoutSpec("dropout1", p=0.2),
        FCSpec("fc1", units=10),
        SoftmaxSpec("softmax1"),
    ]


def test_parse_single_fc():
    """A one-layer network."""
    assert parse_layers("fc1(37)") == [FCSpec("fc1", 37)]


def test_decimal_point_and_comma_agree():
    """dropout1(0,2) and dropout1(0.2) are the same layer."""
    assert parse_layers("dropout1(0,2)") == parse_layers("dropout1(0.2)")


def test_conv_width_then_height():
    """conv(n, w_x, w_y): the second argument is the kernel width."""
    (layer,) = parse_layers("conv1(8, 3, 5)")
    assert (layer.kw, layer.kh) == (3, 5)


def test_conv_stride_and_padding():
    """Two optional trailing arguments set stride and padding."""
    (layer,) = parse_layers("conv1(8, 3, 3, 2, 1)")
    assert (layer.stride, layer.pad) == (2, 1)


def test_bm_prefix():
    """bm: marks converted layers."""
    layers = parse_layers("bm:conv1(4, 3, 3) - relu1 - bm:fc1(10)")

    assert isinstance(layers[0], BMConvSpec) and layers[0].kind == "bmconv"
    assert isinstance(layers[2], BMFCSpec) and layers[2].bm


def test_maxpool_arguments():
    """maxpool(w, h)."""
    assert parse_layers("maxpool1(2, 3)") == [MaxPoolSpec("maxpool1", kh=3, kw=2)]


@pytest.mark.parametrize(
    ("text", "offset"),
    [
        ("conv1(30, 5", 5),
        ("", 0),
        ("fc1(10) - ", 10),
        ("fc1(10) fc2(3)", 8),
        ("fc1(10) - fc1(3)", 10),
        ("pool1(2, 2)", 0),
        ("bm:relu1", 0),
        ("conv1(30, 5)", 0),
        ("fc1(1.5)", 0),
        ("fc1(ten)", 4),
    ],
)
def test_parse_errors_carry_offsets(text, offset):
    """Malformed notation raises ParseError pointing into the text."""
    with pytest.raises(ParseError) as info:
        parse_layers(text)
    assert info.value.offset == offset


def test_invalid_values_become_parse_errors():
    """A dropout of 1.0 or zero units are reported as parse errors."""
    with pytest.raises(ParseError):
        parse_layers("dropout1(1.0)")
    with pytest.raises(ParseError):
        parse_layers("fc1(0)")


def test_to_bm_keeps_geometry():
    """The BM twin has the same name and geometry."""
    conv = ConvSpec("conv2", 40, 5, 5, stride=2, pad=1)
    twin = to_bm(conv)

    assert isinstance(twin, BMConvSpec)
    expected = ("conv2", 40, 5, 5, 2, 1)
    assert (twin.name, twin.out_ch, twin.kh, twin.kw, twin.stride, twin.pad) == expected
    with pytest.raises(ValueError):
        to_bm(ReLUSpec("relu1"))


@pytest.mark.parametrize("preset", sorted(ARCHITECTURES))
def test_presets_print_stably(preset):
    """parse(print(parse(s))) == parse(s) for every preset."""
    layers = parse_layers(ARCHITECTURES[preset])
    assert parse_layers(format_architecture(layers)) == layers


layer_items = st.one_of(
    st.builds(lambda n, k: f"conv({n}, {k}, {k})", st.integers(1, 64), st.integers(1, 7)),
    st.builds(lambda n: f"fc({n})", st.integers(1, 512)),
    st.builds(lambda bm, n: f"{bm}fc({n})", st.sampled_from(["", "bm:"]), st.integers(1, 9)),
    st.just("relu"),
    st.builds(lambda k: f"maxpool({k}, {k})", st.integers(1, 3)),
    st.builds(lambda p: f"dropout({p})", st.sampled_from(["0.1", "0,25", "0.5"])),
)


@settings(max_examples=50, deadline=None)
@given(items=st.lists(layer_items, min_size=1, max_size=8))
def test_print_round_trip(items):
    """Printing parsed notation and parsing it again yields the same specs."""
    named = [
        item.replace("(", f"{i}(", 1) if "(" in item else f"{item}{i}"
        for i, item in enumerate(items)
    ]
    layers = parse_layers(" - ".join(named))
    assert parse_layers(format_architecture(layers)) == layers


@pytest.mark.parametrize(
    ("p", "text"),
    [(1e-05, "dropout1(0.00001)"), (0.0, "dropout1(0.0)"), (0.25, "dropout1(0.25)")],
)
def test_dropout_prints_without_exponent(p, text):
    """Small probabilities print in positional digits the grammar accepts."""
    assert format_architecture([DropoutSpec("dropout1", p=p)]) == text


@settings(max_examples=200, deadline=None)
@given(p=st.floats(0.0, 1.0, exclude_max=True, allow_nan=False))
def test_dropout_probability_round_trips(p):
    """Every valid probability prints and parses back to the same value."""
    layers = [DropoutSpec("dropout1", p=p)]
    assert parse_layers(format_architecture(layers)) == layers
