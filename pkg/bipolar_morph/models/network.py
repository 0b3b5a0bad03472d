"""Sequential network container, forward pass and layer conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from bipolar_morph.autograd import ops
from bipolar_morph.autograd.tensor import Tensor
from bipolar_morph.bench.counters import OpCounters
from bipolar_morph.config import training_defaults
from bipolar_morph.errors import ConversionError, ShapeError
from bipolar_morph.models.notation import (
    ConvSpec,
    DropoutSpec,
    FCSpec,
    LayerSpec,
    MaxPoolSpec,
    ReLUSpec,
    SoftmaxSpec,
    format_architecture,
    parse_layers,
    to_bm,
)
from bipolar_morph.morph.bm import (
    Activations,
    BMWeights,
    ConvGeometry,
    FCGeometry,
    Geometry,
    OverflowPolicy,
    SaturationMonitor,
    bm_forward,
    convert_weights,
)
from bipolar_morph.utils import setup_logger

logger = setup_logger(__name__)

Mode = Literal["train", "eval"]

DEFAULT_INPUT_SHAPE = (1, 28, 28)

ARCHITECTURES = {
    "CNN1": "conv1(30, 5, 5) - relu1 - dropout1(0,2) - fc1(10) - softmax1",
    "CNN2": (
        "conv1(40, 5, 5) - relu1 - maxpool1(2, 2) - conv2(40, 5, 5) - relu2 - fc1(200)"
        " - relu3 - dropout1(0,3) - fc2(10) - softmax1"
    ),
    "CNN3": (
        "conv1(8, 3, 3) - relu1 - conv2(30, 5, 5) - relu2 - conv3(30, 5, 5) - relu3"
        " - dropout1(0,25) - fc1(37) - softmax1"
    ),
    "CNN4": (
        "conv1(8, 3, 3) - relu1 - conv2(8, 5, 5) - relu2 - conv3(8, 3, 3) - relu3"
        " - dropout1(0,25) - conv4(12, 5, 5) - relu4 - conv5(12, 3, 3) - relu5"
        " - conv6(12, 1, 1) - relu6 - fc1(37) - softmax1"
    ),
}

# MNIST digits for CNN1/CNN2, 21x17 symbol crops for CNN3/CNN4
INPUT_SHAPES = {
    "CNN1": (1, 28, 28),
    "CNN2": (1, 28, 28),
    "CNN3": (1, 21, 17),
    "CNN4": (1, 21, 17),
}


@dataclass
class DenseParams:
    """Classical conv/fc weights and bias."""

    weight: Tensor
    bias: Tensor

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def set_trainable(self, trainable: bool) -> None:
        self.weight.requires_grad = trainable
        self.bias.requires_grad = trainable

    def copy(self) -> DenseParams:
        return DenseParams(
            weight=Tensor(self.weight.data.copy(), requires_grad=self.weight.requires_grad),
            bias=Tensor(self.bias.data.copy(), requires_grad=self.bias.requires_grad),
        )


LayerParams = DenseParams | BMWeights


@dataclass
class NetworkSpec:
    """Ordered layers with their parameter store.

    ``params`` maps a conv/fc layer name to DenseParams, or to BMWeights once
    the layer is converted. Unparameterized specs (fresh from the parser) have
    an empty store.
    """

    input_shape: tuple[int, int, int]
    layers: list[LayerSpec]
    params: dict[str, LayerParams] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"No layer named {name!r}")

    def layer_index(self, name: str) -> int:
        return [layer.name for layer in self.layers].index(name)

    def convertible_layers(self) -> list[str]:
        """Conv/fc layer names (classical or already converted) in network order."""
        return [layer.name for layer in self.layers if layer.convertible]

    def converted_layers(self) -> list[str]:
        return [layer.name for layer in self.layers if layer.bm]

    @property
    def is_parameterized(self) -> bool:
        return all(name in self.params for name in self.convertible_layers())

    @property
    def n_classes(self) -> int:
        return self.layer_shapes()[-1][1][0]

    def architecture(self) -> str:
        return format_architecture(self.layers)

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Per-sample output shape of every layer, checking conformity on the way."""
        shape: tuple[int, ...] = tuple(self.input_shape)
        shapes = []
        for layer in self.layers:
            shape = _output_shape(layer, shape)
            shapes.append((layer.name, shape))
        return shapes

    def input_shape_of(self, name: str) -> tuple[int, ...]:
        index = self.layer_index(name)
        if index == 0:
            return tuple(self.input_shape)
        return self.layer_shapes()[index - 1][1]

    def geometry(self, name: str) -> Geometry:
        layer = self.layer(name)
        in_shape = self.input_shape_of(name)
        if isinstance(layer, ConvSpec):
            return ConvGeometry(
                in_shape[0], layer.out_ch, layer.kh, layer.kw, layer.stride, layer.pad
            )
        if isinstance(layer, FCSpec):
            return FCGeometry(in_features=int(np.prod(in_shape)), out_features=layer.units)
        raise ConversionError(f"{name!r} ({layer.kind}) has no weight geometry")

    def parameters(self) -> list[Tensor]:
        return [tensor for params in self.params.values() for tensor in params.parameters()]

    def trainable_parameters(self) -> list[Tensor]:
        return [tensor for tensor in self.parameters() if tensor.requires_grad]

    def state(self) -> dict[str, LayerParams]:
        """Deep copy of the parameter store, e.g. to keep the best epoch."""
        return {name: params.copy() for name, params in self.params.items()}

    def load_state(self, state: dict[str, LayerParams]) -> None:
        self.params = {name: params.copy() for name, params in state.items()}

    def copy(self) -> NetworkSpec:
        return NetworkSpec(
            input_shape=tuple(self.input_shape),  # type: ignore[arg-type]
            layers=list(self.layers),
            params=self.state(),
            metadata=dict(self.metadata),
        )


def _output_shape(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, ConvSpec):
        if len(shape) != 3:
            raise ShapeError(f"{layer.name}: convolution needs a (C, H, W) input, got {shape}")
        channels, height, width = shape
        try:
            out_h = ops.conv_output_size(height, layer.kh, layer.stride, layer.pad)
            out_w = ops.conv_output_size(width, layer.kw, layer.stride, layer.pad)
        except ShapeError as e:
            raise ShapeError(f"{layer.name}: {e}") from e
        return (layer.out_ch, out_h, out_w)
    if isinstance(layer, FCSpec):
        return (layer.units,)
    if isinstance(layer, MaxPoolSpec):
        if len(shape) != 3:
            raise ShapeError(f"{layer.name}: pooling needs a (C, H, W) input, got {shape}")
        channels, height, width = shape
        if height < layer.kh or width < layer.kw:
            raise ShapeError(f"{layer.name}: window {layer.kh}x{layer.kw} exceeds {height}x{width}")
        return (channels, height // layer.kh, width // layer.kw)
    return shape


def parse_architecture(
    text: str, input_shape: tuple[int, int, int] | None = None
) -> NetworkSpec:
    """Parse notation (or a preset name such as "CNN1") into an unparameterized network.

    Args:
        text: Architecture notation or a key of ``ARCHITECTURES``
        input_shape: (C, H, W); the preset's shape or 1x28x28 if None

    Returns:
        NetworkSpec with an empty parameter store
    """
    preset = text.strip().upper()
    if preset in ARCHITECTURES:
        text = ARCHITECTURES[preset]
        input_shape = input_shape or INPUT_SHAPES[preset]
    shape = tuple(input_shape or DEFAULT_INPUT_SHAPE)
    if len(shape) != 3 or any(dim < 1 for dim in shape):
        raise ShapeError(f"input shape must be positive (C, H, W), got {shape}")

    net = NetworkSpec(input_shape=shape, layers=parse_layers(text))  # type: ignore[arg-type]
    net.layer_shapes()
    if preset in ARCHITECTURES:
        net.metadata["preset"] = preset
    return net


def initialize(net: NetworkSpec, seed: int = training_defaults.random_seed) -> NetworkSpec:
    """He-uniform weights (limit sqrt(6 / fan_in)) and zero biases for every conv/fc layer.

    Layers already marked BM are initialized classically and then converted.
    """
    rng = np.random.default_rng(seed)
    out = net.copy()
    out.params = {}
    for name in out.convertible_layers():
        geometry = out.geometry(name)
        if isinstance(geometry, ConvGeometry):
            fan_in = geometry.in_ch * geometry.kh * geometry.kw
        else:
            fan_in = geometry.in_features
        limit = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-limit, limit, size=geometry.weight_shape)
        bias = np.zeros(geometry.out_features)

        params: LayerParams
        if out.layer(name).bm:
            params = convert_weights(weight, bias, geometry)
        else:
            params = DenseParams(Tensor(weight), Tensor(bias))
        params.set_trainable(True)
        out.params[name] = params
    out.metadata["init_seed"] = seed
    return out


def forward(
    net: NetworkSpec,
    batch: Tensor | np.ndarray,
    mode: Mode = "eval",
    *,
    rng: np.random.Generator | None = None,
    counters: OpCounters | None = None,
    monitor: SaturationMonitor | None = None,
    activations: Activations | None = None,
    return_logits: bool = False,
    overflow: OverflowPolicy = "clamp",
) -> Tensor:
    """Apply the layers in order.

    Args:
        net: Parameterized network
        batch: (B, C, H, W) or a single (C, H, W) sample
        mode: "train" enables dropout; "eval" is deterministic
        rng: Dropout mask generator (train mode)
        counters: Receives per-layer operation counts
        monitor: Receives BM saturation counts
        activations: Table ln/exp for BM layers (inference only)
        return_logits: Stop before a final softmax layer
        overflow: BM exponent overflow policy

    Returns:
        (B, classes) probabilities, or logits when ``return_logits``
    """
    if not net.is_parameterized:
        raise ValueError("Network has no weights; call initialize() or load a model first")
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    if x.shape == tuple(net.input_shape):
        x = ops.reshape(x, (1, *x.shape))
    if x.ndim != 4 or x.shape[1:] != tuple(net.input_shape):
        raise ShapeError(f"batch shape {x.shape} does not match input shape {net.input_shape}")
    if mode == "train" and rng is None:
        rng = np.random.default_rng()

    last = len(net.layers) - 1
    for index, layer in enumerate(net.layers):
        if return_logits and index == last and isinstance(layer, SoftmaxSpec):
            break
        tally = counters.tally(layer.name, layer.kind) if counters is not None else None
        try:
            x = _apply(net, layer, x, mode, rng, tally, monitor, activations, overflow)
        except ShapeError as e:
            if str(e).startswith(f"{layer.name}:"):
                raise
            raise ShapeError(f"{layer.name}: {e}") from e
    return x


def _apply(
    net: NetworkSpec,
    layer: LayerSpec,
    x: Tensor,
    mode: Mode,
    rng: np.random.Generator | None,
    tally: Any,
    monitor: SaturationMonitor | None,
    activations: Activations | None,
    overflow: OverflowPolicy,
) -> Tensor:
    batch = x.shape[0]

    if layer.bm:
        params = net.params[layer.name]
        assert isinstance(params, BMWeights)
        if isinstance(layer, FCSpec) and x.ndim > 2:
            x = ops.flatten(x)
        return bm_forward(
            x,
            params,
            activations=activations,
            layer_name=layer.name,
            monitor=monitor,
            tally=tally,
            overflow=overflow,
        )

    if isinstance(layer, ConvSpec):
        params = net.params[layer.name]
        assert isinstance(params, DenseParams)
        out = ops.conv2d(x, params.weight, params.bias, layer.stride, layer.pad)
        if tally is not None:
            fan_in = x.shape[1] * layer.kh * layer.kw
            products = batch * out.shape[2] * out.shape[3] * layer.out_ch * fan_in
            tally.add(mults=products, adds=products)
        return out

    if isinstance(layer, FCSpec):
        params = net.params[layer.name]
        assert isinstance(params, DenseParams)
        if x.ndim > 2:
            x = ops.flatten(x)
        if tally is not None:
            tally.add(mults=batch * x.shape[1] * layer.units, adds=batch * x.shape[1] * layer.units)
        return ops.linear(x, params.weight, params.bias)

    if isinstance(layer, ReLUSpec):
        if tally is not None:
            tally.add(compares=x.size)
        return ops.relu(x)

    if isinstance(layer, MaxPoolSpec):
        out = ops.maxpool2d(x, layer.kh, layer.kw)
        if tally is not None:
            tally.add(maxes=out.size * (layer.kh * layer.kw - 1))
        return out

    if isinstance(layer, DropoutSpec):
        train = mode == "train"
        if tally is not None and train and layer.p > 0:
            tally.add(mults=x.size)
        return ops.dropout(x, layer.p, rng or np.random.default_rng(), train=train)

    if isinstance(layer, SoftmaxSpec):
        if x.ndim > 2:
            x = ops.flatten(x)
        if tally is not None:
            classes = x.shape[1]
            tally.add(exps=batch * classes, adds=batch * (classes - 1), mults=batch * classes)
        return ops.softmax(x, axis=1)

    raise TypeError(f"Unsupported layer spec {layer!r}")


def convert_layer(net: NetworkSpec, layer_name: str) -> NetworkSpec:
    """Return a copy of ``net`` with one conv/fc layer replaced by its BM counterpart.

    The new layer's weights are ``convert_weights`` of the trained classical
    weights; every other layer and parameter is copied unchanged.
    """
    names = [layer.name for layer in net.layers]
    if layer_name not in names:
        raise ConversionError(f"Layer {layer_name!r} not found")
    index = names.index(layer_name)
    layer = net.layers[index]
    if layer.bm:
        raise ConversionError(f"Layer {layer_name!r} is already a BM layer")
    if not layer.convertible:
        raise ConversionError(f"Layer {layer_name!r} ({layer.kind}) is not convertible")
    params = net.params.get(layer_name)
    if not isinstance(params, DenseParams):
        raise ConversionError(f"Layer {layer_name!r} has no trained weights to convert")

    out = net.copy()
    geometry = out.geometry(layer_name)
    bm_params = convert_weights(params.weight, params.bias, geometry)
    bm_params.set_trainable(params.weight.requires_grad)
    out.params[layer_name] = bm_params
    out.layers[index] = to_bm(layer)

    n_dead = int((~np.isfinite(bm_params.V0.data) & ~np.isfinite(bm_params.V1.data)).sum())
    logger.info(f"Converted {layer_name} to {out.layers[index].kind} ({n_dead} zero weights)")
    return out


def converted_prefix(net: NetworkSpec, depth: int) -> str:
    """Layer names from the input up to the ``depth``-th convertible layer ("none" for 0)."""
    if depth == 0:
        return "none"
    convertible = net.convertible_layers()
    if depth > len(convertible):
        raise ValueError(f"depth {depth} exceeds {len(convertible)} convertible layers")
    stop = net.layer_index(convertible[depth - 1])
    return " - ".join(layer.name for layer in net.layers[: stop + 1])
