"""Layer notation, network container and presets."""

from bipolar_morph.models.network import (
    ARCHITECTURES,
    INPUT_SHAPES,
    DenseParams,
    NetworkSpec,
    convert_layer,
    converted_prefix,
    forward,
    initialize,
    parse_architecture,
)
from bipolar_morph.models.notation import LayerSpec, format_architecture, parse_layers

__all__ = [
    "ARCHITECTURES",
    "INPUT_SHAPES",
    "DenseParams",
    "LayerSpec",
    "NetworkSpec",
    "convert_layer",
    "converted_prefix",
    "format_architecture",
    "forward",
    "initialize",
    "parse_architecture",
    "parse_layers",
]
