"""Layer specs and the hyphen-separated architecture notation.

    conv1(30, 5, 5) - relu1 - dropout1(0,2) - fc1(10) - softmax1

Each item is ``[bm:]<kind><index>[(<args>)]``. ``conv(n, w_x, w_y)`` has ``n``
filters of width ``w_x`` and height ``w_y``, optionally followed by stride and
padding. Dropout probabilities accept a decimal comma, so ``dropout1(0,2)``
and ``dropout1(0.2)`` are the same layer. The grammar is in docs/notation.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from bipolar_morph.errors import ParseError


@dataclass(frozen=True)
class LayerSpec:
    """A named layer in a sequential network."""

    name: str

    kind: ClassVar[str] = ""
    bm: ClassVar[bool] = False
    convertible: ClassVar[bool] = False


@dataclass(frozen=True)
class ConvSpec(LayerSpec):
    out_ch: int
    kh: int
    kw: int
    stride: int = 1
    pad: int = 0

    kind: ClassVar[str] = "conv"
    convertible: ClassVar[bool] = True

    def __post_init__(self) -> None:
        _check_positive(self.name, out_ch=self.out_ch, kh=self.kh, kw=self.kw, stride=self.stride)
        if self.pad < 0:
            raise ValueError(f"{self.name}: padding must be non-negative, got {self.pad}")


@dataclass(frozen=True)
class FCSpec(LayerSpec):
    units: int

    kind: ClassVar[str] = "fc"
    convertible: ClassVar[bool] = True

    def __post_init__(self) -> None:
        _check_positive(self.name, units=self.units)


@dataclass(frozen=True)
class BMConvSpec(ConvSpec):
    kind: ClassVar[str] = "bmconv"
    bm: ClassVar[bool] = True


@dataclass(frozen=True)
class BMFCSpec(FCSpec):
    kind: ClassVar[str] = "bmfc"
    bm: ClassVar[bool] = True


@dataclass(frozen=True)
class ReLUSpec(LayerSpec):
    kind: ClassVar[str] = "relu"


@dataclass(frozen=True)
class MaxPoolSpec(LayerSpec):
    kh: int
    kw: int

    kind: ClassVar[str] = "maxpool"

    def __post_init__(self) -> None:
        _check_positive(self.name, kh=self.kh, kw=self.kw)


@dataclass(frozen=True)
class DropoutSpec(LayerSpec):
    p: float

    kind: ClassVar[str] = "dropout"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"{self.name}: dropout probability must be in [0, 1), got {self.p}")


@dataclass(frozen=True)
class SoftmaxSpec(LayerSpec):
    kind: ClassVar[str] = "softmax"


def _check_positive(name: str, **values: int) -> None:
    for field_name, value in values.items():
        if value < 1:
            raise ValueError(f"{name}: {field_name} must be positive, got {value}")


def to_bm(layer: LayerSpec) -> LayerSpec:
    """The BM counterpart of a classical conv/fc spec, same name and geometry."""
    if isinstance(layer, ConvSpec) and not layer.bm:
        return BMConvSpec(layer.name, layer.out_ch, layer.kh, layer.kw, layer.stride, layer.pad)
    if isinstance(layer, FCSpec) and not layer.bm:
        return BMFCSpec(layer.name, layer.units)
    raise ValueError(f"{layer.name} ({layer.kind}) has no BM counterpart")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_ITEM = re.compile(r"(?P<bm>bm:)?(?P<name>[A-Za-z_][A-Za-z_0-9]*)")
_NUMBER = re.compile(r"\d+(\.\d+)?")
_ARITY = {
    "conv": (3, 5),
    "fc": (1,),
    "relu": (0,),
    "maxpool": (2,),
    "dropout": (1,),
    "softmax": (0,),
}


def _skip_space(text: str, pos: int) -> int:
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def _parse_args(body: str, offset: int) -> list[str]:
    if not body.strip():
        return []
    tokens = []
    cursor = offset
    for raw in body.split(","):
        token = raw.strip()
        if not _NUMBER.fullmatch(token):
            raise ParseError(f"expected a number, got {token!r}", cursor)
        tokens.append(token)
        cursor += len(raw) + 1
    return tokens


def _build(kind: str, name: str, bm: bool, args: list[str], offset: int) -> LayerSpec:
    if kind not in _ARITY:
        raise ParseError(f"unknown layer kind {kind!r} in {name!r}", offset)
    if bm and kind not in ("conv", "fc"):
        raise ParseError(f"{name!r} is not convertible to a BM layer", offset)

    if kind == "dropout" and len(args) == 2 and all(a.isdigit() for a in args):
        args = [f"{args[0]}.{args[1]}"]
    if len(args) not in _ARITY[kind]:
        expected = " or ".join(str(n) for n in _ARITY[kind])
        raise ParseError(f"{name!r} takes {expected} arguments, got {len(args)}", offset)

    try:
        if kind == "dropout":
            return DropoutSpec(name, float(args[0]))
        if not all(a.isdigit() for a in args):
            raise ParseError(f"{name!r} takes integer arguments", offset)
        values = [int(a) for a in args]
        if kind == "conv":
            out_ch, kw, kh, *rest = values
            cls = BMConvSpec if bm else ConvSpec
            return cls(name, out_ch, kh, kw, *rest)
        if kind == "fc":
            return (BMFCSpec if bm else FCSpec)(name, values[0])
        if kind == "maxpool":
            return MaxPoolSpec(name, kh=values[1], kw=values[0])
        return ReLUSpec(name) if kind == "relu" else SoftmaxSpec(name)
    except ValueError as e:
        if isinstance(e, ParseError):
            raise
        raise ParseError(str(e), offset) from e


def parse_layers(text: str) -> list[LayerSpec]:
    """Parse architecture notation into an ordered list of layer specs.

    Args:
        text: Hyphen-separated layer items, e.g. "conv1(30, 5, 5) - relu1 - fc1(10)"

    Returns:
        Layer specs in network order

    Raises:
        ParseError: With ``offset`` pointing into ``text``
    """
    if not text.strip():
        raise ParseError("empty architecture", 0)

    layers: list[LayerSpec] = []
    seen: set[str] = set()
    pos = 0
    while True:
        pos = _skip_space(text, pos)
        if pos >= len(text):
            raise ParseError("dangling separator at end of architecture", pos)
        match = _ITEM.match(text, pos)
        if match is None:
            raise ParseError(f"expected a layer at offset {pos}", pos)

        start = pos
        name = match.group("name")
        kind = name.rstrip("0123456789").lower()
        pos = _skip_space(text, match.end())

        args: list[str] = []
        if pos < len(text) and text[pos] == "(":
            close = text.find(")", pos)
            if close < 0:
                raise ParseError("unclosed parenthesis", pos)
            args = _parse_args(text[pos + 1 : close], pos + 1)
            pos = close + 1

        if name in seen:
            raise ParseError(f"duplicate layer name {name!r}", start)
        seen.add(name)
        layers.append(_build(kind, name, match.group("bm") is not None, args, start))

        pos = _skip_space(text, pos)
        if pos >= len(text):
            return layers
        if text[pos] != "-":
            raise ParseError(f"expected '-' between layers, got {text[pos]!r}", pos)
        pos += 1


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def format_layer(layer: LayerSpec) -> str:
    prefix = "bm:" if layer.bm else ""
    if isinstance(layer, ConvSpec):
        args = [layer.out_ch, layer.kw, layer.kh]
        if (layer.stride, layer.pad) != (1, 0):
            args += [layer.stride, layer.pad]
        return f"{prefix}{layer.name}({', '.join(str(a) for a in args)})"
    if isinstance(layer, FCSpec):
        return f"{prefix}{layer.name}({layer.units})"
    if isinstance(layer, MaxPoolSpec):
        return f"{layer.name}({layer.kw}, {layer.kh})"
    if isinstance(layer, DropoutSpec):
        # positional digits only: the grammar has no exponent
        return f"{layer.name}({np.format_float_positional(layer.p, trim='0')})"
    return layer.name


def format_architecture(layers: list[LayerSpec]) -> str:
    """Print layers back into notation that parses to the same specs."""
    return " - ".join(format_layer(layer) for layer in layers)
