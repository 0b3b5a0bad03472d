"""Versioned binary model files.

Layout (little-endian throughout, documented in docs/model_format.md):

    magic      4 bytes   b"BMNF"
    version    u16
    arch       u32 length + UTF-8 architecture notation
    input      3 x u32   (C, H, W)
    metadata   u32 length + UTF-8 JSON (sorted keys)
    n_blocks   u32
    block*     u16 length + UTF-8 layer name, u8 kind tag, u8 n_tensors,
               then per tensor: u8 role tag, u8 ndim, ndim x u32 dims,
               prod(dims) x f64 payload (NEG_INF stored as IEEE -inf)
    crc32      u32 over every preceding byte
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from bipolar_morph.autograd.tensor import Tensor
from bipolar_morph.errors import DataError, DomainError, ParseError, ShapeError
from bipolar_morph.models.network import DenseParams, LayerParams, NetworkSpec, parse_architecture
from bipolar_morph.morph.bm import BMWeights
from bipolar_morph.utils import setup_logger

logger = setup_logger(__name__)

MAGIC = b"BMNF"
FORMAT_VERSION = 1

KIND_TAGS = {"conv": 1, "fc": 2, "bmconv": 3, "bmfc": 4}
ROLE_TAGS = {"weight": 1, "bias": 2, "V0": 3, "V1": 4}
_KINDS = {tag: kind for kind, tag in KIND_TAGS.items()}
_ROLES = {tag: role for role, tag in ROLE_TAGS.items()}


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (tuple, set)):
        return list(value)
    raise TypeError(f"Metadata value {value!r} is not JSON serializable")


def _tensors(params: LayerParams) -> list[tuple[str, np.ndarray]]:
    if isinstance(params, BMWeights):
        return [("V0", params.V0.data), ("V1", params.V1.data), ("bias", params.bias.data)]
    return [("weight", params.weight.data), ("bias", params.bias.data)]


def model_bytes(net: NetworkSpec) -> bytes:
    """Serialize ``net`` (which must be parameterized) to the model file layout."""
    if not net.is_parameterized:
        raise ValueError("Cannot serialize a network without weights")

    buffer = io.BytesIO()
    arch = net.architecture().encode("utf-8")
    metadata = json.dumps(
        net.metadata, sort_keys=True, separators=(",", ":"), default=_json_default
    ).encode("utf-8")

    buffer.write(MAGIC)
    buffer.write(struct.pack("<H", FORMAT_VERSION))
    buffer.write(struct.pack("<I", len(arch)) + arch)
    buffer.write(struct.pack("<3I", *net.input_shape))
    buffer.write(struct.pack("<I", len(metadata)) + metadata)

    names = net.convertible_layers()
    buffer.write(struct.pack("<I", len(names)))
    for name in names:
        encoded = name.encode("utf-8")
        tensors = _tensors(net.params[name])
        buffer.write(struct.pack("<H", len(encoded)) + encoded)
        buffer.write(struct.pack("<BB", KIND_TAGS[net.layer(name).kind], len(tensors)))
        for role, data in tensors:
            buffer.write(struct.pack("<BB", ROLE_TAGS[role], data.ndim))
            buffer.write(struct.pack(f"<{data.ndim}I", *data.shape))
            buffer.write(np.ascontiguousarray(data, dtype="<f8").tobytes())

    body = buffer.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(net: NetworkSpec, path: str | Path) -> Path:
    """Write ``net`` to ``path``, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_bytes(net))
    logger.info(f"Saved model ({net.architecture()}) to {path}")
    return path


class _Reader:
    """Cursor over the raw bytes that reports truncation with its offset."""

    def __init__(self, raw: bytes, path: Path | None):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.raw):
            raise DataError("truncated model file", self.path, offset=len(self.raw))
        chunk = self.raw[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self, length_fmt: str) -> str:
        (length,) = self.unpack(length_fmt)
        start = self.offset
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataError("invalid UTF-8 string", self.path, offset=start) from e


def model_from_bytes(raw: bytes, path: Path | None = None) -> NetworkSpec:
    """Parse model file bytes; the inverse of ``model_bytes``."""
    reader = _Reader(raw, path)
    if reader.take(4) != MAGIC:
        raise DataError("not a model file (bad magic)", path, offset=0)
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported format version {version}", path, offset=4)

    arch = reader.text("<I")
    input_shape = reader.unpack("<3I")
    metadata_offset = reader.offset
    try:
        metadata = json.loads(reader.text("<I"))
    except json.JSONDecodeError as e:
        raise DataError("corrupt metadata", path, offset=metadata_offset) from e

    try:
        net = parse_architecture(arch, input_shape=input_shape)
    except (ParseError, ShapeError) as e:
        raise DataError(f"stored architecture is invalid: {e}", path) from e
    net.metadata = metadata

    (n_blocks,) = reader.unpack("<I")
    for _ in range(n_blocks):
        block_offset = reader.offset
        name = reader.text("<H")
        kind_tag, n_tensors = reader.unpack("<BB")
        try:
            layer = net.layer(name)
        except KeyError as e:
            raise DataError(f"block for unknown layer {name!r}", path, block_offset) from e
        if _KINDS.get(kind_tag) != layer.kind:
            raise DataError(f"{name}: block kind does not match {layer.kind}", path, block_offset)

        tensors = {}
        for _ in range(n_tensors):
            role_tag, ndim = reader.unpack("<BB")
            dims = reader.unpack(f"<{ndim}I")
            count = int(np.prod(dims))
            payload = reader.take(8 * count)
            role = _ROLES.get(role_tag)
            if role is None:
                raise DataError(f"{name}: unknown tensor role {role_tag}", path, block_offset)
            tensors[role] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
        net.params[name] = _build_params(net, name, tensors, path, block_offset)

    body_end = reader.offset
    (stored_crc,) = reader.unpack("<I")
    if reader.offset != len(raw):
        raise DataError(f"{len(raw) - reader.offset} trailing bytes", path, offset=reader.offset)
    if zlib.crc32(raw[:body_end]) != stored_crc:
        raise DataError("checksum mismatch", path, offset=body_end)
    if not net.is_parameterized:
        missing = [n for n in net.convertible_layers() if n not in net.params]
        raise DataError(f"missing parameter blocks for {missing}", path)
    return net


def _build_params(
    net: NetworkSpec, name: str, tensors: dict[str, np.ndarray], path: Path | None, offset: int
) -> LayerParams:
    geometry = net.geometry(name)
    expected = {"bias": (geometry.out_features,)}
    if net.layer(name).bm:
        expected |= {"V0": geometry.weight_shape, "V1": geometry.weight_shape}
    else:
        expected |= {"weight": geometry.weight_shape}

    if set(tensors) != set(expected):
        raise DataError(f"{name}: expected tensors {sorted(expected)}", path, offset)
    for role, shape in expected.items():
        if tensors[role].shape != tuple(shape):
            raise DataError(
                f"{name}: {role} shape {tensors[role].shape} does not match {tuple(shape)}",
                path,
                offset,
            )

    params: LayerParams
    if net.layer(name).bm:
        try:
            params = BMWeights(
                V0=Tensor(tensors["V0"]),
                V1=Tensor(tensors["V1"]),
                bias=Tensor(tensors["bias"]),
                geometry=geometry,
            )
        except DomainError as e:
            raise DataError(f"{name}: {e}", path, offset) from e
    else:
        params = DenseParams(weight=Tensor(tensors["weight"]), bias=Tensor(tensors["bias"]))
    params.set_trainable(True)
    return params


def load_model(path: str | Path) -> NetworkSpec:
    """Read a model file written by ``save_model``."""
    path = Path(path)
    if not path.exists():
        raise DataError("model file not found", path)
    net = model_from_bytes(path.read_bytes(), path)
    logger.info(f"Loaded model ({net.architecture()}) from {path}")
    return net
