"""Binary weights files.

Layout, all little-endian: the magic ``STWN``, a uint16 format version,
the input shape and class count, a length-prefixed UTF-8 class label
table, then one block per layer holding its kind, its spec as JSON and
its parameter tensors as float32 payloads with explicit dimensions.
The file is self-describing: loading rebuilds the network config from
the layer blocks and verifies every stored tensor against the shapes
that config implies.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import BadMagic, IoFailure, ShapeMismatch, VersionMismatch
from .network import LayerSpec, Network, NetworkConfig

MAGIC = b"STWN"
VERSION = 1


def save_weights(path: str | Path, network: Network, labels: Sequence[str]) -> None:
    """Write a network and its class label table to ``path``."""
    config = network.config
    if len(labels) != config.num_classes:
        raise ShapeMismatch(
            f"label table holds {len(labels)} entries for {config.num_classes} classes"
        )
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", VERSION))
    out.write(struct.pack("<3I", *config.input_shape))
    out.write(struct.pack("<I", config.num_classes))
    out.write(struct.pack("<I", len(labels)))
    for label in labels:
        raw = label.encode("utf-8")
        out.write(struct.pack("<I", len(raw)))
        out.write(raw)
    out.write(struct.pack("<I", len(config.layers)))
    for spec, layer in zip(config.layers, network.layers):
        kind = spec.kind.encode("utf-8")
        out.write(struct.pack("<H", len(kind)))
        out.write(kind)
        payload = dict(spec.to_dict())
        payload.pop("kind")
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        out.write(struct.pack("<I", len(blob)))
        out.write(blob)
        out.write(struct.pack("<I", len(layer.params)))
        for param in layer.params:
            name = param.name.encode("utf-8")
            out.write(struct.pack("<H", len(name)))
            out.write(name)
            value = np.ascontiguousarray(param.value, dtype="<f4")
            out.write(struct.pack("<B", value.ndim))
            out.write(struct.pack(f"<{value.ndim}I", *value.shape))
            out.write(value.tobytes())
    try:
        Path(path).write_bytes(out.getvalue())
    except OSError as exc:
        raise IoFailure(f"cannot write weights to {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, count: int) -> bytes:
        if self._pos + count > len(self._data):
            raise ShapeMismatch(
                f"weights file ends early: wanted {count} bytes at offset {self._pos}"
            )
        chunk = self._data[self._pos : self._pos + count]
        self._pos += count
        return chunk

    def unpack(self, fmt: str):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values if len(values) > 1 else values[0]

    @property
    def leftover(self) -> int:
        return len(self._data) - self._pos


def load_weights(path: str | Path) -> tuple[NetworkConfig, list[list[np.ndarray]], list[str]]:
    """Read a weights file back into (config, per-layer tensors, labels)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read weights from {path}: {exc}") from exc
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"{path} is not a weights file")
    reader = _Reader(data)
    reader.take(4)
    version = reader.unpack("<H")
    if version != VERSION:
        raise VersionMismatch(f"weights format version {version}, expected {VERSION}")
    input_shape = tuple(reader.unpack("<3I"))
    num_classes = reader.unpack("<I")
    label_count = reader.unpack("<I")
    labels = []
    for _ in range(label_count):
        length = reader.unpack("<I")
        labels.append(reader.take(length).decode("utf-8"))
    layer_count = reader.unpack("<I")
    specs = []
    tensors: list[list[np.ndarray]] = []
    for _ in range(layer_count):
        kind = reader.take(reader.unpack("<H")).decode("utf-8")
        payload = json.loads(reader.take(reader.unpack("<I")).decode("utf-8"))
        specs.append(LayerSpec.from_dict({"kind": kind, **payload}))
        group = []
        for _ in range(reader.unpack("<I")):
            reader.take(reader.unpack("<H"))  # param name, informational
            ndim = reader.unpack("<B")
            dims = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
            count = int(np.prod(dims)) if dims else 1
            flat = np.frombuffer(reader.take(4 * count), dtype="<f4")
            group.append(flat.reshape(dims).copy())
        tensors.append(group)
    if reader.leftover:
        raise ShapeMismatch(f"weights file has {reader.leftover} trailing bytes")
    if len(labels) != num_classes:
        raise ShapeMismatch(f"label table holds {len(labels)} entries for {num_classes} classes")
    config = NetworkConfig(input_shape=input_shape, layers=tuple(specs), num_classes=num_classes)
    return config, tensors, labels


def network_from_weights(path: str | Path, dtype=np.float32) -> tuple[Network, list[str]]:
    """Rebuild a runnable network from a weights file."""
    config, tensors, labels = load_weights(path)
    network = Network(config, seed=0, dtype=dtype)
    network.set_layer_params(tensors)
    return network, labels
